// Removes the power-law trend from the log-magnitude spectrum of a
// synthetic texture.
//
// ```bash
// cargo run --example residual_spectrum
// ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srlmad::harness::power_law_texture;
use srlmad::spectrum::{fit_power_law, log_magnitude, radial_profile, residual_map};
use srlmad::SpectralImage;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let size = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (pixels, alpha) = power_law_texture(size, &mut rng);
    let img = SpectralImage::new(size, size, pixels, "texture")?;

    let spec = log_magnitude(&img)?;
    let profile = radial_profile(&spec, 16)?;
    let fit = fit_power_law(&profile.band_radii, &profile.band_means)?;
    let res = residual_map(&spec, &fit)?;

    println!("texture exponent {alpha:.3}, dc at {:?}", spec.dc);
    println!("log-spectrum fit: a = {:.3}, b = {:.3}", fit.intercept, fit.slope);
    for (band, (r, m)) in profile.band_radii.iter().zip(&profile.band_means).enumerate().step_by(4) {
        println!("band {band:2}: r = {r:6.2}  mean = {m:.3}  baseline = {:.3}", fit.baseline(*r));
    }
    let mean_abs = res.values.iter().map(|v| v.abs()).sum::<f64>() / res.values.len() as f64;
    println!("mean |residual| = {mean_abs:.4}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
