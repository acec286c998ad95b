// Loads an image file through the full preprocessing chain and writes its
// residual and ring features in the binary formats.
//
// ```bash
// cargo run --example extract_from_file
// ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srlmad::harness::power_law_texture;
use srlmad::image_io::save_png16;
use srlmad::rings::write_rings;
use srlmad::spectrum::{read_residual, write_residual};
use srlmad::{load_image, FeatureExtractor};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("texture.png");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (pixels, _) = power_law_texture(200, &mut rng);
    save_png16(&path, 200, 200, &pixels)?;

    let img = load_image(&path)?;
    let mean = img.pixels().iter().sum::<f64>() / img.pixels().len() as f64;
    println!("{} resampled to {}x{}, mean {mean:.3}", img.source(), img.height(), img.width());

    let extractor = FeatureExtractor::new(32)?;
    let res = extractor.residual(&img)?;
    let x = extractor.extract(&img)?;

    let srlm = dir.path().join("texture.srlm");
    write_residual(std::io::BufWriter::new(std::fs::File::create(&srlm)?), &res)?;
    let srlr = dir.path().join("texture.srlr");
    write_rings(std::io::BufWriter::new(std::fs::File::create(&srlr)?), &x)?;
    println!("residual: {} bytes, rings: {} bytes", std::fs::metadata(&srlm)?.len(), std::fs::metadata(&srlr)?.len());

    let back = read_residual(std::io::BufReader::new(std::fs::File::open(&srlm)?))?;
    let worst = back.values.iter().zip(&res.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("32 rings x {} slots, residual f32 round-off {worst:.2e}", x.k_max());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
