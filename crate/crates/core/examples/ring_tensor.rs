// Lays a residual spectrum out ring by ring into a padded, masked matrix.
//
// ```bash
// cargo run --example ring_tensor
// ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srlmad::harness::power_law_texture;
use srlmad::rings::{azimuthal_average, read_rings, write_rings};
use srlmad::{FeatureExtractor, SpectralImage};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let size = 64;
    let extractor = FeatureExtractor::with_size(size, size, 8)?;
    let geo = extractor.geometry();
    println!("{} rings around dc {:?}, k_max = {}", geo.num_rings(), geo.dc(), geo.k_max());
    println!("bins per ring: {:?}", geo.counts());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (pixels, _) = power_law_texture(size, &mut rng);
    let img = SpectralImage::new(size, size, pixels, "texture")?;
    let res = extractor.residual(&img)?;
    let x = extractor.extract(&img)?;
    println!("{} valid of {} slots", x.mask_sum(), x.rings() * x.k_max());
    for (r, m) in azimuthal_average(&res, geo).iter().enumerate() {
        println!("ring {r}: first bin {:+.3}, mean {m:+.3}", x.x(r, 0));
    }

    let mut buf = Vec::new();
    write_rings(&mut buf, &x)?;
    let back = read_rings(buf.as_slice())?;
    println!("SRLR record: {} bytes, masks equal: {}", buf.len(), back.mask() == x.mask());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
