// Trains on ring tensors of in-memory textures and scores sharp textures
// against blurred blends.
//
// ```bash
// cargo run --release --example train_in_memory
// ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srlmad::harness::{blend, gaussian_blur, power_law_texture};
use srlmad::model::forward;
use srlmad::scoring::{compute_bpcer_at_apcer, compute_eer};
use srlmad::trainer::{calibrate_on, train_tensors};
use srlmad::{FeatureExtractor, RingTensor, SpectralImage, TrainConfig};

const SIZE: usize = 64;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let extractor = FeatureExtractor::with_size(SIZE, SIZE, 12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let textures: Vec<Vec<f64>> = (0..72).map(|_| power_law_texture(SIZE, &mut rng).0).collect();
    let tensor = |px: Vec<f64>| -> srlmad::Result<RingTensor> {
        extractor.extract(&SpectralImage::new(SIZE, SIZE, px, "texture")?)
    };

    let train: Vec<RingTensor> = textures[..40].iter().cloned().map(tensor).collect::<Result<_, _>>()?;
    let val: Vec<RingTensor> = textures[40..48].iter().cloned().map(tensor).collect::<Result<_, _>>()?;
    let config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        epochs: 30,
        num_rings: 12,
        ..TrainConfig::default()
    };
    let outcome = train_tensors(&train, &val, &extractor.geometry().counts(), &config)?;
    for rec in outcome.state.history.iter().step_by(5) {
        println!("epoch {:2}: train {:.5}  val {:.5}", rec.epoch, rec.train_loss, rec.val_loss.unwrap_or(f64::NAN));
    }

    let params = &outcome.best_params;
    let cal = calibrate_on(&train, params)?;
    let mut bona = Vec::new();
    let mut attack = Vec::new();
    for pair in textures[48..].chunks(2) {
        for px in pair {
            bona.push(cal.score(forward(&tensor(px.clone())?, params)?.z_hat));
        }
        let mixed = blend(&pair[0], &pair[1], 0.5)?;
        let blurred = gaussian_blur(SIZE, SIZE, &mixed, 2.0);
        attack.push(cal.score(forward(&tensor(blurred)?, params)?.z_hat));
    }
    let (eer, _) = compute_eer(&bona, &attack)?;
    let bpcer = compute_bpcer_at_apcer(&bona, &attack, 0.10)?;
    println!("{} bona fide, {} attacks", bona.len(), attack.len());
    println!("EER {:.2}%, BPCER@APCER=10% {:.2}%", 100.0 * eer, 100.0 * bpcer);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
