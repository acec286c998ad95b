// Runs the model forward on one ring tensor and checks an analytic
// gradient entry against a central difference.
//
// ```bash
// cargo run --example model_gradients
// ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srlmad::model::{backward, forward, init_params, TENSOR_NAMES};
use srlmad::RingTensor;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let counts = [4, 8, 8, 6, 8, 5];
    let k_max = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let values = (0..counts.len() * k_max).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = RingTensor::from_counts(&counts, k_max, values)?;
    let params = init_params(&counts, k_max, 4, 11)?;

    let trace = forward(&x, &params)?;
    println!("refined bands {:?}", trace.x_ref);
    println!("latent z = {:+.5}", trace.z_hat);
    println!(
        "loss = {:.6} (ring {:.6} + matrix {:.6})",
        trace.loss_total, trace.loss_ring, trace.loss_matrix
    );

    let grads = backward(&x, &params)?;
    let h = 1e-5;
    for (t, name) in TENSOR_NAMES.iter().enumerate() {
        let analytic = grads.tensors()[t][0];
        let mut plus = params.clone();
        plus.tensors_mut()[t][0] += h;
        let mut minus = params.clone();
        minus.tensors_mut()[t][0] -= h;
        let numeric = (forward(&x, &plus)?.loss_total - forward(&x, &minus)?.loss_total) / (2.0 * h);
        println!("{name:>10}[0]: analytic {analytic:+.6e}  numeric {numeric:+.6e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
