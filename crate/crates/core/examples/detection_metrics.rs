// EER, BPCER at fixed APCER, and DET points from two score lists.
//
// ```bash
// cargo run --example detection_metrics
// ```

use srlmad::scoring::{calibrate, compute_bpcer_at_apcer, compute_eer, det_points};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let bona_latents = [0.10, -0.05, 0.02, 0.08, -0.11, 0.04, -0.02, 0.06];
    let cal = calibrate(&bona_latents)?;
    println!("calibration mu = {:+.4}, sigma = {:.4}", cal.mu, cal.sigma);

    let bona: Vec<f64> = [0.03, -0.07, 0.12, 0.00, -0.15, 0.09].iter().map(|&z| cal.score(z)).collect();
    let attack: Vec<f64> = [0.35, -0.40, 0.22, 0.05, 0.60, -0.28].iter().map(|&z| cal.score(z)).collect();

    let (eer, tau) = compute_eer(&bona, &attack)?;
    println!("EER = {:.2}% at score {tau:.3}", 100.0 * eer);
    for target in [0.05, 0.10, 0.20] {
        let b = compute_bpcer_at_apcer(&bona, &attack, target)?;
        println!("BPCER at APCER {:>4.0}% = {:.2}%", 100.0 * target, 100.0 * b);
    }
    println!("threshold,apcer,bpcer");
    for (t, a, b) in det_points(&bona, &attack)? {
        println!("{t:.3},{a:.3},{b:.3}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
