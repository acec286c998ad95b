//! Invariants checked over randomized inputs.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srlmad::image_io::{luminance, resize_bilinear};
use srlmad::model::{backward, forward, init_params, ModelParams};
use srlmad::rings::{azimuthal_average, build_geometry, extract_rings};
use srlmad::scoring::{calibrate, compute_bpcer_at_apcer, compute_eer, LatentCalibration};
use srlmad::spectrum::{bin_radius, compute_residual, dc_position, fit_power_law, log_magnitude, radial_profile, residual_map};
use srlmad::trainer::batch_gradient;
use srlmad::{RingTensor, SpectralImage};

fn random_image(h: usize, w: usize, seed: u64) -> SpectralImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SpectralImage::new(h, w, (0..h * w).map(|_| rng.random()).collect(), "random").unwrap()
}

fn random_toy(seed: u64) -> (Vec<usize>, RingTensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: Vec<usize> = (0..6).map(|_| rng.random_range(1..=8)).collect();
    counts[2] = 8;
    let values = (0..48).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = RingTensor::from_counts(&counts, 8, values).unwrap();
    (counts, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gray_triples_are_fixed_points(v in 0.0f64..=1.0) {
        prop_assert_eq!(luminance(v, v, v), v);
    }

    #[test]
    fn resizing_a_constant_keeps_it(c in 0.0f64..=1.0, sh in 1usize..20, sw in 1usize..20, dh in 1usize..40, dw in 1usize..40) {
        let out = resize_bilinear(&vec![c; sh * sw], sh, sw, dh, dw);
        prop_assert!(out.iter().all(|&v| v == c));
    }

    #[test]
    fn spectrum_ignores_circular_shifts(seed in any::<u64>(), h in 3usize..20, w in 3usize..20, dy in 0usize..20, dx in 0usize..20) {
        let img = random_image(h, w, seed);
        let mut shifted = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                shifted[((r + dy) % h) * w + (c + dx) % w] = img.get(r, c);
            }
        }
        let a = log_magnitude(&img).unwrap();
        let b = log_magnitude(&SpectralImage::new(h, w, shifted, "shifted").unwrap()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn residual_plus_baseline_is_spectrum(seed in any::<u64>(), h in 4usize..24, w in 4usize..24, bands in 2usize..8) {
        let spec = log_magnitude(&random_image(h, w, seed)).unwrap();
        let prof = radial_profile(&spec, bands).unwrap();
        let fit = fit_power_law(&prof.band_radii, &prof.band_means);
        prop_assume!(fit.is_ok());
        let fit = fit.unwrap();
        let res = residual_map(&spec, &fit).unwrap();
        for r in 0..h {
            for c in 0..w {
                if (r, c) == spec.dc {
                    prop_assert_eq!(res.get(r, c), 0.0);
                } else {
                    let back = res.get(r, c) + fit.baseline(bin_radius(r, c, spec.dc));
                    prop_assert!((back - spec.get(r, c)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn residual_is_per_image(seed in any::<u64>(), other in any::<u64>()) {
        let img = random_image(16, 16, seed);
        let alone = compute_residual(&img, 4).unwrap();
        let _neighbour = compute_residual(&random_image(16, 16, other), 4).unwrap();
        let again = compute_residual(&img, 4).unwrap();
        prop_assert_eq!(alone, again);
    }

    #[test]
    fn rings_partition_mask_and_average(seed in any::<u64>(), h in 4usize..34, w in 4usize..34, rings in 1usize..6) {
        let dc = dc_position(h, w);
        let geo = match build_geometry(h, w, dc, rings) {
            Ok(g) => g,
            Err(_) => return Ok(()),
        };
        prop_assert_eq!(&geo, &build_geometry(h, w, dc, rings).unwrap());
        let assigned = geo.assignments();
        let mut seen = std::collections::HashSet::new();
        for (bin, slot) in assigned.iter().enumerate() {
            match slot {
                None => prop_assert_eq!(bin, dc.0 * w + dc.1),
                Some(s) => prop_assert!(seen.insert(*s)),
            }
        }
        prop_assert_eq!(seen.len(), h * w - 1);

        let res = compute_residual(&random_image(h, w, seed), rings.max(2)).unwrap();
        let x = extract_rings(&res, &geo).unwrap();
        for (v, &m) in x.values().iter().zip(x.mask()) {
            if m == 0 {
                prop_assert_eq!(*v, 0.0);
            }
        }
        for (a, b) in x.row_means().iter().zip(azimuthal_average(&res, &geo)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn reconstruction_rows_follow_template(seed in any::<u64>()) {
        let (counts, x) = random_toy(seed);
        let p = init_params(&counts, 8, 4, seed).unwrap();
        let t = forward(&x, &p).unwrap();
        for r in 0..6 {
            for k in 0..8 {
                prop_assert_eq!(t.x_hat[r * 8 + k], t.x_ring_hat[r] * p.template[r * 8 + k]);
            }
        }
        prop_assert_eq!(t.loss_total, t.loss_ring + t.loss_matrix);
    }

    #[test]
    fn small_step_reduces_sample_loss(seed in any::<u64>()) {
        let (counts, x) = random_toy(seed);
        let mut p = init_params(&counts, 8, 4, seed).unwrap();
        let before = forward(&x, &p).unwrap().loss_total;
        let g = backward(&x, &p).unwrap();
        let norm2: f64 = g.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum();
        prop_assume!(norm2 > 1e-12);
        let lr = 1e-4;
        for (pt, gt) in p.tensors_mut().into_iter().zip(g.tensors()) {
            for (v, d) in pt.iter_mut().zip(gt) {
                *v -= lr * d;
            }
        }
        let after = forward(&x, &p).unwrap().loss_total;
        prop_assert!(after < before, "{} -> {}", before, after);
    }

    #[test]
    fn batch_gradient_ignores_sample_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = vec![3, 8, 5, 6, 2, 7];
        let batch: Vec<RingTensor> = (0..6)
            .map(|_| RingTensor::from_counts(&counts, 8, (0..48).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let p = init_params(&counts, 8, 3, seed).unwrap();
        let fwd: Vec<&RingTensor> = batch.iter().collect();
        let rev: Vec<&RingTensor> = batch.iter().rev().collect();
        let mut ga = ModelParams::zeros(p.shape.clone());
        let mut gb = ModelParams::zeros(p.shape.clone());
        batch_gradient(&fwd, &p, &mut ga).unwrap();
        batch_gradient(&rev, &p, &mut gb).unwrap();
        for (a, b) in ga.tensors().iter().zip(gb.tensors()) {
            for (u, v) in a.iter().zip(b.iter()) {
                prop_assert!((u - v).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn scores_are_symmetric_and_nonnegative(mu in -5.0f64..5.0, sigma in 1e-6f64..3.0, d in -10.0f64..10.0) {
        let cal = LatentCalibration { mu, sigma };
        prop_assert!(cal.score(mu + d) >= 0.0);
        prop_assert!((cal.score(mu + d) - cal.score(mu - d)).abs() <= 1e-12 * (1.0 + d.abs() / sigma));
    }

    #[test]
    fn metrics_survive_monotone_maps(
        bona in prop::collection::vec(0.0f64..10.0, 1..40),
        atk in prop::collection::vec(0.0f64..10.0, 1..40),
    ) {
        let map = |v: &[f64]| v.iter().map(|s| s.powi(3) + 2.0 * s).collect::<Vec<_>>();
        let (e0, _) = compute_eer(&bona, &atk).unwrap();
        let (e1, _) = compute_eer(&map(&bona), &map(&atk)).unwrap();
        prop_assert!((e0 - e1).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&e0));
        for t in [0.05, 0.10] {
            prop_assert_eq!(
                compute_bpcer_at_apcer(&bona, &atk, t).unwrap(),
                compute_bpcer_at_apcer(&map(&bona), &map(&atk), t).unwrap()
            );
        }
    }
}

#[test]
fn calibration_of_normal_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let z: Vec<f64> = (0..1000).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let cal = calibrate(&z).unwrap();
    assert!(cal.mu.abs() <= 0.1, "mu {}", cal.mu);
    assert!((0.9..=1.1).contains(&cal.sigma), "sigma {}", cal.sigma);
}
