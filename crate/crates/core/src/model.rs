//! The learnable part of the detector.
//!
//! ```text
//! X (R x K_max, mask M)
//!   -> ring projection       x_ring[r] = sum_k W[r,k] X[r,k] M[r,k] + b[r]
//!   -> band refinement       x_ref = [w_low . x_low + b0, w_mid . x_mid + b1, w_high . x_high + b2]
//!   -> encoder               z = w2 . tanh(W1^T x_ref + b1) + b2
//!   -> decoder               x_ring_hat = W2^T tanh(w1 z + b1) + b2
//!   -> template              X_hat[r,k] = x_ring_hat[r] T[r,k]
//! loss = |x_ring_hat - x_ring|^2 + |(X_hat - X) * M|^2 / sum(M)
//! ```
//!
//! Gradients are analytic. Padded slots (`M = 0`) are skipped outright, so
//! whatever they hold never reaches the forward pass and the projection and
//! template gradients there are exactly zero.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rings::RingTensor;

/// Hidden width of the encoder and decoder.
pub const DEFAULT_HIDDEN: usize = 8;

/// Splits `0..rings` into low, mid and high bands of sizes
/// `ceil(R/3)`, `ceil((R - ceil(R/3))/2)` and the remainder.
pub fn band_split(rings: usize) -> Result<[Range<usize>; 3]> {
    if rings < 3 {
        return Err(Error::Config(format!("band refinement needs >= 3 rings, got {rings}")));
    }
    let low = rings.div_ceil(3);
    let mid = (rings - low).div_ceil(2);
    Ok([0..low, low..low + mid, low + mid..rings])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelShape {
    pub rings: usize,
    pub k_max: usize,
    pub hidden: usize,
    pub bands: [Range<usize>; 3],
}

impl ModelShape {
    pub fn new(rings: usize, k_max: usize, hidden: usize) -> Result<Self> {
        if k_max == 0 || hidden == 0 {
            return Err(Error::Config(format!("k_max ({k_max}) and hidden ({hidden}) must be positive")));
        }
        Ok(Self {
            rings,
            k_max,
            hidden,
            bands: band_split(rings)?,
        })
    }
}

/// Names of the parameter tensors in storage order.
pub const TENSOR_NAMES: [&str; 15] = [
    "w_proj", "b_proj", "w_low", "w_mid", "w_high", "b_band", "enc_w1", "enc_b1", "enc_w2", "enc_b2",
    "dec_w1", "dec_b1", "dec_w2", "dec_b2", "template",
];

/// All learnable parameters. The same type carries gradients and Adam
/// moments.
///
/// Matrix layouts are row-major: `w_proj` and `template` are `R x K_max`,
/// `enc_w1` is `3 x h`, `dec_w2` is `h x R`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub shape: ModelShape,
    pub w_proj: Vec<f64>,
    pub b_proj: Vec<f64>,
    pub w_low: Vec<f64>,
    pub w_mid: Vec<f64>,
    pub w_high: Vec<f64>,
    pub b_band: Vec<f64>,
    pub enc_w1: Vec<f64>,
    pub enc_b1: Vec<f64>,
    pub enc_w2: Vec<f64>,
    pub enc_b2: Vec<f64>,
    pub dec_w1: Vec<f64>,
    pub dec_b1: Vec<f64>,
    pub dec_w2: Vec<f64>,
    pub dec_b2: Vec<f64>,
    pub template: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(shape: ModelShape) -> Self {
        let (r, k, h) = (shape.rings, shape.k_max, shape.hidden);
        let [lo, mi, hi] = shape.bands.clone();
        Self {
            w_proj: vec![0.0; r * k],
            b_proj: vec![0.0; r],
            w_low: vec![0.0; lo.len()],
            w_mid: vec![0.0; mi.len()],
            w_high: vec![0.0; hi.len()],
            b_band: vec![0.0; 3],
            enc_w1: vec![0.0; 3 * h],
            enc_b1: vec![0.0; h],
            enc_w2: vec![0.0; h],
            enc_b2: vec![0.0; 1],
            dec_w1: vec![0.0; h],
            dec_b1: vec![0.0; h],
            dec_w2: vec![0.0; h * r],
            dec_b2: vec![0.0; r],
            template: vec![0.0; r * k],
            shape,
        }
    }

    pub fn tensors(&self) -> [&[f64]; 15] {
        [
            &self.w_proj,
            &self.b_proj,
            &self.w_low,
            &self.w_mid,
            &self.w_high,
            &self.b_band,
            &self.enc_w1,
            &self.enc_b1,
            &self.enc_w2,
            &self.enc_b2,
            &self.dec_w1,
            &self.dec_b1,
            &self.dec_w2,
            &self.dec_b2,
            &self.template,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 15] {
        [
            &mut self.w_proj,
            &mut self.b_proj,
            &mut self.w_low,
            &mut self.w_mid,
            &mut self.w_high,
            &mut self.b_band,
            &mut self.enc_w1,
            &mut self.enc_b1,
            &mut self.enc_w2,
            &mut self.enc_b2,
            &mut self.dec_w1,
            &mut self.dec_b1,
            &mut self.dec_w2,
            &mut self.dec_b2,
            &mut self.template,
        ]
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Rounds every parameter to `f32` precision, the precision checkpoints
    /// store.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    fn band_weights(&self, band: usize) -> &[f64] {
        match band {
            0 => &self.w_low,
            1 => &self.w_mid,
            _ => &self.w_high,
        }
    }
}

/// Deterministic initialization.
///
/// The projection starts as an azimuthal average (`1/K_r` per valid slot),
/// band weights as band means, the template as all ones; each gets uniform
/// noise of relative size `0.01 * noise_scale`. Encoder and decoder use
/// Glorot-uniform weights; biases start at zero.
pub fn init_params_scaled(
    counts: &[usize],
    k_max: usize,
    hidden: usize,
    seed: u64,
    noise_scale: f64,
) -> Result<ModelParams> {
    let shape = ModelShape::new(counts.len(), k_max, hidden)?;
    if let Some((r, _)) = counts.iter().enumerate().find(|(_, &n)| n == 0 || n > k_max) {
        return Err(Error::Dimension(format!("ring {r} count {} not in 1..={k_max}", counts[r])));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sym = move || rng.random::<f64>() * 2.0 - 1.0;
    let mut p = ModelParams::zeros(shape);
    let rings = counts.len();

    for (r, &n) in counts.iter().enumerate() {
        let base = 1.0 / n as f64;
        for k in 0..n {
            p.w_proj[r * k_max + k] = base + 0.01 * noise_scale * base * sym();
        }
    }
    for band in 0..3 {
        let len = p.shape.bands[band].len();
        let base = 1.0 / len as f64;
        let weights: Vec<f64> = (0..len).map(|_| base + 0.01 * noise_scale * base * sym()).collect();
        match band {
            0 => p.w_low = weights,
            1 => p.w_mid = weights,
            _ => p.w_high = weights,
        }
    }
    let mut glorot = |t: &mut [f64], fan_in: usize, fan_out: usize| {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in t.iter_mut() {
            *v = limit * sym();
        }
    };
    glorot(&mut p.enc_w1, 3, hidden);
    glorot(&mut p.enc_w2, hidden, 1);
    glorot(&mut p.dec_w1, 1, hidden);
    glorot(&mut p.dec_w2, hidden, rings);
    for (r, &n) in counts.iter().enumerate() {
        for k in 0..n {
            p.template[r * k_max + k] = 1.0 + 0.01 * noise_scale * sym();
        }
    }
    Ok(p)
}

pub fn init_params(counts: &[usize], k_max: usize, hidden: usize, seed: u64) -> Result<ModelParams> {
    init_params_scaled(counts, k_max, hidden, seed, 1.0)
}

fn check_dims(x: &RingTensor, shape: &ModelShape) -> Result<()> {
    if x.rings() != shape.rings || x.k_max() != shape.k_max {
        return Err(Error::Dimension(format!(
            "ring tensor {}x{} vs model {}x{}",
            x.rings(),
            x.k_max(),
            shape.rings,
            shape.k_max
        )));
    }
    Ok(())
}

fn check_finite(stage: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::numeric(stage, format!("non-finite value at index {i}"))),
        None => Ok(()),
    }
}

/// Masked per-ring dot product with the projection kernels.
pub fn ring_projection(x: &RingTensor, params: &ModelParams) -> Result<Vec<f64>> {
    check_dims(x, &params.shape)?;
    let k_max = params.shape.k_max;
    let out: Vec<f64> = (0..params.shape.rings)
        .map(|r| {
            let mut acc = params.b_proj[r];
            for k in 0..k_max {
                if x.m(r, k) {
                    acc += params.w_proj[r * k_max + k] * x.x(r, k);
                }
            }
            acc
        })
        .collect();
    check_finite("ring_projection", &out)?;
    Ok(out)
}

pub fn band_refine(x_ring: &[f64], params: &ModelParams) -> Result<[f64; 3]> {
    if x_ring.len() != params.shape.rings {
        return Err(Error::Dimension(format!(
            "x_ring has {} entries, model has {} rings",
            x_ring.len(),
            params.shape.rings
        )));
    }
    let mut out = [0.0; 3];
    for (band, range) in params.shape.bands.iter().enumerate() {
        let w = params.band_weights(band);
        out[band] = params.b_band[band]
            + w.iter().zip(&x_ring[range.clone()]).map(|(a, b)| a * b).sum::<f64>();
    }
    check_finite("band_refine", &out)?;
    Ok(out)
}

fn encoder_hidden(x_ref: &[f64; 3], params: &ModelParams) -> Vec<f64> {
    let h = params.shape.hidden;
    (0..h)
        .map(|j| {
            let a = params.enc_b1[j] + (0..3).map(|i| params.enc_w1[i * h + j] * x_ref[i]).sum::<f64>();
            a.tanh()
        })
        .collect()
}

fn decoder_hidden(z: f64, params: &ModelParams) -> Vec<f64> {
    (0..params.shape.hidden)
        .map(|j| (params.dec_w1[j] * z + params.dec_b1[j]).tanh())
        .collect()
}

fn decoder_output(hidden: &[f64], params: &ModelParams) -> Vec<f64> {
    let rings = params.shape.rings;
    let mut out = params.dec_b2.clone();
    for (j, &hj) in hidden.iter().enumerate() {
        for (r, o) in out.iter_mut().enumerate() {
            *o += params.dec_w2[j * rings + r] * hj;
        }
    }
    out
}

/// One-dimensional latent code of a refined descriptor.
pub fn encode(x_ref: &[f64; 3], params: &ModelParams) -> Result<f64> {
    let hidden = encoder_hidden(x_ref, params);
    let z = params.enc_b2[0] + hidden.iter().zip(&params.enc_w2).map(|(a, b)| a * b).sum::<f64>();
    check_finite("encode", &[z])?;
    Ok(z)
}

/// Ring-level reconstruction from the latent.
pub fn decode(z: f64, params: &ModelParams) -> Result<Vec<f64>> {
    let out = decoder_output(&decoder_hidden(z, params), params);
    check_finite("decode", &out)?;
    Ok(out)
}

/// `X_hat[r,k] = x_ring_hat[r] * T[r,k]`.
pub fn reconstruct_matrix(x_ring_hat: &[f64], template: &[f64], k_max: usize) -> Vec<f64> {
    assert_eq!(template.len(), x_ring_hat.len() * k_max);
    template
        .chunks_exact(k_max)
        .zip(x_ring_hat)
        .flat_map(|(row, &s)| row.iter().map(move |t| s * t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub ring: f64,
    pub matrix: f64,
    pub total: f64,
}

/// Ring-level squared error plus mask-normalized matrix squared error.
pub fn loss(x: &RingTensor, x_ring: &[f64], x_ring_hat: &[f64], x_hat: &[f64]) -> Result<LossTerms> {
    if x_ring.len() != x.rings() || x_ring_hat.len() != x.rings() || x_hat.len() != x.values().len() {
        return Err(Error::Dimension("loss inputs disagree in shape".into()));
    }
    let mask_sum = x.mask_sum();
    if mask_sum == 0 {
        return Err(Error::DegenerateMask);
    }
    let ring: f64 = x_ring_hat.iter().zip(x_ring).map(|(a, b)| (a - b) * (a - b)).sum();
    let mut sq = 0.0;
    for (i, (&xh, &xv)) in x_hat.iter().zip(x.values()).enumerate() {
        if x.mask()[i] == 1 {
            sq += (xh - xv) * (xh - xv);
        }
    }
    let matrix = sq / mask_sum as f64;
    let total = ring + matrix;
    check_finite("loss", &[total])?;
    Ok(LossTerms { ring, matrix, total })
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub x_ring: Vec<f64>,
    pub x_ref: [f64; 3],
    pub z_hat: f64,
    pub x_ring_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub loss_ring: f64,
    pub loss_matrix: f64,
    pub loss_total: f64,
}

pub fn forward(x: &RingTensor, params: &ModelParams) -> Result<ForwardTrace> {
    let x_ring = ring_projection(x, params)?;
    let x_ref = band_refine(&x_ring, params)?;
    let z_hat = encode(&x_ref, params)?;
    let x_ring_hat = decode(z_hat, params)?;
    let x_hat = reconstruct_matrix(&x_ring_hat, &params.template, params.shape.k_max);
    let l = loss(x, &x_ring, &x_ring_hat, &x_hat)?;
    Ok(ForwardTrace {
        x_ring,
        x_ref,
        z_hat,
        x_ring_hat,
        x_hat,
        loss_ring: l.ring,
        loss_matrix: l.matrix,
        loss_total: l.total,
    })
}

/// Latent code only.
pub fn latent(x: &RingTensor, params: &ModelParams) -> Result<f64> {
    let x_ring = ring_projection(x, params)?;
    encode(&band_refine(&x_ring, params)?, params)
}

/// Loss without materializing `X_hat`.
pub fn forward_loss(x: &RingTensor, params: &ModelParams) -> Result<LossTerms> {
    let x_ring = ring_projection(x, params)?;
    let z = encode(&band_refine(&x_ring, params)?, params)?;
    let x_ring_hat = decode(z, params)?;
    let mask_sum = x.mask_sum();
    if mask_sum == 0 {
        return Err(Error::DegenerateMask);
    }
    let k_max = params.shape.k_max;
    let ring: f64 = x_ring_hat.iter().zip(&x_ring).map(|(a, b)| (a - b) * (a - b)).sum();
    let mut sq = 0.0;
    for r in 0..params.shape.rings {
        for k in 0..k_max {
            if x.m(r, k) {
                let e = x_ring_hat[r] * params.template[r * k_max + k] - x.x(r, k);
                sq += e * e;
            }
        }
    }
    let matrix = sq / mask_sum as f64;
    let total = ring + matrix;
    check_finite("loss", &[total])?;
    Ok(LossTerms { ring, matrix, total })
}

/// Gradient of the sample loss, added into `grads` after scaling by
/// `scale`. Returns the sample's loss terms.
pub fn accumulate_gradients(
    x: &RingTensor,
    params: &ModelParams,
    grads: &mut ModelParams,
    scale: f64,
) -> Result<LossTerms> {
    check_dims(x, &params.shape)?;
    if grads.shape != params.shape {
        return Err(Error::Dimension("gradient buffer shape differs from params".into()));
    }
    let ModelShape {
        rings,
        k_max,
        hidden,
        ..
    } = params.shape.clone();
    let mask_sum = x.mask_sum();
    if mask_sum == 0 {
        return Err(Error::DegenerateMask);
    }
    let inv_m = 1.0 / mask_sum as f64;

    // forward, keeping what the backward pass needs
    let x_ring = ring_projection(x, params)?;
    let x_ref = band_refine(&x_ring, params)?;
    let h_enc = encoder_hidden(&x_ref, params);
    let z = params.enc_b2[0] + h_enc.iter().zip(&params.enc_w2).map(|(a, b)| a * b).sum::<f64>();
    check_finite("encode", &[z])?;
    let h_dec = decoder_hidden(z, params);
    let x_ring_hat = decoder_output(&h_dec, params);
    check_finite("decode", &x_ring_hat)?;

    // loss and d/d(template), d/d(x_ring_hat)
    let mut d_xr_hat = vec![0.0; rings];
    let mut d_x_ring = vec![0.0; rings];
    let mut ring_loss = 0.0;
    for r in 0..rings {
        let diff = x_ring_hat[r] - x_ring[r];
        ring_loss += diff * diff;
        d_xr_hat[r] = 2.0 * diff;
        d_x_ring[r] = -2.0 * diff;
    }
    let mut sq = 0.0;
    for r in 0..rings {
        let s = x_ring_hat[r];
        let mut acc = 0.0;
        for k in 0..k_max {
            if !x.m(r, k) {
                continue;
            }
            let i = r * k_max + k;
            let t = params.template[i];
            let e = s * t - x.x(r, k);
            sq += e * e;
            let de = 2.0 * e * inv_m;
            acc += de * t;
            grads.template[i] += scale * de * s;
        }
        d_xr_hat[r] += acc;
    }
    let matrix_loss = sq * inv_m;
    let total = ring_loss + matrix_loss;
    check_finite("loss", &[total])?;
    check_finite("backward/template", &d_xr_hat)?;

    // decoder
    let mut d_z = 0.0;
    for j in 0..hidden {
        let mut d_h = 0.0;
        for r in 0..rings {
            grads.dec_w2[j * rings + r] += scale * h_dec[j] * d_xr_hat[r];
            d_h += params.dec_w2[j * rings + r] * d_xr_hat[r];
        }
        let d_a = d_h * (1.0 - h_dec[j] * h_dec[j]);
        grads.dec_b1[j] += scale * d_a;
        grads.dec_w1[j] += scale * z * d_a;
        d_z += params.dec_w1[j] * d_a;
    }
    for r in 0..rings {
        grads.dec_b2[r] += scale * d_xr_hat[r];
    }

    // encoder
    grads.enc_b2[0] += scale * d_z;
    let mut d_ref = [0.0; 3];
    for j in 0..hidden {
        grads.enc_w2[j] += scale * h_enc[j] * d_z;
        let d_a = params.enc_w2[j] * d_z * (1.0 - h_enc[j] * h_enc[j]);
        grads.enc_b1[j] += scale * d_a;
        for i in 0..3 {
            grads.enc_w1[i * hidden + j] += scale * x_ref[i] * d_a;
            d_ref[i] += params.enc_w1[i * hidden + j] * d_a;
        }
    }
    check_finite("backward/encoder", &d_ref)?;

    // bands
    for band in 0..3 {
        grads.b_band[band] += scale * d_ref[band];
        let range = params.shape.bands[band].clone();
        let start = range.start;
        for r in range {
            let w = params.band_weights(band)[r - start];
            let g = match band {
                0 => &mut grads.w_low,
                1 => &mut grads.w_mid,
                _ => &mut grads.w_high,
            };
            g[r - start] += scale * x_ring[r] * d_ref[band];
            d_x_ring[r] += w * d_ref[band];
        }
    }

    // projection
    for r in 0..rings {
        grads.b_proj[r] += scale * d_x_ring[r];
        for k in 0..k_max {
            if x.m(r, k) {
                grads.w_proj[r * k_max + k] += scale * x.x(r, k) * d_x_ring[r];
            }
        }
    }
    check_finite("backward/projection", &d_x_ring)?;

    Ok(LossTerms {
        ring: ring_loss,
        matrix: matrix_loss,
        total,
    })
}

/// Analytic gradient of one sample's total loss.
pub fn backward(x: &RingTensor, params: &ModelParams) -> Result<ModelParams> {
    let mut grads = ModelParams::zeros(params.shape.clone());
    accumulate_gradients(x, params, &mut grads, 1.0)?;
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(rings: usize, k_max: usize, hidden: usize) -> ModelShape {
        ModelShape::new(rings, k_max, hidden).unwrap()
    }

    #[test]
    fn band_split_sizes() {
        let sizes = |r| band_split(r).unwrap().map(|b| b.len());
        assert_eq!(sizes(32), [11, 11, 10]);
        assert_eq!(sizes(6), [2, 2, 2]);
        assert_eq!(sizes(3), [1, 1, 1]);
        assert_eq!(sizes(7), [3, 2, 2]);
        assert_eq!(sizes(16), [6, 5, 5]);
        assert!(band_split(2).is_err());
    }

    #[test]
    fn projection_with_inverse_counts_is_azimuthal_average() {
        let counts = [2, 4, 3];
        let x = RingTensor::from_counts(&counts, 4, (0..12).map(|v| v as f64 * 0.5 - 1.0).collect()).unwrap();
        let p = init_params_scaled(&counts, 4, 2, 1, 0.0).unwrap();
        let xr = ring_projection(&x, &p).unwrap();
        for (a, b) in xr.iter().zip(x.row_means()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_of_zero_input_is_bias() {
        let mut p = ModelParams::zeros(shape(3, 4, 2));
        p.w_proj.iter_mut().for_each(|w| *w = 0.3);
        p.b_proj = vec![0.1, -0.2, 0.7];
        let x = RingTensor::from_counts(&[1, 2, 4], 4, vec![0.0; 12]).unwrap();
        assert_eq!(ring_projection(&x, &p).unwrap(), p.b_proj);
    }

    #[test]
    fn projection_hand_case() {
        // R=3, K_max=4, counts [2, 4, 3]
        let mut p = ModelParams::zeros(shape(3, 4, 2));
        p.w_proj = vec![
            0.5, -1.0, 9.0, 9.0, //
            1.0, 2.0, 3.0, 4.0, //
            -0.5, 0.25, 2.0, 9.0,
        ];
        p.b_proj = vec![0.0, 1.0, -1.0];
        let x = RingTensor::from_counts(
            &[2, 4, 3],
            4,
            vec![2.0, 1.0, 0.0, 0.0, 1.0, 1.0, -1.0, 0.5, 4.0, -4.0, 0.5, 0.0],
        )
        .unwrap();
        let xr = ring_projection(&x, &p).unwrap();
        // 0.5*2 - 1*1 = 0; 1+2-3+2 +1 = 3; -2 -1 +1 -1 = -3
        assert_eq!(xr, vec![0.0, 3.0, -3.0]);
    }

    #[test]
    fn band_refine_cases() {
        let mut p = ModelParams::zeros(shape(6, 1, 1));
        p.w_low = vec![0.5, 0.5];
        p.w_mid = vec![0.5, 0.5];
        p.w_high = vec![0.5, 0.5];
        let xr = [1.0, 3.0, -2.0, 2.0, 10.0, 20.0];
        assert_eq!(band_refine(&xr, &p).unwrap(), [2.0, 0.0, 15.0]);

        p.b_band = vec![0.1, 0.2, 0.3];
        assert_eq!(band_refine(&[0.0; 6], &p).unwrap(), [0.1, 0.2, 0.3]);

        p.w_low = vec![2.0, -1.0];
        p.w_mid = vec![0.0, 3.0];
        p.w_high = vec![1.0, 0.5];
        p.b_band = vec![0.0; 3];
        // 2 - 3 = -1; 0 + 6 = 6; 10 + 10 = 20
        assert_eq!(band_refine(&xr, &p).unwrap(), [-1.0, 6.0, 20.0]);
    }

    #[test]
    fn encode_cases() {
        let mut p = ModelParams::zeros(shape(3, 1, 2));
        p.enc_b2 = vec![0.75];
        assert_eq!(encode(&[4.0, -2.0, 1.0], &p).unwrap(), 0.75);

        p.enc_w2 = vec![1.0, -2.0];
        assert_eq!(encode(&[4.0, -2.0, 1.0], &p).unwrap(), 0.75);

        // enc_w1 is 3 x 2, row-major
        p.enc_w1 = vec![0.5, -1.0, 0.2, 0.3, 1.5, 0.25];
        p.enc_b1 = vec![0.1, -0.1];
        let x = [1.0, 0.0, -1.0];
        let h0 = (0.5 * 1.0 - 1.5 + 0.1f64).tanh();
        let h1 = (-1.0 - 0.25 - 0.1f64).tanh();
        let expect = 0.75 + h0 - 2.0 * h1;
        assert!((encode(&x, &p).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn decode_cases() {
        let mut p = ModelParams::zeros(shape(3, 1, 2));
        p.dec_b2 = vec![1.0, 2.0, 3.0];
        assert_eq!(decode(5.0, &p).unwrap(), vec![1.0, 2.0, 3.0]);

        p.dec_w1 = vec![0.4, -0.7];
        p.dec_w2 = vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0];
        // zero latent, zero hidden bias: tanh(0) = 0
        assert_eq!(decode(0.0, &p).unwrap(), vec![1.0, 2.0, 3.0]);

        p.dec_b1 = vec![0.2, 0.0];
        let z = 1.5;
        let h0 = (0.4 * z + 0.2f64).tanh();
        let h1 = (-0.7 * z).tanh();
        let out = decode(z, &p).unwrap();
        let expect = [1.0 + h0 - h1, 2.0 + 2.0 * h0 + 0.5 * h1, 3.0 + 3.0 * h0];
        for (a, b) in out.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruct_cases() {
        let xh = reconstruct_matrix(&[2.0, -1.0], &[1.0; 6], 3);
        assert_eq!(xh, vec![2.0, 2.0, 2.0, -1.0, -1.0, -1.0]);
        assert!(reconstruct_matrix(&[0.0, 0.0], &[0.3, 1.0, 4.0, 2.0, 9.0, 1.0], 3)
            .iter()
            .all(|&v| v == 0.0));
        // rank one when template rows are proportional
        let xh = reconstruct_matrix(&[1.5, -0.5], &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0], 3);
        assert_eq!(xh[0] * xh[4] - xh[1] * xh[3], 0.0);
    }

    #[test]
    fn loss_hand_case() {
        let x = RingTensor::new(2, 2, vec![0.0; 4], vec![1, 1, 1, 0]).unwrap();
        let x_hat = [1.0, 1.0, 2.0, 5.0];
        let l = loss(&x, &[0.0, 0.0], &[0.0, 0.0], &x_hat).unwrap();
        assert_eq!(l.matrix, 2.0);
        assert_eq!(l.ring, 0.0);
        assert_eq!(l.total, l.ring + l.matrix);
    }

    #[test]
    fn loss_needs_valid_entries() {
        let x = RingTensor::new(1, 2, vec![0.0; 2], vec![0, 0]).unwrap();
        assert!(matches!(loss(&x, &[0.0], &[0.0], &[0.0, 0.0]), Err(Error::DegenerateMask)));
    }

    #[test]
    fn perfect_reconstruction_has_zero_loss() {
        let x = RingTensor::from_counts(&[2, 1], 2, vec![1.0, 2.0, 3.0, 0.0]).unwrap();
        let l = loss(&x, &[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0, 3.0, 77.0]).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn zero_params_give_zero_template_gradient() {
        let p = ModelParams::zeros(shape(6, 8, 4));
        let x = RingTensor::from_counts(&[3, 5, 8, 8, 6, 7], 8, (0..48).map(|v| (v as f64).sin()).collect()).unwrap();
        let g = backward(&x, &p).unwrap();
        assert!(g.template.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_loss_matches_forward() {
        let counts = [3, 5, 8, 8, 6, 7];
        let p = init_params(&counts, 8, 4, 3).unwrap();
        let x = RingTensor::from_counts(&counts, 8, (0..48).map(|v| (v as f64 * 0.7).cos()).collect()).unwrap();
        let t = forward(&x, &p).unwrap();
        let l = forward_loss(&x, &p).unwrap();
        let b = accumulate_gradients(&x, &p, &mut ModelParams::zeros(p.shape.clone()), 1.0).unwrap();
        assert!((t.loss_total - l.total).abs() < 1e-12);
        assert!((t.loss_total - b.total).abs() < 1e-12);
        assert_eq!(t.z_hat, latent(&x, &p).unwrap());
    }

    #[test]
    fn init_is_deterministic() {
        let counts = [4, 6, 6];
        let a = init_params(&counts, 6, 8, 42).unwrap();
        let b = init_params(&counts, 6, 8, 42).unwrap();
        let c = init_params(&counts, 6, 8, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.w_proj[4..6], [0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = ModelParams::zeros(shape(3, 4, 2));
        let x = RingTensor::from_counts(&[1, 1, 1], 3, vec![0.0; 9]).unwrap();
        assert!(matches!(forward(&x, &p), Err(Error::Dimension(_))));
    }

    #[test]
    fn non_finite_input_names_stage() {
        let counts = [2, 2, 2];
        let p = init_params(&counts, 2, 2, 0).unwrap();
        let mut x = RingTensor::from_counts(&counts, 2, vec![1.0; 6]).unwrap();
        x.values_mut()[0] = f64::INFINITY;
        match forward(&x, &p) {
            Err(Error::Numeric { stage, .. }) => assert_eq!(stage, "ring_projection"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
