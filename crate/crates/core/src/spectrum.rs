//! Log-magnitude spectra and the per-image power-law baseline.
//!
//! The residual map of an image is its centered log-magnitude spectrum
//! minus a radial baseline `exp(a + b ln r)` fitted to the band means of
//! that same spectrum. The DC bin is forced to zero.

use std::io::{Read, Write};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::binio;
use crate::error::{Error, Result};
use crate::image_io::SpectralImage;

/// Band means at or below this value are dropped from the fit.
pub const FIT_EPSILON: f64 = 1e-8;

const RESIDUAL_MAGIC: &[u8; 4] = b"SRLM";
const RESIDUAL_VERSION: u32 = 1;

/// In-place 2D DFT of a row-major complex grid (unnormalized in both
/// directions).
pub fn fft2(height: usize, width: usize, data: &mut [Complex<f64>], inverse: bool) {
    assert_eq!(data.len(), height * width);
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };
    let mut column = vec![Complex::new(0.0, 0.0); height];
    for c in 0..width {
        for r in 0..height {
            column[r] = data[r * width + c];
        }
        col_fft.process(&mut column);
        for r in 0..height {
            data[r * width + c] = column[r];
        }
    }
}

/// Zero-frequency position after the half-grid shift.
pub fn dc_position(height: usize, width: usize) -> (usize, usize) {
    (height / 2, width / 2)
}

/// Largest distance from `dc` to the outer corner of the grid.
///
/// Corners are the outer pixel edges (half a bin beyond the corner bin
/// centers) so every bin lies strictly inside the radius.
pub fn corner_radius(height: usize, width: usize, dc: (usize, usize)) -> f64 {
    let (dr, dc_) = (dc.0 as f64, dc.1 as f64);
    let rows = [-0.5 - dr, height as f64 - 0.5 - dr];
    let cols = [-0.5 - dc_, width as f64 - 0.5 - dc_];
    let mut best = 0.0f64;
    for y in rows {
        for x in cols {
            best = best.max((y * y + x * x).sqrt());
        }
    }
    best
}

/// Equal-width radial band of a bin at distance `r`.
pub fn radial_band(r: f64, r_max: f64, num_bands: usize) -> usize {
    let idx = ((r / r_max) * num_bands as f64).floor() as usize;
    idx.min(num_bands - 1)
}

/// Euclidean distance of bin `(row, col)` from `dc`.
pub fn bin_radius(row: usize, col: usize, dc: (usize, usize)) -> f64 {
    let dy = row as f64 - dc.0 as f64;
    let dx = col as f64 - dc.1 as f64;
    (dy * dy + dx * dx).sqrt()
}

/// Centered log-magnitude spectrum `ln(1 + |F|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpectrum {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub dc: (usize, usize),
}

impl LogSpectrum {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Magnitude of the 2D DFT, shifted so that DC sits at [`dc_position`].
pub fn magnitude_spectrum(height: usize, width: usize, pixels: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(
            "log_magnitude",
            format!("non-finite pixel at ({}, {})", i / width, i % width),
        ));
    }
    let mut data: Vec<Complex<f64>> = pixels.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2(height, width, &mut data, false);
    let (sh, sw) = dc_position(height, width);
    let mut out = vec![0.0; height * width];
    for r in 0..height {
        let tr = (r + sh) % height;
        for c in 0..width {
            let tc = (c + sw) % width;
            out[tr * width + tc] = data[r * width + c].norm();
        }
    }
    Ok(out)
}

pub fn log_magnitude(img: &SpectralImage) -> Result<LogSpectrum> {
    let (h, w) = (img.height(), img.width());
    let values = magnitude_spectrum(h, w, img.pixels())?
        .into_iter()
        .map(f64::ln_1p)
        .collect();
    Ok(LogSpectrum {
        height: h,
        width: w,
        values,
        dc: dc_position(h, w),
    })
}

/// Band-averaged radial profile. Empty bands report radius and mean 0 and
/// are therefore skipped by [`fit_power_law`].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub band_radii: Vec<f64>,
    pub band_means: Vec<f64>,
    pub counts: Vec<usize>,
}

impl RadialProfile {
    pub fn empty_bands(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .filter_map(|(i, &n)| (n == 0).then_some(i))
            .collect()
    }
}

pub fn radial_profile(spec: &LogSpectrum, num_bands: usize) -> Result<RadialProfile> {
    if num_bands < 2 {
        return Err(Error::Config(format!("radial profile needs >= 2 bands, got {num_bands}")));
    }
    let r_max = corner_radius(spec.height, spec.width, spec.dc);
    let mut sum_r = vec![0.0; num_bands];
    let mut sum_v = vec![0.0; num_bands];
    let mut counts = vec![0usize; num_bands];
    for row in 0..spec.height {
        for col in 0..spec.width {
            if (row, col) == spec.dc {
                continue;
            }
            let r = bin_radius(row, col, spec.dc);
            let band = radial_band(r, r_max, num_bands);
            sum_r[band] += r;
            sum_v[band] += spec.get(row, col);
            counts[band] += 1;
        }
    }
    let mut band_radii = vec![0.0; num_bands];
    let mut band_means = vec![0.0; num_bands];
    for i in 0..num_bands {
        if counts[i] > 0 {
            band_radii[i] = sum_r[i] / counts[i] as f64;
            band_means[i] = sum_v[i] / counts[i] as f64;
        } else {
            log::debug!("radial band {i} is empty");
        }
    }
    Ok(RadialProfile {
        band_radii,
        band_means,
        counts,
    })
}

/// Line `ln S = a + b ln f` fitted over the usable bands.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawFit {
    pub intercept: f64,
    pub slope: f64,
    pub num_bands: usize,
    pub band_radii: Vec<f64>,
    pub band_means: Vec<f64>,
}

impl PowerLawFit {
    /// Baseline value `e^a r^b` at radius `r > 0`.
    pub fn baseline(&self, r: f64) -> f64 {
        (self.intercept + self.slope * r.ln()).exp()
    }

    /// Bands that entered the fit.
    pub fn usable_bands(&self) -> usize {
        usable(&self.band_radii, &self.band_means).count()
    }
}

fn usable<'a>(radii: &'a [f64], means: &'a [f64]) -> impl Iterator<Item = (f64, f64)> + 'a {
    radii
        .iter()
        .zip(means)
        .filter(|(&f, &m)| f > 0.0 && m > FIT_EPSILON && f.is_finite() && m.is_finite())
        .map(|(&f, &m)| (f.ln(), m.ln()))
}

/// Ordinary least squares of `ln(mean)` against `ln(radius)`.
pub fn fit_power_law(band_radii: &[f64], band_means: &[f64]) -> Result<PowerLawFit> {
    if band_radii.len() != band_means.len() {
        return Err(Error::Dimension(format!(
            "{} radii vs {} means",
            band_radii.len(),
            band_means.len()
        )));
    }
    let points: Vec<(f64, f64)> = usable(band_radii, band_means).collect();
    if points.len() < 2 {
        return Err(Error::DegenerateFit { usable: points.len() });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        // all usable bands share one radius
        return Err(Error::DegenerateFit { usable: 1 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    Ok(PowerLawFit {
        intercept,
        slope,
        num_bands: band_radii.len(),
        band_radii: band_radii.to_vec(),
        band_means: band_means.to_vec(),
    })
}

/// Spectrum minus radial baseline, DC forced to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub dc: (usize, usize),
    /// Set when the baseline fit failed and a zero baseline was used.
    pub degenerate_fit: bool,
}

impl ResidualMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

pub fn residual_map(spec: &LogSpectrum, fit: &PowerLawFit) -> Result<ResidualMap> {
    let mut values = Vec::with_capacity(spec.values.len());
    for row in 0..spec.height {
        for col in 0..spec.width {
            if (row, col) == spec.dc {
                values.push(0.0);
                continue;
            }
            let base = fit.baseline(bin_radius(row, col, spec.dc));
            if !base.is_finite() {
                return Err(Error::numeric(
                    "residual_map",
                    format!("non-finite baseline at ({row}, {col})"),
                ));
            }
            values.push(spec.get(row, col) - base);
        }
    }
    Ok(ResidualMap {
        height: spec.height,
        width: spec.width,
        values,
        dc: spec.dc,
        degenerate_fit: false,
    })
}

/// Residual with a zero baseline: the spectrum with DC zeroed.
pub fn zero_baseline_residual(spec: &LogSpectrum) -> ResidualMap {
    let mut values = spec.values.clone();
    values[spec.dc.0 * spec.width + spec.dc.1] = 0.0;
    ResidualMap {
        height: spec.height,
        width: spec.width,
        values,
        dc: spec.dc,
        degenerate_fit: true,
    }
}

/// Full per-image chain: spectrum, profile, fit, residual. Falls back to a
/// zero baseline when fewer than two bands are usable.
pub fn compute_residual(img: &SpectralImage, num_bands: usize) -> Result<ResidualMap> {
    let spec = log_magnitude(img)?;
    let profile = radial_profile(&spec, num_bands)?;
    match fit_power_law(&profile.band_radii, &profile.band_means) {
        Ok(fit) => residual_map(&spec, &fit),
        Err(Error::DegenerateFit { usable }) => {
            log::warn!(
                "{}: degenerate power-law fit ({usable} usable bands), using zero baseline",
                img.source()
            );
            Ok(zero_baseline_residual(&spec))
        }
        Err(e) => Err(e),
    }
}

/// Writes the `SRLM` binary residual format.
pub fn write_residual<W: Write>(mut w: W, res: &ResidualMap) -> Result<()> {
    let io = |e| Error::io("<residual stream>", e);
    w.write_all(RESIDUAL_MAGIC).map_err(io)?;
    binio::write_u32(&mut w, RESIDUAL_VERSION).map_err(io)?;
    binio::write_u32(&mut w, res.height as u32).map_err(io)?;
    binio::write_u32(&mut w, res.width as u32).map_err(io)?;
    binio::write_f32s(&mut w, &res.values).map_err(io)?;
    binio::write_u32(&mut w, res.dc.0 as u32).map_err(io)?;
    binio::write_u32(&mut w, res.dc.1 as u32).map_err(io)?;
    Ok(())
}

/// Reads the `SRLM` format. Values come back at `f32` precision.
pub fn read_residual<R: Read>(mut r: R) -> Result<ResidualMap> {
    let io = |e| Error::io("<residual stream>", e);
    binio::expect_magic(&mut r, RESIDUAL_MAGIC)?;
    binio::expect_version(&mut r, RESIDUAL_VERSION)?;
    let height = binio::read_u32(&mut r).map_err(io)? as usize;
    let width = binio::read_u32(&mut r).map_err(io)? as usize;
    let values = binio::read_f32s(&mut r, height * width).map_err(io)?;
    let dc = (
        binio::read_u32(&mut r).map_err(io)? as usize,
        binio::read_u32(&mut r).map_err(io)? as usize,
    );
    if dc.0 >= height || dc.1 >= width {
        return Err(Error::Format(format!("dc {dc:?} outside {height}x{width}")));
    }
    Ok(ResidualMap {
        height,
        width,
        values,
        dc,
        degenerate_fit: false,
    })
}
