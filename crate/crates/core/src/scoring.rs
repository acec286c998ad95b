//! Latent calibration, anomaly scores and ISO/IEC 30107-3 error rates.
//!
//! Convention: a score at or above the threshold is classified as an
//! attack. APCER is the fraction of attacks scored below the threshold,
//! BPCER the fraction of bona fide samples scored at or above it.

use std::io::{Read, Write};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::image_io::Label;

/// Lower bound on the calibrated spread.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Mean and spread of the bona fide training latents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentCalibration {
    pub mu: f64,
    pub sigma: f64,
}

impl LatentCalibration {
    /// Calibration from a single latent: centered on it with the floor
    /// spread. Used when the training split holds one sample.
    pub fn degenerate(z: f64) -> Self {
        Self {
            mu: z,
            sigma: SIGMA_FLOOR,
        }
    }

    /// Standardized absolute deviation `|z - mu| / sigma`.
    pub fn score(&self, z: f64) -> f64 {
        (z - self.mu).abs() / self.sigma
    }
}

/// Sample mean and population standard deviation, floored.
pub fn calibrate(latents: &[f64]) -> Result<LatentCalibration> {
    if latents.len() < 2 {
        return Err(Error::Calibration(format!(
            "need at least 2 latents, got {}",
            latents.len()
        )));
    }
    if latents.iter().any(|z| !z.is_finite()) {
        return Err(Error::Calibration("non-finite latent".into()));
    }
    let n = latents.len() as f64;
    let mu = latents.iter().sum::<f64>() / n;
    let var = latents.iter().map(|z| (z - mu) * (z - mu)).sum::<f64>() / n;
    Ok(LatentCalibration {
        mu,
        sigma: var.sqrt().max(SIGMA_FLOOR),
    })
}

pub fn score(z: f64, cal: &LatentCalibration) -> f64 {
    cal.score(z)
}

/// Score lists sorted once for repeated rate queries.
struct SortedScores {
    bonafide: Vec<f64>,
    attack: Vec<f64>,
}

impl SortedScores {
    fn new(bonafide: &[f64], attack: &[f64]) -> Result<Self> {
        if bonafide.is_empty() || attack.is_empty() {
            return Err(Error::Metric(format!(
                "need both classes, got {} bona fide and {} attack scores",
                bonafide.len(),
                attack.len()
            )));
        }
        if bonafide.iter().chain(attack).any(|s| s.is_nan()) {
            return Err(Error::Metric("NaN score".into()));
        }
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        Ok(Self {
            bonafide: sorted(bonafide),
            attack: sorted(attack),
        })
    }

    /// Candidate thresholds: every distinct observed score, then +inf.
    fn thresholds(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.bonafide.iter().chain(&self.attack).copied().collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t.push(f64::INFINITY);
        t
    }

    /// (attacks below, bona fides at or above) for threshold `tau`.
    fn errors_at(&self, tau: f64) -> (usize, usize) {
        let attacks_below = self.attack.partition_point(|&s| s < tau);
        let bonafide_above = self.bonafide.len() - self.bonafide.partition_point(|&s| s < tau);
        (attacks_below, bonafide_above)
    }

    fn rates(&self, errors: (usize, usize)) -> (f64, f64) {
        (
            errors.0 as f64 / self.attack.len() as f64,
            errors.1 as f64 / self.bonafide.len() as f64,
        )
    }
}

/// APCER and BPCER at threshold `tau`.
pub fn error_rates(scores_bonafide: &[f64], scores_attack: &[f64], tau: f64) -> Result<(f64, f64)> {
    let s = SortedScores::new(scores_bonafide, scores_attack)?;
    Ok(s.rates(s.errors_at(tau)))
}

/// Equal error rate and its threshold.
///
/// Thresholds sweep the observed scores; between the two adjacent
/// thresholds where APCER - BPCER changes sign, both rates are linearly
/// interpolated to their crossing.
pub fn compute_eer(scores_bonafide: &[f64], scores_attack: &[f64]) -> Result<(f64, f64)> {
    let s = SortedScores::new(scores_bonafide, scores_attack)?;
    let (na, nb) = (s.attack.len(), s.bonafide.len());
    let thresholds = s.thresholds();
    // sign of APCER - BPCER in exact integer arithmetic
    let diff = |e: (usize, usize)| (e.0 * nb) as i64 - (e.1 * na) as i64;

    let mut prev = (thresholds[0], s.errors_at(thresholds[0]));
    for &tau in &thresholds[1..] {
        let errs = s.errors_at(tau);
        let d = diff(errs);
        if d == 0 {
            let (apcer, _) = s.rates(errs);
            return Ok((apcer, tau));
        }
        if d > 0 {
            let (a0, b0) = s.rates(prev.1);
            let (a1, b1) = s.rates(errs);
            let (d0, d1) = (a0 - b0, a1 - b1);
            let t = -d0 / (d1 - d0);
            let eer = a0 + t * (a1 - a0);
            let threshold = if tau.is_finite() {
                prev.0 + t * (tau - prev.0)
            } else {
                prev.0
            };
            return Ok((eer, threshold));
        }
        prev = (tau, errs);
    }
    unreachable!("APCER - BPCER is +1 at the +inf threshold")
}

/// BPCER at the operating point with the largest threshold whose APCER
/// does not exceed `apcer_target`.
pub fn compute_bpcer_at_apcer(scores_bonafide: &[f64], scores_attack: &[f64], apcer_target: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&apcer_target) {
        return Err(Error::Metric(format!("APCER target {apcer_target} outside [0, 1]")));
    }
    let s = SortedScores::new(scores_bonafide, scores_attack)?;
    let mut best = None;
    for tau in s.thresholds() {
        let (apcer, bpcer) = s.rates(s.errors_at(tau));
        if apcer <= apcer_target {
            best = Some(bpcer);
        } else {
            break;
        }
    }
    // the lowest threshold always has APCER = 0
    Ok(best.expect("APCER is zero at the lowest threshold"))
}

/// (threshold, APCER, BPCER) at every candidate threshold.
pub fn det_points(scores_bonafide: &[f64], scores_attack: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let s = SortedScores::new(scores_bonafide, scores_attack)?;
    Ok(s.thresholds()
        .into_iter()
        .map(|tau| {
            let (a, b) = s.rates(s.errors_at(tau));
            (tau, a, b)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub path: PathBuf,
    pub label: Label,
    pub latent: f64,
    pub score: f64,
}

/// Per-sample scores and dataset-level metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub per_sample: Vec<ScoredSample>,
    pub eer: f64,
    pub eer_threshold: f64,
    pub bpcer_at_apcer5: f64,
    pub bpcer_at_apcer10: f64,
}

impl ScoreReport {
    pub fn from_samples(per_sample: Vec<ScoredSample>) -> Result<Self> {
        let pick = |label| -> Vec<f64> {
            per_sample
                .iter()
                .filter(|s| s.label == label)
                .map(|s| s.score)
                .collect()
        };
        let (bona, attack) = (pick(Label::Bonafide), pick(Label::Attack));
        let (eer, eer_threshold) = compute_eer(&bona, &attack)?;
        Ok(Self {
            bpcer_at_apcer5: compute_bpcer_at_apcer(&bona, &attack, 0.05)?,
            bpcer_at_apcer10: compute_bpcer_at_apcer(&bona, &attack, 0.10)?,
            per_sample,
            eer,
            eer_threshold,
        })
    }

    pub fn count(&self, label: Label) -> usize {
        self.per_sample.iter().filter(|s| s.label == label).count()
    }

    /// Header plus one line of percentages with two decimals.
    pub fn summary(&self) -> String {
        format!(
            "EER,BPCER@APCER=5%,BPCER@APCER=10%\n{:.2},{:.2},{:.2}\n",
            100.0 * self.eer,
            100.0 * self.bpcer_at_apcer5,
            100.0 * self.bpcer_at_apcer10
        )
    }

    /// Machine-readable `key=value` report.
    pub fn report_text(&self) -> String {
        format!(
            "eer={}\neer_threshold={}\nbpcer_at_apcer5={}\nbpcer_at_apcer10={}\nnum_bonafide={}\nnum_attack={}\n",
            self.eer,
            self.eer_threshold,
            self.bpcer_at_apcer5,
            self.bpcer_at_apcer10,
            self.count(Label::Bonafide),
            self.count(Label::Attack)
        )
    }
}

/// Writes `path,label,latent,score` rows.
pub fn write_scores_csv<W: Write>(w: W, samples: &[ScoredSample]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["path", "label", "latent", "score"])?;
    for s in samples {
        wtr.write_record([
            s.path.display().to_string(),
            s.label.to_string(),
            s.latent.to_string(),
            s.score.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<scores csv>", e))?;
    Ok(())
}

pub fn read_scores_csv<R: Read>(r: R) -> Result<Vec<ScoredSample>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |j: usize| {
            rec.get(j).ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing column {j}"),
            })
        };
        let num = |j: usize| -> Result<f64> {
            field(j)?.trim().parse().map_err(|e| Error::Parse {
                line,
                msg: format!("bad number: {e}"),
            })
        };
        out.push(ScoredSample {
            path: PathBuf::from(field(0)?),
            label: field(1)?.trim().parse().map_err(|msg| Error::Parse { line, msg })?,
            latent: num(2)?,
            score: num(3)?,
        });
    }
    Ok(out)
}
