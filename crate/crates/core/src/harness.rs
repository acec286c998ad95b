//! Synthetic bona fide textures, blended attacks and the end-to-end
//! experiment driver.
//!
//! Bona fide samples are filtered noise with a `f^(-alpha)` power spectrum
//! plus a smooth gradient. Attacks are alpha blends of two distinct bona
//! fide images followed by Gaussian smoothing.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;

use crate::checkpoint::Checkpoint;
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::image_io::{load_image, load_manifest, save_png16, DatasetManifest, Label, ManifestEntry, Split, ANALYSIS_SIZE};
use crate::model::latent;
use crate::scoring::{det_points, write_scores_csv, ScoreReport, ScoredSample};
use crate::spectrum::fft2;
use crate::trainer::{self, TrainConfig};

/// Spectral exponent range of the synthetic textures.
pub const TEXTURE_ALPHA_RANGE: (f64, f64) = (1.8, 2.2);
const TEXTURE_MEAN: f64 = 0.5;
const TEXTURE_STD: f64 = 0.12;
const GRADIENT_SCALE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Textures,
    Directory,
}

impl FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "textures" => Ok(Self::Textures),
            "directory" => Ok(Self::Directory),
            other => Err(format!("unknown generator `{other}`")),
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Textures => "textures",
            Self::Directory => "directory",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_bonafide: usize,
    pub num_attacks: usize,
    pub image_size: usize,
    /// Weight of the first source in each blend.
    pub alpha: f64,
    pub blur_sigma: f64,
    pub seed: u64,
    pub generator: Generator,
    /// Source images for [`Generator::Directory`].
    pub source_dir: Option<PathBuf>,
    /// Share of bona fide images placed in the test split.
    pub test_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_bonafide: 200,
            num_attacks: 100,
            image_size: ANALYSIS_SIZE,
            alpha: 0.5,
            blur_sigma: 1.0,
            seed: 0,
            generator: Generator::Textures,
            source_dir: None,
            test_fraction: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_bonafide == 0 {
            return bad("num_bonafide must be >= 1".into());
        }
        if self.num_attacks > 0 && self.num_bonafide < 2 {
            return bad("attacks need at least 2 bona fide sources".into());
        }
        if self.image_size < 2 {
            return bad(format!("image_size must be >= 2, got {}", self.image_size));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must be in (0, 1), got {}", self.alpha));
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return bad(format!("blur_sigma must be >= 0, got {}", self.blur_sigma));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!("test_fraction must be in [0, 1), got {}", self.test_fraction));
        }
        if self.generator == Generator::Directory && self.source_dir.is_none() {
            return bad("generator `directory` needs source_dir".into());
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let mut c = Self::default();
        kv.take("num_bonafide", &mut c.num_bonafide)?;
        kv.take("num_attacks", &mut c.num_attacks)?;
        kv.take("image_size", &mut c.image_size)?;
        kv.take("alpha", &mut c.alpha)?;
        kv.take("blur_sigma", &mut c.blur_sigma)?;
        kv.take("seed", &mut c.seed)?;
        kv.take("generator", &mut c.generator)?;
        kv.take("test_fraction", &mut c.test_fraction)?;
        c.source_dir = kv.take_string("source_dir").map(PathBuf::from);
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Independent per-item seed from the master seed, a stream tag and an index.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_TEXTURE: u64 = 1;
const STREAM_PAIRS: u64 = 2;
const STREAM_SPLIT: u64 = 3;

/// Zero-mean real field whose power spectrum falls as `f^(-alpha)`; `f` is
/// the wrapped frequency in cycles per image. Unit variance.
pub fn power_law_field(size: usize, alpha: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut data: Vec<Complex<f64>> = (0..size * size)
        .map(|_| Complex::new(rng.sample(StandardNormal), 0.0))
        .collect();
    fft2(size, size, &mut data, false);
    let wrap = |i: usize| -> f64 {
        let i = i as f64;
        let n = size as f64;
        if i <= n / 2.0 {
            i
        } else {
            i - n
        }
    };
    for r in 0..size {
        for c in 0..size {
            let f = wrap(r).hypot(wrap(c));
            let gain = if f == 0.0 { 0.0 } else { f.powf(-alpha / 2.0) };
            data[r * size + c] *= gain;
        }
    }
    fft2(size, size, &mut data, true);
    let mut field: Vec<f64> = data.iter().map(|v| v.re).collect();
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let std = (field.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let std = if std > 0.0 { std } else { 1.0 };
    for v in &mut field {
        *v = (*v - mean) / std;
    }
    field
}

/// Power-law texture in `[0, 1]` with a random linear gradient. Returns
/// the pixels and the drawn exponent.
pub fn power_law_texture(size: usize, rng: &mut impl Rng) -> (Vec<f64>, f64) {
    let alpha = rng.random_range(TEXTURE_ALPHA_RANGE.0..=TEXTURE_ALPHA_RANGE.1);
    let field = power_law_field(size, alpha, rng);
    let gx = rng.random_range(-GRADIENT_SCALE..=GRADIENT_SCALE);
    let gy = rng.random_range(-GRADIENT_SCALE..=GRADIENT_SCALE);
    let denom = (size - 1).max(1) as f64;
    let mut out = Vec::with_capacity(size * size);
    for r in 0..size {
        let y = r as f64 / denom - 0.5;
        for c in 0..size {
            let x = c as f64 / denom - 0.5;
            let v = TEXTURE_MEAN + TEXTURE_STD * field[r * size + c] + gx * x + gy * y;
            out.push(v.clamp(0.0, 1.0));
        }
    }
    (out, alpha)
}

/// `alpha * a + (1 - alpha) * b`, evaluated as `b + alpha * (a - b)` so
/// equal inputs reproduce exactly.
pub fn blend(a: &[f64], b: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("blend of {} and {} pixels", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| y + alpha * (x - y)).collect())
}

/// Normalized Gaussian taps over `[-ceil(3 sigma), ceil(3 sigma)]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian smoothing with clamped borders. `sigma = 0` is the
/// identity.
pub fn gaussian_blur(height: usize, width: usize, pixels: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return pixels.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let pass = |src: &[f64], along_rows: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for r in 0..height {
            for c in 0..width {
                let mut acc = 0.0;
                for (t, k) in kernel.iter().enumerate() {
                    let off = t as i64 - radius;
                    let (rr, cc) = if along_rows {
                        (r, (c as i64 + off).clamp(0, width as i64 - 1) as usize)
                    } else {
                        ((r as i64 + off).clamp(0, height as i64 - 1) as usize, c)
                    };
                    acc += k * src[rr * width + cc];
                }
                out[r * width + c] = acc;
            }
        }
        out
    };
    let horizontal = pass(pixels, true);
    pass(&horizontal, false)
}

/// Writes `num_bonafide` images to `dir/bonafide/` and returns their paths
/// relative to `dir`, in index order.
pub fn generate_bonafide(cfg: &SynthConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let sub = dir.join("bonafide");
    fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    let sources = match cfg.generator {
        Generator::Textures => Vec::new(),
        Generator::Directory => list_images(cfg.source_dir.as_deref().unwrap_or(Path::new(".")))?,
    };
    if cfg.generator == Generator::Directory && sources.len() < cfg.num_bonafide {
        return Err(Error::Config(format!(
            "source_dir holds {} images, need {}",
            sources.len(),
            cfg.num_bonafide
        )));
    }
    let mut out = Vec::with_capacity(cfg.num_bonafide);
    for i in 0..cfg.num_bonafide {
        let rel = PathBuf::from(format!("bonafide/bf_{i:04}.png"));
        let (size, pixels) = match cfg.generator {
            Generator::Textures => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_TEXTURE, i as u64));
                (cfg.image_size, power_law_texture(cfg.image_size, &mut rng).0)
            }
            Generator::Directory => {
                let img = load_image(&sources[i])?;
                (img.height(), img.into_pixels())
            }
        };
        save_png16(dir.join(&rel), size, size, &pixels)?;
        out.push(rel);
    }
    Ok(out)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    const EXTS: [&str; 6] = ["png", "jpg", "jpeg", "bmp", "tif", "tiff"];
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if ext.is_some_and(|e| EXTS.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// One blended attack and its sources, paths relative to the data directory.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRecord {
    pub attack_path: PathBuf,
    pub source_a: PathBuf,
    pub source_b: PathBuf,
    pub alpha: f64,
}

/// Seeded distinct source pair for attack `index`.
pub fn attack_pair(seed: u64, index: usize, pool: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_PAIRS, index as u64));
    let a = rng.random_range(0..pool);
    let b = (a + rng.random_range(1..pool)) % pool;
    (a, b)
}

/// Blends and smooths seeded pairs from `pool` into `dir/attack/`.
pub fn generate_attacks(pool: &[PathBuf], cfg: &SynthConfig, dir: &Path) -> Result<Vec<AttackRecord>> {
    cfg.validate()?;
    if cfg.num_attacks == 0 {
        return Ok(Vec::new());
    }
    if pool.len() < 2 {
        return Err(Error::Config("attacks need at least 2 bona fide sources".into()));
    }
    let sub = dir.join("attack");
    fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    let mut records = Vec::with_capacity(cfg.num_attacks);
    for i in 0..cfg.num_attacks {
        let (ia, ib) = attack_pair(cfg.seed, i, pool.len());
        let a = load_image(dir.join(&pool[ia]))?;
        let b = load_image(dir.join(&pool[ib]))?;
        if (a.height(), a.width()) != (b.height(), b.width()) {
            return Err(Error::Dimension("blend sources differ in size".into()));
        }
        let mixed = blend(a.pixels(), b.pixels(), cfg.alpha)?;
        let smoothed = gaussian_blur(a.height(), a.width(), &mixed, cfg.blur_sigma);
        let rel = PathBuf::from(format!("attack/atk_{i:04}.png"));
        save_png16(dir.join(&rel), a.height(), a.width(), &smoothed)?;
        records.push(AttackRecord {
            attack_path: rel,
            source_a: pool[ia].clone(),
            source_b: pool[ib].clone(),
            alpha: cfg.alpha,
        });
    }
    Ok(records)
}

pub fn attacks_tsv(records: &[AttackRecord]) -> String {
    let mut out = String::from("attack_path\tsource_a\tsource_b\talpha\n");
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.attack_path.display(),
            r.source_a.display(),
            r.source_b.display(),
            r.alpha
        ));
    }
    out
}

/// Writes bona fide images, attacks, `manifest.tsv` and `attacks.tsv` under
/// `dir`. Bona fide images are shuffled into train and test; attacks are
/// test only. Manifest paths are relative to `dir`.
pub fn synthesize(cfg: &SynthConfig, dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bonafide = generate_bonafide(cfg, dir)?;
    let attacks = generate_attacks(&bonafide, cfg, dir)?;

    let n = bonafide.len();
    let n_test = ((n as f64 * cfg.test_fraction).round() as usize).min(n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_SPLIT, 0)));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let mut entries: Vec<ManifestEntry> = bonafide
        .iter()
        .zip(&is_test)
        .map(|(p, &t)| ManifestEntry {
            path: p.clone(),
            label: Label::Bonafide,
            split: if t { Split::Test } else { Split::Train },
        })
        .collect();
    entries.extend(attacks.iter().map(|r| ManifestEntry {
        path: r.attack_path.clone(),
        label: Label::Attack,
        split: Split::Test,
    }));
    let manifest = DatasetManifest::new(entries)?;
    write_text(&dir.join("manifest.tsv"), &manifest.to_text())?;
    write_text(&dir.join("attacks.tsv"), &attacks_tsv(&attacks))?;
    Ok(manifest)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Scores manifest entries, optionally restricted to one split. Reported
/// paths are made relative to `base` when they lie under it.
pub fn score_manifest(
    checkpoint: &Checkpoint,
    manifest: &DatasetManifest,
    split: Option<Split>,
    base: Option<&Path>,
) -> Result<Vec<ScoredSample>> {
    let extractor = FeatureExtractor::from_geometry(checkpoint.geometry()?);
    manifest
        .entries()
        .iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .map(|e| {
            let x = extractor.extract_path(&e.path)?;
            let z = latent(&x, &checkpoint.params)?;
            let path = base
                .and_then(|b| e.path.strip_prefix(b).ok())
                .map(Path::to_path_buf)
                .unwrap_or_else(|| e.path.clone());
            Ok(ScoredSample {
                path,
                label: e.label,
                latent: z,
                score: checkpoint.calibration.score(z),
            })
        })
        .collect()
}

/// `threshold,apcer,bpcer` rows for every candidate threshold.
pub fn det_csv(report: &ScoreReport) -> Result<String> {
    let pick = |label| -> Vec<f64> {
        report
            .per_sample
            .iter()
            .filter(|s| s.label == label)
            .map(|s| s.score)
            .collect()
    };
    let mut out = String::from("threshold,apcer,bpcer\n");
    for (tau, a, b) in det_points(&pick(Label::Bonafide), &pick(Label::Attack))? {
        out.push_str(&format!("{tau},{a},{b}\n"));
    }
    Ok(out)
}

/// Trains on the manifest at `manifest_path`, scores its test split and
/// writes `model.srlc`, `train_log.csv`, `scores.csv` and `report.txt`
/// under `out`.
pub fn run_experiment(manifest_path: &Path, train_cfg: &TrainConfig, out: &Path) -> Result<ScoreReport> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest = load_manifest(manifest_path)?;
    let trained = trainer::train(&manifest, train_cfg)?;
    trained.checkpoint.save(out.join("model.srlc"))?;
    write_text(&out.join("train_log.csv"), &trained.state.history_csv())?;

    let samples = score_manifest(&trained.checkpoint, &manifest, Some(Split::Test), manifest_path.parent())?;
    let scores_path = out.join("scores.csv");
    let file = fs::File::create(&scores_path).map_err(|e| Error::io(&scores_path, e))?;
    write_scores_csv(file, &samples)?;
    let report = ScoreReport::from_samples(samples)?;
    write_text(&out.join("report.txt"), &report.report_text())?;
    log::info!("{}", report.summary().trim_end());
    Ok(report)
}

/// Synthesizes data under `out/data` and runs the experiment on it.
pub fn run_synthetic(synth: &SynthConfig, train_cfg: &TrainConfig, out: &Path) -> Result<ScoreReport> {
    let data = out.join("data");
    synthesize(synth, &data)?;
    run_experiment(&data.join("manifest.tsv"), train_cfg, out)
}
