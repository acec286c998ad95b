//! Mini-batch Adam training on bona fide ring tensors.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::image_io::{DatasetManifest, Label, Split};
use crate::model::{accumulate_gradients, forward_loss, init_params, latent, ModelParams, DEFAULT_HIDDEN};
use crate::rings::RingTensor;
use crate::scoring::{calibrate, LatentCalibration};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
    pub num_rings: usize,
    pub hidden: usize,
    /// Share of the train split held out for validation when the manifest
    /// has no val split.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            batch_size: 128,
            epochs: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            early_stop_patience: 10,
            num_rings: 32,
            hidden: DEFAULT_HIDDEN,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must be in (0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must be in [0, 1), got {}", self.val_fraction));
        }
        if self.num_rings < 3 {
            return bad(format!("num_rings must be >= 3, got {}", self.num_rings));
        }
        if self.hidden == 0 {
            return bad("hidden must be >= 1".into());
        }
        Ok(())
    }

    /// Parses `key = value` text; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let mut c = Self::default();
        kv.take("learning_rate", &mut c.learning_rate)?;
        kv.take("batch_size", &mut c.batch_size)?;
        kv.take("epochs", &mut c.epochs)?;
        kv.take("adam_beta1", &mut c.adam_beta1)?;
        kv.take("adam_beta2", &mut c.adam_beta2)?;
        kv.take("adam_eps", &mut c.adam_eps)?;
        kv.take("seed", &mut c.seed)?;
        kv.take("early_stop_patience", &mut c.early_stop_patience)?;
        kv.take("num_rings", &mut c.num_rings)?;
        kv.take("hidden", &mut c.hidden)?;
        kv.take("val_fraction", &mut c.val_fraction)?;
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        format!(
            "learning_rate = {}\nbatch_size = {}\nepochs = {}\nadam_beta1 = {}\nadam_beta2 = {}\nadam_eps = {}\nseed = {}\nearly_stop_patience = {}\nnum_rings = {}\nhidden = {}\nval_fraction = {}\n",
            self.learning_rate,
            self.batch_size,
            self.epochs,
            self.adam_beta1,
            self.adam_beta2,
            self.adam_eps,
            self.seed,
            self.early_stop_patience,
            self.num_rings,
            self.hidden,
            self.val_fraction
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Optimizer state: parameters, Adam moments and loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub first_moment: ModelParams,
    pub second_moment: ModelParams,
    pub step_count: u64,
    pub epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(params: ModelParams) -> Self {
        let zeros = ModelParams::zeros(params.shape.clone());
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            params,
            step_count: 0,
            epoch: 0,
            best_val_loss: f64::INFINITY,
            history: Vec::new(),
        }
    }

    /// `epoch,train_loss,val_loss` CSV; val_loss is empty when validation
    /// is disabled.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for h in &self.history {
            let val = h.val_loss.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", h.epoch, h.train_loss, val);
        }
        out
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &mut TrainState, grads: &ModelParams, config: &TrainConfig) -> Result<()> {
    if grads.shape != state.params.shape {
        return Err(Error::Dimension("gradient shape differs from params".into()));
    }
    for (name, g) in crate::model::TENSOR_NAMES.iter().zip(grads.tensors()) {
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric("adam_step", format!("non-finite gradient in {name}[{i}]")));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let eps = config.adam_eps;

    let params = state.params.tensors_mut();
    let m = state.first_moment.tensors_mut();
    let v = state.second_moment.tensors_mut();
    for (((p, m), v), g) in params.into_iter().zip(m).zip(v).zip(grads.tensors()) {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Mean per-sample loss over `samples`.
pub fn mean_loss(samples: &[RingTensor], params: &ModelParams) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("mean loss over an empty set".into()));
    }
    let mut total = 0.0;
    for x in samples {
        total += forward_loss(x, params)?.total;
    }
    Ok(total / samples.len() as f64)
}

/// Mean of per-sample gradients, reduced in sample order.
pub fn batch_gradient(batch: &[&RingTensor], params: &ModelParams, grads: &mut ModelParams) -> Result<f64> {
    for t in grads.tensors_mut() {
        t.fill(0.0);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for x in batch {
        loss += accumulate_gradients(x, params, grads, scale)?.total;
    }
    Ok(loss * scale)
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Optimizer state at the last completed epoch.
    pub state: TrainState,
    /// Parameters of the epoch with the lowest validation loss, or the
    /// final parameters when validation is disabled.
    pub best_params: ModelParams,
}

/// Trains on precomputed ring tensors sharing one ring layout.
pub fn train_tensors(
    train: &[RingTensor],
    val: &[RingTensor],
    counts: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Protocol("train split is empty".into()));
    }
    let k_max = train[0].k_max();
    let params = init_params(counts, k_max, config.hidden, config.seed)?;
    let mut state = TrainState::new(params);
    let mut best_params = state.params.clone();
    let mut grads = ModelParams::zeros(state.params.shape.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stale = 0usize;

    if val.is_empty() {
        log::warn!("validation split is empty; early stopping disabled");
    }

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&RingTensor> = chunk.iter().map(|&i| &train[i]).collect();
            batch_gradient(&batch, &state.params, &mut grads)?;
            adam_step(&mut state, &grads, config)?;
        }
        state.epoch = epoch;
        let train_loss = mean_loss(train, &state.params)?;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(val, &state.params)?)
        };
        state.history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:?}");

        match val_loss {
            Some(v) if v < state.best_val_loss => {
                state.best_val_loss = v;
                best_params = state.params.clone();
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if stale > config.early_stop_patience {
                    log::info!("early stop after epoch {epoch}");
                    break;
                }
            }
            None => best_params = state.params.clone(),
        }
    }
    Ok(TrainOutcome { state, best_params })
}

/// Calibration of the latent distribution over `samples`. A single
/// sample gets the floored spread.
pub fn calibrate_on(samples: &[RingTensor], params: &ModelParams) -> Result<LatentCalibration> {
    let latents = samples
        .iter()
        .map(|x| latent(x, params))
        .collect::<Result<Vec<_>>>()?;
    match latents.as_slice() {
        [] => Err(Error::Calibration("no training latents".into())),
        [z] => {
            log::warn!("single training sample; calibration spread floored");
            Ok(LatentCalibration::degenerate(*z))
        }
        zs => calibrate(zs),
    }
}

/// A trained checkpoint with its training history.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    pub state: TrainState,
}

/// Splits the manifest into fitting and validation samples. Returns
/// indices into `manifest.entries()`.
fn select_splits(manifest: &DatasetManifest, config: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let entries = manifest.entries();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        match (e.split, e.label) {
            (Split::Train, Label::Attack) => {
                return Err(Error::Protocol(format!("attack sample {} in train split", e.path.display())))
            }
            (Split::Train, Label::Bonafide) => train.push(i),
            (Split::Val, Label::Bonafide) => val.push(i),
            (Split::Val, Label::Attack) => {
                log::warn!("ignoring attack sample {} in val split", e.path.display())
            }
            (Split::Test, _) => {}
        }
    }
    if train.is_empty() {
        return Err(Error::Protocol("manifest has no bona fide train samples".into()));
    }
    if val.is_empty() && manifest.split(Split::Val).next().is_none() {
        let held = (train.len() as f64 * config.val_fraction).floor() as usize;
        if held > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5E_ED0F_7A1D);
            let mut shuffled = train.clone();
            shuffled.shuffle(&mut rng);
            val = shuffled[..held].to_vec();
            val.sort_unstable();
            train.retain(|i| !val.contains(i));
        }
    }
    Ok((train, val))
}

/// Extracts features for the manifest's bona fide train (and val) samples,
/// trains, and calibrates the latent on the whole train split.
///
/// Parameters are rounded to checkpoint precision before calibration so a
/// reloaded checkpoint scores identically.
pub fn train(manifest: &DatasetManifest, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let (train_idx, val_idx) = select_splits(manifest, config)?;
    let extractor = FeatureExtractor::new(config.num_rings)?;
    let extract = |idx: &[usize]| -> Result<Vec<RingTensor>> {
        idx.iter()
            .map(|&i| extractor.extract_path(&manifest.entries()[i].path))
            .collect()
    };
    let train_set = extract(&train_idx)?;
    let val_set = extract(&val_idx)?;
    log::info!("training on {} samples, validating on {}", train_set.len(), val_set.len());

    let geo = extractor.geometry();
    let outcome = train_tensors(&train_set, &val_set, &geo.counts(), config)?;
    let mut params = outcome.best_params;
    params.round_to_f32();

    let mut calib_set = train_set;
    calib_set.extend(val_set);
    let calibration = calibrate_on(&calib_set, &params)?;
    Ok(TrainedModel {
        checkpoint: Checkpoint {
            grid_height: geo.height(),
            grid_width: geo.width(),
            ring_counts: geo.counts(),
            params,
            calibration,
        },
        state: outcome.state,
    })
}
