//! Test-time adaptation: residual-loss fine-tuning of a trained network on
//! one spectrum (instance), on a stream of batches (online) or on a whole
//! test set (domain).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{Adam, AdamConfig, BnStats, Mlp};
use crate::par::{try_map_slice, Exec};
use crate::signal::{ModelParams, SignalModel};
use crate::simulator::{derive_seed, streams};
use crate::spectrum::ComplexSpectrum;
use crate::strategies::norm::denormalize;
use crate::strategies::predict::{normalize_all, predict_normalized};
use crate::strategies::train::residual_step;

/// Batch-norm behaviour during adaptation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BnMode {
    /// Batch statistics in updates, running statistics updated, predictions
    /// with running statistics.
    #[default]
    Train,
    /// Batch statistics everywhere, running statistics untouched.
    BatchOnly,
    /// Running statistics everywhere, never updated.
    Frozen,
}

impl BnMode {
    fn update_stats(self) -> BnStats {
        match self {
            BnMode::Train | BnMode::BatchOnly => BnStats::Batch,
            BnMode::Frozen => BnStats::Running,
        }
    }

    fn predict_stats(self) -> BnStats {
        match self {
            BnMode::BatchOnly => BnStats::Batch,
            BnMode::Train | BnMode::Frozen => BnStats::Running,
        }
    }
}

/// Which weights produce the online predictions of a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnlinePrediction {
    #[default]
    PostUpdate,
    PreUpdate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    /// Instance adaptation steps J.
    pub steps: usize,
    /// Online and domain mini-batch size.
    pub batch_size: usize,
    /// Domain adaptation epochs.
    pub epochs: usize,
    pub lr: f64,
    pub bn: BnMode,
    pub online_prediction: OnlinePrediction,
    /// Seeds the domain shuffling.
    pub seed: u64,
    pub exec: Exec,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            batch_size: 16,
            epochs: 1000,
            lr: 1e-4,
            bn: BnMode::Train,
            online_prediction: OnlinePrediction::PostUpdate,
            seed: 0,
            exec: Exec::Parallel,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("adaptation batch size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("adaptation learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceResult {
    pub theta: ModelParams,
    /// Normalized residual of the unadapted prediction.
    pub residual_before: f64,
    /// Normalized residual of the returned prediction.
    pub residual_after: f64,
}

fn step(model: &mut Mlp, adam: &mut Adam, sm: &SignalModel, units: &[&ComplexSpectrum], cfg: &AdaptConfig) -> Result<f64> {
    residual_step(
        model,
        adam,
        sm,
        units,
        cfg.bn.update_stats(),
        cfg.bn == BnMode::Train,
        Exec::Sequential,
    )
}

fn predict_units(model: &Mlp, units: &[&ComplexSpectrum], cfg: &AdaptConfig) -> Result<Vec<ModelParams>> {
    if cfg.bn == BnMode::BatchOnly {
        // Batch statistics must come from the batch being predicted.
        let x = model.input_matrix(units)?;
        let (out, _) = model.forward(&x, BnStats::Batch)?;
        let layout = crate::strategies::predict::layout_of(model)?;
        out.rows()
            .into_iter()
            .map(|r| ModelParams::from_slice(r.as_slice().unwrap(), layout))
            .collect()
    } else {
        predict_normalized(model, units, cfg.bn.predict_stats())
    }
}

/// Adapts a private copy of `init` to `y` for `cfg.steps` steps and returns
/// its prediction. `init` is never modified.
pub fn tta_instance(init: &Mlp, sm: &SignalModel, y: &ComplexSpectrum, cfg: &AdaptConfig) -> Result<InstanceResult> {
    cfg.validate()?;
    let (units, ctxs) = normalize_all(&[y])?;
    let unit = [&units[0]];
    let before = predict_normalized(init, &unit, BnStats::Running)?;
    let residual_before = sm.loss(&before[0], unit[0])?;
    let mut model = init.clone();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), model.n_params());
    for _ in 0..cfg.steps {
        step(&mut model, &mut adam, sm, &unit, cfg)?;
    }
    let theta = predict_units(&model, &unit, cfg)?.remove(0);
    let residual_after = sm.loss(&theta, unit[0])?;
    Ok(InstanceResult {
        theta: denormalize(&theta, ctxs[0]),
        residual_before,
        residual_after,
    })
}

/// Independent instance adaptation of every spectrum.
pub fn tta_instance_many(
    init: &Mlp,
    sm: &SignalModel,
    ys: &[&ComplexSpectrum],
    cfg: &AdaptConfig,
) -> Result<Vec<InstanceResult>> {
    try_map_slice(ys, cfg.exec, |y| tta_instance(init, sm, y, cfg))
}

#[derive(Clone, Debug)]
pub struct OnlineResult {
    /// One estimate per input spectrum, in stream order.
    pub predictions: Vec<ModelParams>,
    pub model: Mlp,
    /// Residual before each update.
    pub batch_losses: Vec<f64>,
}

/// Adapts one model along `ys` taken in consecutive batches of
/// `cfg.batch_size` (the last may be short); weights carry over.
pub fn tta_online(init: &Mlp, sm: &SignalModel, ys: &[&ComplexSpectrum], cfg: &AdaptConfig) -> Result<OnlineResult> {
    cfg.validate()?;
    let mut model = init.clone();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), model.n_params());
    let mut predictions = Vec::with_capacity(ys.len());
    let mut batch_losses = Vec::new();
    for batch in ys.chunks(cfg.batch_size) {
        let (units, ctxs) = normalize_all(batch)?;
        let refs: Vec<&ComplexSpectrum> = units.iter().collect();
        let pre = match cfg.online_prediction {
            OnlinePrediction::PreUpdate => Some(predict_units(&model, &refs, cfg)?),
            OnlinePrediction::PostUpdate => None,
        };
        batch_losses.push(step(&mut model, &mut adam, sm, &refs, cfg)?);
        let theta = match pre {
            Some(t) => t,
            None => predict_units(&model, &refs, cfg)?,
        };
        predictions.extend(theta.iter().zip(ctxs).map(|(t, c)| denormalize(t, c)));
    }
    Ok(OnlineResult {
        predictions,
        model,
        batch_losses,
    })
}

#[derive(Clone, Debug)]
pub struct DomainResult {
    pub model: Mlp,
    /// Mean residual over the updates of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Multi-epoch residual training over the whole test set, in shuffled
/// mini-batches.
pub fn tta_domain(init: &Mlp, sm: &SignalModel, ys: &[&ComplexSpectrum], cfg: &AdaptConfig) -> Result<DomainResult> {
    cfg.validate()?;
    let mut model = init.clone();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), model.n_params());
    let (units, _) = normalize_all(ys)?;
    let mut order: Vec<usize> = (0..units.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, streams::ADAPT, epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut n = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let refs: Vec<&ComplexSpectrum> = idx.iter().map(|&i| &units[i]).collect();
            total += step(&mut model, &mut adam, sm, &refs, cfg)?;
            n += 1;
        }
        if n > 0 {
            epoch_losses.push(total / n as f64);
        }
    }
    Ok(DomainResult { model, epoch_losses })
}

/// Estimates from a domain-adapted model, honouring the batch-norm mode.
pub fn predict_adapted(model: &Mlp, ys: &[&ComplexSpectrum], cfg: &AdaptConfig) -> Result<Vec<ModelParams>> {
    let (units, ctxs) = normalize_all(ys)?;
    let refs: Vec<&ComplexSpectrum> = units.iter().collect();
    let mut out = Vec::with_capacity(ys.len());
    for chunk in refs.chunks(crate::strategies::predict::PREDICT_CHUNK) {
        out.extend(predict_units(model, chunk, cfg)?);
    }
    Ok(out.iter().zip(ctxs).map(|(t, c)| denormalize(t, c)).collect())
}
