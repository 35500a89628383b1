//! Network training on simulated data: supervised (scaled parameter MAE) and
//! self-supervised (reconstruction residual through the signal model).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{Adam, AdamConfig, BnStats, Mlp};
use crate::par::{try_map_range, Exec};
use crate::signal::{ModelParams, ParamLayout, SignalModel};
use crate::simulator::{streams, Bounds, SampleRecord, Scenario, Simulator};
use crate::spectrum::ComplexSpectrum;
use crate::strategies::norm::{denormalize, denormalize_vec};
use crate::strategies::predict::{layout_of, normalize_all, predict_normalized};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Supervised,
    SelfSupervised,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Batches between validations.
    pub validate_every: usize,
    /// Fresh samples drawn for every validation.
    pub val_size: usize,
    pub lr: f64,
    pub max_steps: usize,
    pub seed: u64,
    /// Start the output bias at the prior midpoint in normalized units.
    pub bias_init: bool,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            validate_every: 256,
            val_size: 1024,
            lr: 1e-4,
            max_steps: 3125,
            seed: 0,
            bias_init: true,
            exec: Exec::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.validate_every == 0 || self.val_size == 0 || self.max_steps == 0 {
            return Err(Error::Config("training counts must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub step: usize,
    /// Objective value on the validation set.
    pub loss: f64,
    pub scaled_mae: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub objective: Objective,
    pub steps: usize,
    pub history: Vec<ValidationPoint>,
    pub best_step: usize,
    pub best_loss: f64,
}

/// Mean absolute error of min-max scaled parameters.
///
/// Scaling by the range width makes every component dimensionless;
/// components whose range is a single point cannot be scaled and are left
/// out.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledMae {
    inv_width: Vec<Option<f64>>,
    used: usize,
}

impl ScaledMae {
    pub fn from_bounds(bounds: &[Bounds]) -> Result<Self> {
        let inv_width: Vec<Option<f64>> = bounds
            .iter()
            .map(|b| (b.width() > 0.0).then(|| 1.0 / b.width()))
            .collect();
        let used = inv_width.iter().flatten().count();
        let dropped = inv_width.len() - used;
        if dropped > 0 {
            log::warn!("{dropped} parameter(s) with a degenerate prior range are left out of the scaled MAE");
        }
        if used == 0 {
            return Err(Error::Config("no parameter has a usable prior range".into()));
        }
        Ok(Self { inv_width, used })
    }

    pub fn n_used(&self) -> usize {
        self.used
    }

    pub fn loss(&self, pred: &[f64], truth: &[f64]) -> f64 {
        let s: f64 = self
            .inv_width
            .iter()
            .zip(pred.iter().zip(truth))
            .filter_map(|(w, (p, t))| w.map(|w| (p - t).abs() * w))
            .sum();
        s / self.used as f64
    }

    /// Subgradient of [`ScaledMae::loss`] with respect to `pred`.
    pub fn gradient(&self, pred: &[f64], truth: &[f64]) -> Vec<f64> {
        self.inv_width
            .iter()
            .zip(pred.iter().zip(truth))
            .map(|(w, (p, t))| match w {
                Some(w) if p != t => (p - t).signum() * w / self.used as f64,
                _ => 0.0,
            })
            .collect()
    }

    /// Mean loss over a batch.
    pub fn batch_loss(&self, preds: &[ModelParams], truths: &[ModelParams]) -> f64 {
        let s: f64 = preds
            .iter()
            .zip(truths)
            .map(|(p, t)| self.loss(&p.to_vec(), &t.to_vec()))
            .sum();
        s / preds.len() as f64
    }
}

fn row_params(out: &Array2<f64>, b: usize, layout: ParamLayout) -> Result<ModelParams> {
    ModelParams::from_slice(out.row(b).as_slice().unwrap(), layout)
}

fn check_finite(loss: f64, what: &str, step: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} became {loss} at step {step}")))
    }
}

/// Residual-loss cotangents for a batch; returns the mean residual.
pub(crate) fn residual_cotangent(
    sm: &SignalModel,
    out: &Array2<f64>,
    units: &[&ComplexSpectrum],
    layout: ParamLayout,
    exec: Exec,
) -> Result<(f64, Array2<f64>)> {
    let b = units.len();
    let rows = try_map_range(b, exec, |i| sm.residual_gradient(&row_params(out, i, layout)?, units[i]))?;
    let mut d_out = Array2::zeros(out.dim());
    let mut total = 0.0;
    for (i, (loss, g)) in rows.into_iter().enumerate() {
        total += loss;
        for (d, gj) in d_out.row_mut(i).iter_mut().zip(g) {
            *d = gj / b as f64;
        }
    }
    Ok((total / b as f64, d_out))
}

/// One Adam step on the mean residual of `units`; returns the loss before
/// the step. With `update_running` the batch statistics are folded into the
/// running statistics.
pub(crate) fn residual_step(
    model: &mut Mlp,
    adam: &mut Adam,
    sm: &SignalModel,
    units: &[&ComplexSpectrum],
    stats: BnStats,
    update_running: bool,
    exec: Exec,
) -> Result<f64> {
    let layout = layout_of(model)?;
    let x = model.input_matrix(units)?;
    let (out, cache) = model.forward(&x, stats)?;
    let (loss, d_out) = residual_cotangent(sm, &out, units, layout, exec)?;
    check_finite(loss, "residual loss", adam.step as usize)?;
    let grads = model.backward(&cache, &d_out)?;
    if update_running {
        model.update_running_stats(&cache)?;
    }
    model.adam_step(adam, &grads)?;
    Ok(loss)
}

fn supervised_step(
    model: &mut Mlp,
    adam: &mut Adam,
    mae: &ScaledMae,
    batch: &[SampleRecord],
) -> Result<f64> {
    let layout = layout_of(model)?;
    let observed: Vec<&ComplexSpectrum> = batch.iter().map(|r| &r.observed).collect();
    let (units, ctxs) = normalize_all(&observed)?;
    let refs: Vec<&ComplexSpectrum> = units.iter().collect();
    let x = model.input_matrix(&refs)?;
    let (out, cache) = model.forward(&x, BnStats::Batch)?;
    let n = batch.len() as f64;
    let mut d_out = Array2::zeros(out.dim());
    let mut total = 0.0;
    for (b, (rec, ctx)) in batch.iter().zip(&ctxs).enumerate() {
        let pred = denormalize_vec(out.row(b).as_slice().unwrap(), layout, *ctx);
        let truth = rec.theta.to_vec();
        total += mae.loss(&pred, &truth);
        let g = mae.gradient(&pred, &truth);
        for (i, (d, gi)) in d_out.row_mut(b).iter_mut().zip(g).enumerate() {
            let chain = if layout.is_scale_carrying(i) { ctx.norm } else { 1.0 };
            *d = gi * chain / n;
        }
    }
    let loss = total / n;
    check_finite(loss, "supervised loss", adam.step as usize)?;
    let grads = model.backward(&cache, &d_out)?;
    model.update_running_stats(&cache)?;
    model.adam_step(adam, &grads)?;
    Ok(loss)
}

/// Validation metrics of `model` on `records` (eval mode).
pub fn evaluate_losses(
    model: &Mlp,
    sm: &SignalModel,
    mae: &ScaledMae,
    records: &[SampleRecord],
    exec: Exec,
) -> Result<(f64, f64)> {
    let observed: Vec<&ComplexSpectrum> = records.iter().map(|r| &r.observed).collect();
    let (units, ctxs) = normalize_all(&observed)?;
    let refs: Vec<&ComplexSpectrum> = units.iter().collect();
    let theta = predict_normalized(model, &refs, BnStats::Running)?;
    let residuals = try_map_range(records.len(), exec, |i| sm.loss(&theta[i], refs[i]))?;
    let residual = residuals.iter().sum::<f64>() / records.len() as f64;
    let denorm: Vec<ModelParams> = theta.iter().zip(ctxs).map(|(t, c)| denormalize(t, c)).collect();
    let truths: Vec<ModelParams> = records.iter().map(|r| r.theta.clone()).collect();
    Ok((mae.batch_loss(&denorm, &truths), residual))
}

/// Sets the output bias to the prior midpoint of `scenario`, with amplitudes
/// and baseline divided by the median norm of a pilot batch of spectra.
pub fn init_output_bias(model: &mut Mlp, sim: &Simulator, scenario: &Scenario, cfg: &TrainConfig) -> Result<()> {
    let table = sim.resolve(scenario)?;
    let pilot = sim.generate_training(scenario, cfg.seed, streams::INIT, 0, 256, cfg.exec)?;
    let mut norms: Vec<f64> = pilot.iter().map(|r| r.observed.norm()).collect();
    norms.sort_by(f64::total_cmp);
    let median = norms[norms.len() / 2];
    let target = table.midpoint().scale_linear(1.0 / median);
    model.set_output_bias(&target.to_vec())
}

/// Trains `model` for `cfg.max_steps` batches and returns the weights with
/// the lowest validation objective.
pub fn train(
    sim: &Simulator,
    scenario: &Scenario,
    mut model: Mlp,
    objective: Objective,
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport)> {
    cfg.validate()?;
    scenario.check_trainable()?;
    let layout = layout_of(&model)?;
    if layout != sim.model().layout() || model.spec().input_bins != sim.model().crop_len() {
        return Err(Error::Config("network does not match the signal model".into()));
    }
    let mae = ScaledMae::from_bounds(&sim.priors().theta_bounds())?;
    if cfg.bias_init {
        init_output_bias(&mut model, sim, scenario, cfg)?;
    }
    let sm = sim.model().clone();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), model.n_params());
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Mlp)> = None;
    let b = cfg.batch_size;

    for step in 1..=cfg.max_steps {
        let batch = sim.generate_training(scenario, cfg.seed, streams::TRAIN, ((step - 1) * b) as u64, b, cfg.exec)?;
        match objective {
            Objective::Supervised => {
                supervised_step(&mut model, &mut adam, &mae, &batch)?;
            }
            Objective::SelfSupervised => {
                let observed: Vec<&ComplexSpectrum> = batch.iter().map(|r| &r.observed).collect();
                let (units, _) = normalize_all(&observed)?;
                let refs: Vec<&ComplexSpectrum> = units.iter().collect();
                residual_step(&mut model, &mut adam, &sm, &refs, BnStats::Batch, true, cfg.exec)?;
            }
        }
        if step % cfg.validate_every == 0 || step == cfg.max_steps {
            let start = (history.len() * cfg.val_size) as u64;
            let val = sim.generate_training(scenario, cfg.seed, streams::VALIDATION, start, cfg.val_size, cfg.exec)?;
            let (scaled_mae, residual) = evaluate_losses(&model, &sm, &mae, &val, cfg.exec)?;
            let loss = match objective {
                Objective::Supervised => scaled_mae,
                Objective::SelfSupervised => residual,
            };
            check_finite(loss, "validation loss", step)?;
            log::info!("step {step}: validation scaled MAE {scaled_mae:.5}, residual {residual:.4e}");
            history.push(ValidationPoint {
                step,
                loss,
                scaled_mae,
                residual,
            });
            if best.as_ref().is_none_or(|(l, _, _)| loss < *l) {
                best = Some((loss, step, model.clone()));
            }
        }
    }
    let (best_loss, best_step, best_model) = best.expect("at least one validation runs");
    Ok((
        best_model,
        TrainReport {
            objective,
            steps: cfg.max_steps,
            history,
            best_step,
            best_loss,
        },
    ))
}

pub fn train_supervised(sim: &Simulator, scenario: &Scenario, model: Mlp, cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    train(sim, scenario, model, Objective::Supervised, cfg)
}

pub fn train_self_supervised(
    sim: &Simulator,
    scenario: &Scenario,
    model: Mlp,
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport)> {
    train(sim, scenario, model, Objective::SelfSupervised, cfg)
}
