//! Direct gradient fitting of the signal model to one spectrum, without any
//! network. Optimization runs on unconstrained values that pass through the
//! same head activations the network uses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{Adam, AdamConfig, Head};
use crate::par::{try_map_slice, Exec};
use crate::signal::{ModelParams, SignalModel};
use crate::simulator::PriorTable;
use crate::spectrum::ComplexSpectrum;
use crate::strategies::norm::{denormalize, normalize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub lr: f64,
    pub steps: usize,
    /// When false the baseline is held at zero.
    pub fit_baseline: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            steps: 1000,
            fit_baseline: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("fit learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    /// Best estimate, in the units of the input spectrum.
    pub theta: ModelParams,
    /// Residual of the best estimate on the normalized spectrum.
    pub loss: f64,
    /// Step at which the best estimate was seen (0 = initialization).
    pub best_step: usize,
    /// Normalized residual before each update, then after the last one.
    pub trace: Vec<f64>,
}

/// Starting point: amplitudes at the prior midpoints, γ = ς = 10, all shifts,
/// phases and baseline coefficients zero.
pub fn default_init(priors: &PriorTable) -> Result<ModelParams> {
    let mut theta = ModelParams::zeros(priors.layout()?);
    theta.amplitudes = priors.amplitudes.iter().map(|b| b.midpoint()).collect();
    theta.gamma = 10.0;
    theta.sigma_g = 10.0;
    Ok(theta)
}

/// Fits `y` starting from `init` (in the units of `y`).
pub fn fit_model_based(
    model: &SignalModel,
    head: &Head,
    y: &ComplexSpectrum,
    init: &ModelParams,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let layout = model.layout();
    if init.layout()? != layout || head.width() != layout.len() {
        return Err(Error::Validation("initial parameters do not match the signal model".into()));
    }
    let (y_unit, ctx) = normalize(y)?;
    let mut start = init.scale_linear(1.0 / ctx.norm);
    if !cfg.fit_baseline {
        start.baseline.iter_mut().for_each(|b| *b = 0.0);
    }
    let mut raw = head.inverse(&start.to_vec());
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), raw.len());
    let mut theta = vec![0.0; raw.len()];
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let mut best = (f64::INFINITY, 0usize, raw.clone());

    for step in 0..=cfg.steps {
        head.apply(&raw, &mut theta);
        let params = ModelParams::from_slice(&theta, layout)?;
        let (loss, mut grad) = model.residual_gradient(&params, &y_unit)?;
        if !loss.is_finite() {
            let tail = &trace[trace.len().saturating_sub(5)..];
            return Err(Error::Numeric(format!(
                "model-based fit diverged at step {step}; preceding losses {tail:?}"
            )));
        }
        trace.push(loss);
        if loss < best.0 {
            best = (loss, step, raw.clone());
        }
        if step == cfg.steps {
            break;
        }
        head.backward(&raw, &mut grad);
        if !cfg.fit_baseline {
            for j in layout.baselines() {
                grad[j] = 0.0;
            }
        }
        adam.step(&mut raw, &grad)?;
    }

    let (loss, best_step, best_raw) = best;
    head.apply(&best_raw, &mut theta);
    let theta = denormalize(&ModelParams::from_slice(&theta, layout)?, ctx);
    Ok(FitResult {
        theta,
        loss,
        best_step,
        trace,
    })
}

/// Independent fits of every spectrum in `ys`.
pub fn fit_many(
    model: &SignalModel,
    head: &Head,
    ys: &[&ComplexSpectrum],
    init: &ModelParams,
    cfg: &FitConfig,
    exec: Exec,
) -> Result<Vec<FitResult>> {
    try_map_slice(ys, exec, |y| fit_model_based(model, head, y, init, cfg))
}
