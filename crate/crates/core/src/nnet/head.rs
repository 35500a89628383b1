use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ParamLayout;

/// Default scale of the first-order phase output, rad/Hz.
pub const DEFAULT_PHI1_SCALE: f64 = 1e-4;

/// Maps raw network outputs onto constrained signal parameters.
///
/// Physics head, per component of [`ParamLayout`]: amplitudes softplus,
/// γ and ς softplus + 1, ε and φ0 identity, φ1 `s·tanh`, baseline identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Physics { layout: ParamLayout, phi1_scale: f64 },
    Identity { width: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Act {
    Softplus,
    SoftplusPlusOne,
    Linear,
    ScaledTanh,
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of softplus for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    // x = y + ln(1 - e^{-y})
    y + (-(-y).exp_m1()).ln()
}

impl Head {
    pub fn physics(layout: ParamLayout) -> Self {
        Head::Physics {
            layout,
            phi1_scale: DEFAULT_PHI1_SCALE,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Head::Physics { layout, .. } => layout.len(),
            Head::Identity { width } => *width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Head::Physics { phi1_scale, .. } = self {
            if !(phi1_scale.is_finite() && *phi1_scale > 0.0) {
                return Err(Error::Config(format!("phi1 scale must be positive, got {phi1_scale}")));
            }
        }
        Ok(())
    }

    fn act(&self, i: usize) -> Act {
        match self {
            Head::Identity { .. } => Act::Linear,
            Head::Physics { layout, .. } => {
                if i < layout.n_amplitudes {
                    Act::Softplus
                } else if i == layout.gamma() || i == layout.sigma_g() {
                    Act::SoftplusPlusOne
                } else if i == layout.phi1() {
                    Act::ScaledTanh
                } else {
                    Act::Linear
                }
            }
        }
    }

    fn phi1_scale(&self) -> f64 {
        match self {
            Head::Physics { phi1_scale, .. } => *phi1_scale,
            Head::Identity { .. } => 1.0,
        }
    }

    /// Constrained outputs for one raw row.
    pub fn apply(&self, raw: &[f64], out: &mut [f64]) {
        let s = self.phi1_scale();
        for (i, (&r, o)) in raw.iter().zip(out.iter_mut()).enumerate() {
            *o = match self.act(i) {
                Act::Softplus => softplus(r),
                Act::SoftplusPlusOne => softplus(r) + 1.0,
                Act::Linear => r,
                Act::ScaledTanh => s * r.tanh(),
            };
        }
    }

    /// Overwrites `grad` (cotangent of the outputs) with the cotangent of the
    /// raw inputs.
    pub fn backward(&self, raw: &[f64], grad: &mut [f64]) {
        let s = self.phi1_scale();
        for (i, (&r, g)) in raw.iter().zip(grad.iter_mut()).enumerate() {
            *g *= match self.act(i) {
                Act::Softplus | Act::SoftplusPlusOne => sigmoid(r),
                Act::Linear => 1.0,
                Act::ScaledTanh => {
                    let t = r.tanh();
                    s * (1.0 - t * t)
                }
            };
        }
    }

    /// Raw values that map to `target`. Targets outside the head's range are
    /// pulled just inside it.
    pub fn inverse(&self, target: &[f64]) -> Vec<f64> {
        let s = self.phi1_scale();
        target
            .iter()
            .enumerate()
            .map(|(i, &t)| match self.act(i) {
                Act::Softplus => softplus_inv(t.max(1e-300)),
                Act::SoftplusPlusOne => softplus_inv((t - 1.0).max(1e-300)),
                Act::Linear => t,
                Act::ScaledTanh => (t / s).clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh(),
            })
            .collect()
    }
}
