use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Component order of the flat parameter vector:
/// `[a_1..a_M, γ, ς, ε, φ0, φ1, b_1..b_{2(K+1)}]`, where the baseline block
/// holds the K+1 real coefficients followed by the K+1 imaginary ones, each in
/// ascending power order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub n_amplitudes: usize,
    pub baseline_order: usize,
}

impl ParamLayout {
    pub const fn new(n_amplitudes: usize, baseline_order: usize) -> Self {
        Self {
            n_amplitudes,
            baseline_order,
        }
    }

    pub const fn len(&self) -> usize {
        self.n_amplitudes + 5 + self.n_baseline()
    }

    pub const fn is_empty(&self) -> bool {
        false
    }

    pub const fn n_baseline(&self) -> usize {
        2 * (self.baseline_order + 1)
    }

    pub const fn amplitude(&self, m: usize) -> usize {
        m
    }

    pub const fn gamma(&self) -> usize {
        self.n_amplitudes
    }

    pub const fn sigma_g(&self) -> usize {
        self.n_amplitudes + 1
    }

    pub const fn epsilon(&self) -> usize {
        self.n_amplitudes + 2
    }

    pub const fn phi0(&self) -> usize {
        self.n_amplitudes + 3
    }

    pub const fn phi1(&self) -> usize {
        self.n_amplitudes + 4
    }

    pub const fn baseline(&self, j: usize) -> usize {
        self.n_amplitudes + 5 + j
    }

    pub fn amplitudes(&self) -> std::ops::Range<usize> {
        0..self.n_amplitudes
    }

    pub fn baselines(&self) -> std::ops::Range<usize> {
        self.baseline(0)..self.len()
    }

    /// Whether component `i` scales linearly with the spectrum (amplitudes
    /// and baseline coefficients).
    pub fn is_scale_carrying(&self, i: usize) -> bool {
        i < self.n_amplitudes || i >= self.baseline(0)
    }

    /// Human-readable component names given the metabolite names.
    pub fn component_names(&self, metabolites: &[String]) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_amplitudes)
            .map(|m| {
                metabolites
                    .get(m)
                    .map(|n| format!("a_{n}"))
                    .unwrap_or_else(|| format!("a_{}", m + 1))
            })
            .collect();
        names.extend(["gamma", "sigma_g", "epsilon", "phi0", "phi1"].map(String::from));
        names.extend((1..=self.n_baseline()).map(|j| format!("b{j}")));
        names
    }
}

/// Signal-model parameters θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Concentrations in mM; the macromolecule amplitude is one of them.
    pub amplitudes: Vec<f64>,
    /// Lorentzian broadening γ, s⁻¹.
    pub gamma: f64,
    /// Gaussian broadening ς, s⁻¹.
    pub sigma_g: f64,
    /// Global frequency shift ε, rad/s.
    pub epsilon: f64,
    /// Zeroth-order phase, rad.
    pub phi0: f64,
    /// First-order phase, rad/Hz.
    pub phi1: f64,
    pub baseline: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(layout: ParamLayout) -> Self {
        Self {
            amplitudes: vec![0.0; layout.n_amplitudes],
            gamma: 0.0,
            sigma_g: 0.0,
            epsilon: 0.0,
            phi0: 0.0,
            phi1: 0.0,
            baseline: vec![0.0; layout.n_baseline()],
        }
    }

    pub fn layout(&self) -> Result<ParamLayout> {
        let nb = self.baseline.len();
        if nb < 2 || !nb.is_multiple_of(2) {
            return Err(Error::Validation(format!(
                "baseline must hold 2(K+1) coefficients, got {nb}"
            )));
        }
        Ok(ParamLayout::new(self.amplitudes.len(), nb / 2 - 1))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.amplitudes.len() + 5 + self.baseline.len());
        v.extend_from_slice(&self.amplitudes);
        v.extend([self.gamma, self.sigma_g, self.epsilon, self.phi0, self.phi1]);
        v.extend_from_slice(&self.baseline);
        v
    }

    pub fn from_slice(v: &[f64], layout: ParamLayout) -> Result<Self> {
        if v.len() != layout.len() {
            return Err(Error::Validation(format!(
                "parameter vector has {} components, layout expects {}",
                v.len(),
                layout.len()
            )));
        }
        Ok(Self {
            amplitudes: v[layout.amplitudes()].to_vec(),
            gamma: v[layout.gamma()],
            sigma_g: v[layout.sigma_g()],
            epsilon: v[layout.epsilon()],
            phi0: v[layout.phi0()],
            phi1: v[layout.phi1()],
            baseline: v[layout.baselines()].to_vec(),
        })
    }

    /// Checks the physical invariants: finite, nonnegative amplitudes and
    /// broadenings.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.to_vec().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                index: i,
                context: "model parameter".into(),
            });
        }
        if let Some(m) = self.amplitudes.iter().position(|&a| a < 0.0) {
            return Err(Error::Validation(format!(
                "amplitude {m} is negative ({})",
                self.amplitudes[m]
            )));
        }
        if self.gamma < 0.0 || self.sigma_g < 0.0 {
            return Err(Error::Validation(format!(
                "broadenings must be nonnegative (gamma {}, sigma_g {})",
                self.gamma, self.sigma_g
            )));
        }
        Ok(())
    }

    /// Multiplies amplitudes and baseline by `c`; shape parameters unchanged.
    pub fn scale_linear(&self, c: f64) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|a| a * c).collect(),
            baseline: self.baseline.iter().map(|b| b * c).collect(),
            ..self.clone()
        }
    }
}
