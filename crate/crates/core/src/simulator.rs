//! Prior sampling, scenarios, dataset generation and perturbation sweeps.
//!
//! Every record owns a seed derived from `(master_seed, stream, index)`, so a
//! record can be regenerated alone and parallel generation matches serial.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{try_map_range, Exec};
use crate::signal::{
    add_noise, apply_random_walk, compute_snr, ModelParams, NoiseSpec, ParamLayout, RandomWalkSpec, SignalModel,
};
use crate::spectrum::ComplexSpectrum;

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.lo + (self.hi - self.lo) * u
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Err(Error::Config(format!("invalid range for {what}: [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// The middle half of `b`.
pub fn central_range(b: Bounds) -> Bounds {
    let q = 0.25 * b.width();
    Bounds::new(b.lo + q, b.hi - q)
}

/// A sampled quantity addressable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Param {
    Amplitude(usize),
    Gamma,
    SigmaG,
    Epsilon,
    Phi0,
    Phi1,
    /// Zero-based baseline coefficient index.
    Baseline(usize),
    NoiseSigma,
    RandomWalkStep,
    RandomWalkSmoothing,
    RandomWalkMin,
    RandomWalkMax,
}

impl Param {
    pub fn is_random_walk(self) -> bool {
        matches!(
            self,
            Param::RandomWalkStep | Param::RandomWalkSmoothing | Param::RandomWalkMin | Param::RandomWalkMax
        )
    }

    /// Index into the θ vector, if this is a θ component.
    pub fn theta_index(self, layout: ParamLayout) -> Option<usize> {
        match self {
            Param::Amplitude(m) => Some(layout.amplitude(m)),
            Param::Gamma => Some(layout.gamma()),
            Param::SigmaG => Some(layout.sigma_g()),
            Param::Epsilon => Some(layout.epsilon()),
            Param::Phi0 => Some(layout.phi0()),
            Param::Phi1 => Some(layout.phi1()),
            Param::Baseline(j) => Some(layout.baseline(j)),
            _ => None,
        }
    }

    /// Parses `a<1-based index>`, a metabolite name, `gamma`, `sigma_g`,
    /// `epsilon`, `phi0`, `phi1`, `b<1-based index>`, `noise_sigma`,
    /// `rw_step`, `rw_smoothing`, `rw_min` or `rw_max`.
    pub fn parse(name: &str, metabolites: &[String]) -> Result<Self> {
        if let Some(m) = metabolites.iter().position(|n| n == name) {
            return Ok(Param::Amplitude(m));
        }
        let p = match name {
            "gamma" => Param::Gamma,
            "sigma_g" => Param::SigmaG,
            "epsilon" => Param::Epsilon,
            "phi0" => Param::Phi0,
            "phi1" => Param::Phi1,
            "noise_sigma" => Param::NoiseSigma,
            "rw_step" => Param::RandomWalkStep,
            "rw_smoothing" => Param::RandomWalkSmoothing,
            "rw_min" => Param::RandomWalkMin,
            "rw_max" => Param::RandomWalkMax,
            _ => {
                let indexed = |prefix: &str| {
                    name.strip_prefix(prefix)
                        .and_then(|s| usize::from_str(s).ok())
                        .filter(|&i| i >= 1)
                        .map(|i| i - 1)
                };
                if let Some(i) = indexed("a") {
                    Param::Amplitude(i)
                } else if let Some(i) = indexed("b") {
                    Param::Baseline(i)
                } else {
                    return Err(Error::Validation(format!("unknown parameter '{name}'")));
                }
            }
        };
        Ok(p)
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Amplitude(m) => write!(f, "a{}", m + 1),
            Param::Gamma => f.write_str("gamma"),
            Param::SigmaG => f.write_str("sigma_g"),
            Param::Epsilon => f.write_str("epsilon"),
            Param::Phi0 => f.write_str("phi0"),
            Param::Phi1 => f.write_str("phi1"),
            Param::Baseline(j) => write!(f, "b{}", j + 1),
            Param::NoiseSigma => f.write_str("noise_sigma"),
            Param::RandomWalkStep => f.write_str("rw_step"),
            Param::RandomWalkSmoothing => f.write_str("rw_smoothing"),
            Param::RandomWalkMin => f.write_str("rw_min"),
            Param::RandomWalkMax => f.write_str("rw_max"),
        }
    }
}

/// Uniform sampling ranges for every simulated quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorTable {
    pub amplitudes: Vec<Bounds>,
    pub gamma: Bounds,
    pub sigma_g: Bounds,
    pub epsilon: Bounds,
    pub phi0: Bounds,
    pub phi1: Bounds,
    pub baseline: Vec<Bounds>,
    pub noise_sigma: Bounds,
    pub rw_step: Bounds,
    pub rw_smoothing: Bounds,
    pub rw_min: Bounds,
    pub rw_max: Bounds,
}

/// Amplitude ranges (mM) for the bundled basis, in its entry order.
const BRAIN_AMPLITUDES: [(f64, f64); 21] = [
    (0.0, 1.6),
    (0.0, 4.9),
    (0.0, 4.8),
    (3.9, 12.3),
    (0.0, 4.0),
    (0.0, 6.8),
    (6.0, 17.9),
    (0.0, 1.0),
    (0.0, 3.6),
    (0.0, 3.6),
    (4.0, 12.1),
    (0.0, 3.1),
    (0.0, 2.5),
    (7.5, 16.3),
    (0.0, 2.4),
    (0.0, 5.5),
    (0.0, 5.2),
    (0.0, 0.6),
    (0.0, 7.3),
    (1.2, 6.0),
    (0.0, 400.0),
];

const BRAIN_BASELINE: [(f64, f64); 6] = [
    (-600.0, 200.0),
    (-800.0, 300.0),
    (-1000.0, 600.0),
    (-600.0, 1000.0),
    (-1600.0, 200.0),
    (-400.0, 1000.0),
];

impl PriorTable {
    /// Ranges for the bundled 21-entry basis with a second-order baseline.
    pub fn brain_default() -> Self {
        Self {
            amplitudes: BRAIN_AMPLITUDES.iter().map(|&(a, b)| Bounds::new(a, b)).collect(),
            baseline: BRAIN_BASELINE.iter().map(|&(a, b)| Bounds::new(a, b)).collect(),
            ..Self::shared_rows()
        }
    }

    /// Same shape, line and noise ranges as the default, with `m` amplitude
    /// rows `[lo, hi]` and no baseline variation. Used with toy bases.
    pub fn uniform_amplitudes(m: usize, amplitude: Bounds, baseline_order: usize) -> Self {
        Self {
            amplitudes: vec![amplitude; m],
            baseline: vec![Bounds::point(0.0); 2 * (baseline_order + 1)],
            ..Self::shared_rows()
        }
    }

    fn shared_rows() -> Self {
        Self {
            amplitudes: Vec::new(),
            gamma: Bounds::new(2.0, 25.0),
            sigma_g: Bounds::new(2.0, 25.0),
            epsilon: Bounds::new(-10.0, 10.0),
            phi0: Bounds::new(-0.5, 0.5),
            phi1: Bounds::new(-1e-5, 1e-5),
            baseline: Vec::new(),
            noise_sigma: Bounds::new(10.0, std::f64::consts::SQRT_2 * 5000.0),
            rw_step: Bounds::new(0.0, 1e5),
            rw_smoothing: Bounds::new(1.0, 1e5),
            rw_min: Bounds::new(-1e6, 0.0),
            rw_max: Bounds::new(0.0, 1e6),
        }
    }

    pub fn layout(&self) -> Result<ParamLayout> {
        let nb = self.baseline.len();
        if nb < 2 || !nb.is_multiple_of(2) {
            return Err(Error::Config(format!("baseline prior needs 2(K+1) rows, got {nb}")));
        }
        Ok(ParamLayout::new(self.amplitudes.len(), nb / 2 - 1))
    }

    pub fn validate(&self) -> Result<()> {
        self.layout()?;
        for (m, b) in self.amplitudes.iter().enumerate() {
            b.validate(&format!("amplitude {}", m + 1))?;
            if b.lo < 0.0 {
                return Err(Error::Config(format!("amplitude {} range must be >= 0", m + 1)));
            }
        }
        for (j, b) in self.baseline.iter().enumerate() {
            b.validate(&format!("b{}", j + 1))?;
        }
        for (name, b) in [
            ("gamma", self.gamma),
            ("sigma_g", self.sigma_g),
            ("noise_sigma", self.noise_sigma),
            ("rw_step", self.rw_step),
        ] {
            b.validate(name)?;
            if b.lo < 0.0 {
                return Err(Error::Config(format!("{name} range must be >= 0")));
            }
        }
        for (name, b) in [("epsilon", self.epsilon), ("phi0", self.phi0), ("phi1", self.phi1)] {
            b.validate(name)?;
        }
        self.rw_smoothing.validate("rw_smoothing")?;
        self.rw_min.validate("rw_min")?;
        self.rw_max.validate("rw_max")?;
        if self.rw_smoothing.lo < 1.0 || self.rw_min.hi > 0.0 || self.rw_max.lo < 0.0 {
            return Err(Error::Config("random-walk ranges violate their invariants".into()));
        }
        Ok(())
    }

    pub fn get(&self, p: Param) -> Result<Bounds> {
        let row = match p {
            Param::Amplitude(m) => self.amplitudes.get(m).copied(),
            Param::Gamma => Some(self.gamma),
            Param::SigmaG => Some(self.sigma_g),
            Param::Epsilon => Some(self.epsilon),
            Param::Phi0 => Some(self.phi0),
            Param::Phi1 => Some(self.phi1),
            Param::Baseline(j) => self.baseline.get(j).copied(),
            Param::NoiseSigma => Some(self.noise_sigma),
            Param::RandomWalkStep => Some(self.rw_step),
            Param::RandomWalkSmoothing => Some(self.rw_smoothing),
            Param::RandomWalkMin => Some(self.rw_min),
            Param::RandomWalkMax => Some(self.rw_max),
        };
        row.ok_or_else(|| Error::Validation(format!("parameter {p} not in prior table")))
    }

    pub fn set(&mut self, p: Param, b: Bounds) -> Result<()> {
        let slot = match p {
            Param::Amplitude(m) => self.amplitudes.get_mut(m),
            Param::Gamma => Some(&mut self.gamma),
            Param::SigmaG => Some(&mut self.sigma_g),
            Param::Epsilon => Some(&mut self.epsilon),
            Param::Phi0 => Some(&mut self.phi0),
            Param::Phi1 => Some(&mut self.phi1),
            Param::Baseline(j) => self.baseline.get_mut(j),
            Param::NoiseSigma => Some(&mut self.noise_sigma),
            Param::RandomWalkStep => Some(&mut self.rw_step),
            Param::RandomWalkSmoothing => Some(&mut self.rw_smoothing),
            Param::RandomWalkMin => Some(&mut self.rw_min),
            Param::RandomWalkMax => Some(&mut self.rw_max),
        };
        *slot.ok_or_else(|| Error::Validation(format!("parameter {p} not in prior table")))? = b;
        Ok(())
    }

    /// Ranges of the θ components in [`ParamLayout`] order.
    pub fn theta_bounds(&self) -> Vec<Bounds> {
        let mut v = self.amplitudes.clone();
        v.extend([self.gamma, self.sigma_g, self.epsilon, self.phi0, self.phi1]);
        v.extend_from_slice(&self.baseline);
        v
    }

    /// θ at the center of every range.
    pub fn midpoint(&self) -> ModelParams {
        let v: Vec<f64> = self.theta_bounds().iter().map(Bounds::midpoint).collect();
        ModelParams::from_slice(&v, self.layout().expect("validated table")).expect("layout matches")
    }

    /// Whether θ and σ lie inside this table.
    pub fn contains(&self, theta: &ModelParams, noise_sigma: f64) -> bool {
        theta
            .to_vec()
            .iter()
            .zip(self.theta_bounds())
            .all(|(&v, b)| b.contains(v))
            && self.noise_sigma.contains(noise_sigma)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    MidRange,
    #[default]
    FullRange,
}

/// A sampling scenario on top of a prior table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub amplitude_mode: AmplitudeMode,
    /// Range replacements keyed by parameter name (see [`Param::parse`]).
    #[serde(default)]
    pub overrides: BTreeMap<String, Bounds>,
    /// Apply the random-walk corruption. Evaluation only.
    #[serde(default)]
    pub random_walk: bool,
}

impl Scenario {
    pub fn mid_range() -> Self {
        Self {
            name: "mid_range".into(),
            amplitude_mode: AmplitudeMode::MidRange,
            overrides: BTreeMap::new(),
            random_walk: false,
        }
    }

    pub fn full_range() -> Self {
        Self {
            name: "full_range".into(),
            amplitude_mode: AmplitudeMode::FullRange,
            overrides: BTreeMap::new(),
            random_walk: false,
        }
    }

    pub fn with_override(mut self, param: &str, b: Bounds) -> Self {
        self.overrides.insert(param.to_string(), b);
        self
    }

    /// Rejects scenarios that may not be used to generate training data.
    pub fn check_trainable(&self) -> Result<()> {
        if self.random_walk {
            return Err(Error::Config(format!(
                "scenario '{}' enables the random-walk corruption, which is evaluation-only",
                self.name
            )));
        }
        Ok(())
    }

    /// The effective prior table: amplitude mode applied, then overrides.
    pub fn resolve(&self, priors: &PriorTable, metabolites: &[String]) -> Result<PriorTable> {
        let mut table = priors.clone();
        if self.amplitude_mode == AmplitudeMode::MidRange {
            for b in table.amplitudes.iter_mut() {
                *b = central_range(*b);
            }
        }
        for (name, b) in &self.overrides {
            let p = Param::parse(name, metabolites)?;
            table.set(p, *b)?;
        }
        table.validate()?;
        Ok(table)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledParams {
    pub theta: ModelParams,
    pub noise: NoiseSpec,
    pub random_walk: Option<RandomWalkSpec>,
}

/// Draws θ, σ and (if enabled) random-walk parameters from `table`.
///
/// Fixed draw order: amplitudes, γ, ς, ε, φ0, φ1, baseline, σ, then the four
/// random-walk rows.
pub fn sample_params<R: Rng + ?Sized>(table: &PriorTable, random_walk: bool, rng: &mut R) -> Result<SampledParams> {
    let layout = table.layout()?;
    let values: Vec<f64> = table.theta_bounds().iter().map(|b| b.sample(rng)).collect();
    let theta = ModelParams::from_slice(&values, layout)?;
    let noise = NoiseSpec {
        sigma: table.noise_sigma.sample(rng),
    };
    let random_walk = random_walk.then(|| RandomWalkSpec {
        step_size: table.rw_step.sample(rng),
        smoothing: table.rw_smoothing.sample(rng),
        min_bound: table.rw_min.sample(rng),
        max_bound: table.rw_max.sample(rng),
    });
    Ok(SampledParams {
        theta,
        noise,
        random_walk,
    })
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of record `index` in stream `stream` under `master`:
/// `mix64(mix64(mix64(master) ^ stream) ^ index)`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(mix64(master) ^ stream) ^ index)
}

/// Stream identifiers used with [`derive_seed`].
pub mod streams {
    pub const TEST: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const VALIDATION: u64 = 3;
    pub const SWEEP: u64 = 4;
    pub const INIT: u64 = 5;
    pub const ADAPT: u64 = 6;
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::INFINITY {
            s.serialize_none()
        } else {
            Err(serde::ser::Error::custom(format!("cannot store {v}")))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Where a record sits in a perturbation sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub parameter: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub seed: u64,
    pub scenario: String,
    pub theta: ModelParams,
    pub noise_sigma: f64,
    pub clean: ComplexSpectrum,
    pub observed: ComplexSpectrum,
    /// +∞ for noiseless records, stored as `null` in JSON.
    #[serde(with = "infinite_as_null")]
    pub snr_db: f64,
    /// θ or σ outside the base prior table.
    pub ood: bool,
    pub corrupted: bool,
    pub sweep: Option<SweepPoint>,
}

/// Record generator for one forward model and prior table.
#[derive(Clone, Debug)]
pub struct Simulator {
    model: Arc<SignalModel>,
    priors: PriorTable,
}

impl Simulator {
    pub fn new(model: Arc<SignalModel>, priors: PriorTable) -> Result<Self> {
        priors.validate()?;
        let layout = priors.layout()?;
        if layout != model.layout() {
            return Err(Error::Config(format!(
                "prior table layout {layout:?} does not match model layout {:?}",
                model.layout()
            )));
        }
        Ok(Self { model, priors })
    }

    pub fn model(&self) -> &Arc<SignalModel> {
        &self.model
    }

    pub fn priors(&self) -> &PriorTable {
        &self.priors
    }

    pub fn metabolite_names(&self) -> Vec<String> {
        self.model.basis().names()
    }

    pub fn resolve(&self, scenario: &Scenario) -> Result<PriorTable> {
        scenario.resolve(&self.priors, &self.metabolite_names())
    }

    /// Simulates one record from `seed`.
    pub fn record(&self, table: &PriorTable, scenario: &Scenario, seed: u64) -> Result<SampleRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sampled = sample_params(table, scenario.random_walk, &mut rng)?;
        self.record_from(sampled, scenario, seed, &mut rng)
    }

    fn record_from(
        &self,
        sampled: SampledParams,
        scenario: &Scenario,
        seed: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<SampleRecord> {
        let SampledParams {
            theta,
            noise,
            random_walk,
        } = sampled;
        let clean = self.model.forward(&theta)?;
        let mut observed = add_noise(&clean, noise, rng)?;
        let mut corrupted = false;
        if let Some(rw) = random_walk {
            observed = apply_random_walk(&observed, rw, rng)?;
            corrupted = rw.step_size > 0.0;
        }
        let metab = self.model.metabolite_only(&theta)?;
        let snr_db = if noise.sigma > 0.0 {
            compute_snr(&metab, noise.sigma)?
        } else {
            f64::INFINITY
        };
        Ok(SampleRecord {
            seed,
            scenario: scenario.name.clone(),
            ood: !self.priors.contains(&theta, noise.sigma),
            theta,
            noise_sigma: noise.sigma,
            clean,
            observed,
            snr_db,
            corrupted,
            sweep: None,
        })
    }

    /// Records `start..start + n` of `stream` under `master_seed`.
    pub fn generate_range(
        &self,
        scenario: &Scenario,
        master_seed: u64,
        stream: u64,
        start: u64,
        n: usize,
        exec: Exec,
    ) -> Result<Vec<SampleRecord>> {
        let table = self.resolve(scenario)?;
        try_map_range(n, exec, |i| {
            self.record(&table, scenario, derive_seed(master_seed, stream, start + i as u64))
        })
    }

    /// `n` test-stream records.
    pub fn generate_dataset(
        &self,
        n: usize,
        scenario: &Scenario,
        master_seed: u64,
        exec: Exec,
    ) -> Result<Vec<SampleRecord>> {
        if n == 0 {
            return Err(Error::Validation("dataset size must be >= 1".into()));
        }
        self.generate_range(scenario, master_seed, streams::TEST, 0, n, exec)
    }

    /// Training records; refuses scenarios with evaluation-only corruption.
    pub fn generate_training(
        &self,
        scenario: &Scenario,
        master_seed: u64,
        stream: u64,
        start: u64,
        n: usize,
        exec: Exec,
    ) -> Result<Vec<SampleRecord>> {
        scenario.check_trainable()?;
        self.generate_range(scenario, master_seed, stream, start, n, exec)
    }

    /// `n_per_value` records per grid value with `parameter` pinned.
    ///
    /// Sweeping a random-walk row switches the corruption on.
    pub fn make_sweep(
        &self,
        parameter: &str,
        grid: &[f64],
        base: &Scenario,
        n_per_value: usize,
        master_seed: u64,
        exec: Exec,
    ) -> Result<Vec<SampleRecord>> {
        let p = Param::parse(parameter, &self.metabolite_names())?;
        self.priors.get(p)?;
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("sweep grid contains non-finite values".into()));
        }
        let mut out = Vec::with_capacity(grid.len() * n_per_value);
        for (g, &value) in grid.iter().enumerate() {
            let mut scenario = base.clone();
            scenario.name = format!("{}:{}={}", base.name, p, value);
            scenario.random_walk |= p.is_random_walk();
            let mut table = self.resolve(&scenario)?;
            // Pinned values may leave the table's invariants on purpose.
            table.set(p, Bounds::point(value))?;
            let offset = (g * n_per_value) as u64;
            let records = try_map_range(n_per_value, exec, |i| {
                let seed = derive_seed(master_seed, streams::SWEEP, offset + i as u64);
                let mut rec = self.record(&table, &scenario, seed)?;
                rec.sweep = Some(SweepPoint {
                    parameter: p.to_string(),
                    value,
                });
                if p.is_random_walk() || p == Param::NoiseSigma {
                    rec.ood |= !self.priors.get(p)?.contains(value);
                }
                Ok::<_, Error>(rec)
            })?;
            out.extend(records);
        }
        Ok(out)
    }
}

impl fmt::Display for AmplitudeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AmplitudeMode::MidRange => "mid_range",
            AmplitudeMode::FullRange => "full_range",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axis::SpectralAxis;
    use crate::basis::{synthesize_basis, BasisSpec};
    use approx::assert_relative_eq;

    fn simulator() -> Simulator {
        let axis = SpectralAxis::default();
        let basis = synthesize_basis(&BasisSpec::default_brain(), &axis).unwrap();
        let model = Arc::new(SignalModel::new(axis, basis, 2).unwrap());
        Simulator::new(model, PriorTable::brain_default()).unwrap()
    }

    #[test]
    fn central_range_examples() {
        let cr = central_range(Bounds::new(3.9, 12.3));
        assert_relative_eq!(cr.lo, 6.0, epsilon = 1e-12);
        assert_relative_eq!(cr.hi, 10.2, epsilon = 1e-12);
        assert_eq!(central_range(Bounds::point(0.0)), Bounds::point(0.0));
        let naa = central_range(Bounds::new(7.5, 16.3));
        assert_relative_eq!(naa.lo, 9.7, epsilon = 1e-12);
        assert_relative_eq!(naa.hi, 14.1, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_priors_give_point_mass() {
        let mut t = PriorTable::brain_default();
        let mid = t.midpoint();
        let bounds: Vec<Bounds> = mid.to_vec().iter().map(|&v| Bounds::point(v)).collect();
        let layout = t.layout().unwrap();
        t.amplitudes = bounds[layout.amplitudes()].to_vec();
        t.gamma = bounds[layout.gamma()];
        t.sigma_g = bounds[layout.sigma_g()];
        t.epsilon = bounds[layout.epsilon()];
        t.phi0 = bounds[layout.phi0()];
        t.phi1 = bounds[layout.phi1()];
        t.baseline = bounds[layout.baselines()].to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = sample_params(&t, false, &mut rng).unwrap();
        assert_eq!(s.theta, mid);
    }

    #[test]
    fn mid_range_draws_stay_inside_central_range() {
        let priors = PriorTable::brain_default();
        let table = Scenario::mid_range().resolve(&priors, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10_000 {
            let s = sample_params(&table, false, &mut rng).unwrap();
            for (a, b) in s.theta.amplitudes.iter().zip(&priors.amplitudes) {
                assert!(central_range(*b).contains(*a));
            }
            assert!(priors.contains(&s.theta, s.noise.sigma));
        }
    }

    #[test]
    fn full_range_covers_cr_span() {
        let priors = PriorTable::brain_default();
        let table = Scenario::full_range().resolve(&priors, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..10_000 {
            let a = sample_params(&table, false, &mut rng).unwrap().theta.amplitudes[3];
            lo = lo.min(a);
            hi = hi.max(a);
        }
        let span = 12.3 - 3.9;
        assert!((lo - 3.9).abs() < 0.01 * span && (hi - 12.3).abs() < 0.01 * span);
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
    }

    #[test]
    fn records_reproducible_and_consistent() {
        let sim = simulator();
        let a = sim.generate_dataset(3, &Scenario::mid_range(), 7, Exec::Sequential).unwrap();
        let b = sim.generate_dataset(3, &Scenario::mid_range(), 7, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let table = sim.resolve(&Scenario::mid_range()).unwrap();
        let alone = sim.record(&table, &Scenario::mid_range(), a[2].seed).unwrap();
        assert_eq!(alone, a[2]);
        for r in &a {
            let clean = sim.model().forward(&r.theta).unwrap();
            assert_eq!(clean, r.clean);
            let metab = sim.model().metabolite_only(&r.theta).unwrap();
            assert_relative_eq!(compute_snr(&metab, r.noise_sigma).unwrap(), r.snr_db);
            assert!(!r.ood && !r.corrupted);
        }
        assert!(sim.generate_dataset(0, &Scenario::mid_range(), 7, Exec::Sequential).is_err());
    }

    #[test]
    fn sweep_pins_values_and_flags_ood() {
        let sim = simulator();
        let grid: Vec<f64> = (0..21).map(|i| -std::f64::consts::PI + i as f64 * std::f64::consts::PI / 10.0).collect();
        let recs = sim.make_sweep("phi0", &grid, &Scenario::mid_range(), 1, 3, Exec::Sequential).unwrap();
        let got: Vec<f64> = recs.iter().map(|r| r.theta.phi0).collect();
        assert_eq!(got, grid);

        let recs = sim
            .make_sweep("epsilon", &[-40.0, 0.0, 40.0], &Scenario::mid_range(), 2, 3, Exec::Sequential)
            .unwrap();
        let flags: Vec<bool> = recs.iter().map(|r| r.ood).collect();
        assert_eq!(flags, vec![true, true, false, false, true, true]);

        let recs = sim
            .make_sweep("rw_step", &[0.0, 1e3, 1e5], &Scenario::mid_range(), 1, 3, Exec::Sequential)
            .unwrap();
        assert_eq!(recs.iter().map(|r| r.corrupted).collect::<Vec<_>>(), vec![false, true, true]);

        assert!(matches!(
            sim.make_sweep("nope", &[0.0], &Scenario::mid_range(), 1, 3, Exec::Sequential),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn training_refuses_random_walk() {
        let sim = simulator();
        let mut sc = Scenario::full_range();
        sc.random_walk = true;
        assert!(matches!(
            sim.generate_training(&sc, 1, streams::TRAIN, 0, 2, Exec::Sequential),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn param_names_roundtrip() {
        let names = simulator().metabolite_names();
        for p in [Param::Amplitude(3), Param::Gamma, Param::Baseline(5), Param::NoiseSigma, Param::RandomWalkMax] {
            assert_eq!(Param::parse(&p.to_string(), &names).unwrap(), p);
        }
        assert_eq!(Param::parse("NAA", &names).unwrap(), Param::Amplitude(13));
        assert!(Param::parse("a0", &names).is_err());
    }
}
