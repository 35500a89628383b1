//! Experiment configuration.
//!
//! A run starts from a preset, deep-merges the user's JSON file over it and
//! finally applies command-line overrides.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::axis::AxisConfig;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::simulator::{AmplitudeMode, PriorTable};
use crate::strategies::{AdaptConfig, FitConfig, TrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Reduced sizes that finish on a desktop CPU.
    #[default]
    Desk,
    /// Full-scale sizes: 10k test spectra, long training, 1000 domain epochs.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::Config(format!("unknown preset '{s}' (expected desk or paper)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    ModelBased,
    Supervised,
    SelfSupervised,
    TtaInstance,
    TtaOnline,
    TtaDomain,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::ModelBased,
        StrategyKind::Supervised,
        StrategyKind::SelfSupervised,
        StrategyKind::TtaInstance,
        StrategyKind::TtaOnline,
        StrategyKind::TtaDomain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::ModelBased => "model_based",
            StrategyKind::Supervised => "supervised",
            StrategyKind::SelfSupervised => "self_supervised",
            StrategyKind::TtaInstance => "tta_instance",
            StrategyKind::TtaOnline => "tta_online",
            StrategyKind::TtaDomain => "tta_domain",
        }
    }

    /// Whether the strategy needs a trained network for the scenario.
    pub fn uses_network(self) -> bool {
        self != StrategyKind::ModelBased
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

/// Network the adaptation strategies start from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptInit {
    #[default]
    Supervised,
    SelfSupervised,
    Scratch,
}

/// One evaluation condition: networks trained on `train`, tested on `test`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub train: AmplitudeMode,
    pub test: AmplitudeMode,
}

impl ScenarioSpec {
    pub fn new(name: &str, train: AmplitudeMode, test: AmplitudeMode) -> Self {
        Self {
            name: name.into(),
            train,
            test,
        }
    }

    /// ID-mid, OoD-full and ID-full.
    pub fn standard() -> Vec<Self> {
        use AmplitudeMode::*;
        vec![
            Self::new("id_mid_range", MidRange, MidRange),
            Self::new("ood_full_range", MidRange, FullRange),
            Self::new("id_full_trained", FullRange, FullRange),
        ]
    }
}

/// A perturbation sweep: `parameter` pinned at each grid value on top of the
/// `base` amplitude mode, evaluated with networks trained on `train`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    pub grid: Vec<f64>,
    pub n_per_value: usize,
    #[serde(default = "mid")]
    pub base: AmplitudeMode,
    #[serde(default = "mid")]
    pub train: AmplitudeMode,
}

fn mid() -> AmplitudeMode {
    AmplitudeMode::MidRange
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub axis: AxisConfig,
    /// Basis definition file; the bundled basis when absent.
    pub basis: Option<PathBuf>,
    pub baseline_order: usize,
    /// Prior table; the built-in brain table when absent.
    pub priors: Option<PriorTable>,
    pub scenarios: Vec<ScenarioSpec>,
    pub strategies: Vec<StrategyKind>,
    pub test_size: usize,
    pub train: TrainConfig,
    pub fit: FitConfig,
    pub adapt: AdaptConfig,
    pub adapt_init: AdaptInit,
    /// Where trained networks are cached; `<out_dir>/checkpoints` when absent.
    pub checkpoint_dir: Option<PathBuf>,
    /// Train networks that have no matching checkpoint.
    pub train_missing: bool,
    pub sweeps: Vec<SweepSpec>,
    pub timing_repeats: usize,
    pub exec: Exec,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let desk = preset == Preset::Desk;
        Self {
            preset,
            seed: 42,
            out_dir: PathBuf::from("runs"),
            axis: AxisConfig::default(),
            basis: None,
            baseline_order: 2,
            priors: None,
            scenarios: ScenarioSpec::standard(),
            strategies: StrategyKind::ALL.to_vec(),
            test_size: if desk { 1000 } else { 10_000 },
            train: TrainConfig {
                // 50k samples at desk scale.
                max_steps: if desk { 3125 } else { 100_000 },
                ..TrainConfig::default()
            },
            fit: FitConfig::default(),
            adapt: AdaptConfig {
                epochs: if desk { 20 } else { 1000 },
                ..AdaptConfig::default()
            },
            adapt_init: AdaptInit::Supervised,
            checkpoint_dir: None,
            train_missing: true,
            sweeps: vec![SweepSpec {
                parameter: "phi0".into(),
                grid: vec![-3.0, -2.0, -1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 2.0, 3.0],
                n_per_value: if desk { 50 } else { 1000 },
                base: AmplitudeMode::MidRange,
                train: AmplitudeMode::MidRange,
            }],
            timing_repeats: 3,
            exec: Exec::Parallel,
        }
    }

    /// Preset values overlaid with a JSON document (objects merge key by key).
    pub fn from_json_over_preset(preset: Preset, json: &str) -> Result<Self> {
        let mut base = serde_json::to_value(Self::preset(preset))?;
        let user: serde_json::Value =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        if !user.is_object() {
            return Err(Error::Config("config must be a JSON object".into()));
        }
        merge(&mut base, user);
        let cfg: Self = serde_json::from_value(base).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A `"preset"` key in the file selects the base
    /// unless `preset` is given.
    pub fn load(path: &Path, preset: Option<Preset>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let chosen = match preset {
            Some(p) => p,
            None => {
                let v: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
                match v.get("preset") {
                    Some(p) => serde_json::from_value(p.clone())
                        .map_err(|e| Error::Config(format!("invalid preset: {e}")))?,
                    None => Preset::Desk,
                }
            }
        };
        let mut cfg = Self::from_json_over_preset(chosen, &text)?;
        cfg.preset = chosen;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for s in &self.scenarios {
            if !names.insert(&s.name) {
                return Err(Error::Config(format!("duplicate scenario name '{}'", s.name)));
            }
        }
        let mut kinds = BTreeSet::new();
        for k in &self.strategies {
            if !kinds.insert(k) {
                return Err(Error::Config(format!("strategy '{k}' listed twice")));
            }
        }
        if self.test_size == 0 {
            return Err(Error::Config("test_size must be positive".into()));
        }
        if self.timing_repeats < 3 {
            return Err(Error::Config("timing_repeats must be at least 3".into()));
        }
        for s in &self.sweeps {
            if s.grid.is_empty() || s.n_per_value == 0 {
                return Err(Error::Config(format!("sweep over '{}' is empty", s.parameter)));
            }
        }
        self.train.validate()?;
        self.fit.validate()?;
        self.adapt.validate()?;
        Ok(())
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.checkpoint_dir.clone().unwrap_or_else(|| self.out_dir.join("checkpoints"))
    }

    /// Propagates the master seed and execution mode into the strategy
    /// configs.
    pub fn finalize(&mut self) {
        self.train.seed = self.seed;
        self.adapt.seed = self.seed;
        self.train.exec = self.exec;
        self.adapt.exec = self.exec;
    }
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}
