//! Scenario suite: trains (or loads) the networks each scenario needs, runs
//! every configured strategy on the scenario test sets and collects
//! per-spectrum records.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::axis::SpectralAxis;
use crate::basis::{synthesize_basis, BasisSpec};
use crate::error::{Error, Result};
use crate::harness::config::{AdaptInit, ExperimentConfig, StrategyKind};
use crate::harness::dataset_io::model_fingerprint;
use crate::harness::report::{summarize, write_csv, write_json, EvalRecord, SummaryRow};
use crate::harness::timing::{measure_time, TimingStats};
use crate::nnet::{Checkpoint, Head, Mlp, MlpSpec};
use crate::signal::{ModelParams, SignalModel};
use crate::simulator::{derive_seed, streams, AmplitudeMode, PriorTable, SampleRecord, Scenario, Simulator};
use crate::spectrum::ComplexSpectrum;
use crate::strategies::train::init_output_bias;
use crate::strategies::{
    default_init, fit_many, predict_adapted, predict_par, train, tta_domain, tta_instance_many, tta_online, Objective,
    TrainReport,
};

/// Spectra used for each timing measurement.
pub const TIMING_SAMPLES: usize = 32;

/// The simulator and networks behind one experiment configuration.
pub struct Workbench {
    pub cfg: ExperimentConfig,
    pub sim: Simulator,
    pub fingerprint: String,
}

/// A strategy ready to run: the network it starts from, if any.
pub struct Prepared {
    pub kind: StrategyKind,
    pub network: Option<Mlp>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub strategy: String,
    pub scenario: String,
    pub n_samples: usize,
    pub median_ms: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SuiteOutput {
    pub records: Vec<EvalRecord>,
    pub summary: Vec<SummaryRow>,
    pub timing: Vec<TimingRow>,
}

pub fn scenario_for(mode: AmplitudeMode) -> Scenario {
    match mode {
        AmplitudeMode::MidRange => Scenario::mid_range(),
        AmplitudeMode::FullRange => Scenario::full_range(),
    }
}

fn objective_name(o: Objective) -> &'static str {
    match o {
        Objective::Supervised => "supervised",
        Objective::SelfSupervised => "self_supervised",
    }
}

impl Workbench {
    pub fn new(mut cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.finalize();
        let axis = SpectralAxis::new(cfg.axis.clone()).map_err(|e| Error::Config(format!("axis: {e}")))?;
        let spec = match &cfg.basis {
            Some(p) => BasisSpec::load(p).map_err(|e| Error::Config(format!("basis {}: {e}", p.display())))?,
            None => BasisSpec::default_brain(),
        };
        let basis = synthesize_basis(&spec, &axis).map_err(|e| Error::Config(format!("basis: {e}")))?;
        let model = Arc::new(SignalModel::new(axis, basis, cfg.baseline_order)?);
        let priors = cfg.priors.clone().unwrap_or_else(PriorTable::brain_default);
        let sim = Simulator::new(model.clone(), priors).map_err(|e| Error::Config(format!("priors: {e}")))?;
        let fingerprint = model_fingerprint(&model);
        Ok(Self { cfg, sim, fingerprint })
    }

    pub fn model(&self) -> &Arc<SignalModel> {
        self.sim.model()
    }

    pub fn mm_index(&self) -> Option<usize> {
        self.model().basis().mm_index()
    }

    pub fn network_spec(&self) -> MlpSpec {
        MlpSpec::standard(self.model().crop_len(), self.model().layout())
    }

    /// The test set of an amplitude mode; identical across scenarios that
    /// share the mode.
    pub fn test_set(&self, mode: AmplitudeMode) -> Result<Vec<SampleRecord>> {
        self.sim
            .generate_dataset(self.cfg.test_size, &scenario_for(mode), self.cfg.seed, self.cfg.exec)
    }

    fn init_seed(&self, objective: Objective, mode: AmplitudeMode) -> u64 {
        let o = match objective {
            Objective::Supervised => 0,
            Objective::SelfSupervised => 1,
        };
        let m = match mode {
            AmplitudeMode::MidRange => 0,
            AmplitudeMode::FullRange => 1,
        };
        derive_seed(self.cfg.seed, streams::INIT, 10 + 2 * o + m)
    }

    pub fn checkpoint_path(&self, objective: Objective, mode: AmplitudeMode) -> PathBuf {
        self.cfg
            .checkpoint_dir()
            .join(format!("{}_{}.ckpt", objective_name(objective), mode))
    }

    fn checkpoint_metadata(&self, objective: Objective, mode: AmplitudeMode) -> serde_json::Value {
        serde_json::json!({
            "objective": objective_name(objective),
            "train_range": mode.to_string(),
            "seed": self.cfg.seed,
            "train": self.cfg.train,
            "fingerprint": self.fingerprint,
            "priors": self.sim.priors(),
        })
    }

    /// The network trained with `objective` on `mode`, from the checkpoint
    /// cache when it holds a matching run, otherwise trained now (if allowed).
    pub fn trained_model(&self, objective: Objective, mode: AmplitudeMode) -> Result<(Mlp, Option<TrainReport>)> {
        let path = self.checkpoint_path(objective, mode);
        let meta = self.checkpoint_metadata(objective, mode);
        if path.exists() {
            let ck = Checkpoint::load_expecting(&path, &self.network_spec())?;
            if ck.metadata.get("run") == Some(&meta) {
                log::info!("using checkpoint {}", path.display());
                return Ok((ck.model, None));
            }
            if !self.cfg.train_missing {
                return Err(Error::Config(format!(
                    "checkpoint {} was trained with a different configuration",
                    path.display()
                )));
            }
            log::info!("checkpoint {} is stale, retraining", path.display());
        } else if !self.cfg.train_missing {
            return Err(Error::MissingCheckpoint(path));
        }
        log::info!("training {} network on {mode}", objective_name(objective));
        let init = Mlp::new(self.network_spec(), self.init_seed(objective, mode))?;
        let (model, report) = train(&self.sim, &scenario_for(mode), init, objective, &self.cfg.train)?;
        std::fs::create_dir_all(self.cfg.checkpoint_dir())?;
        Checkpoint {
            model: model.clone(),
            adam: None,
            metadata: serde_json::json!({ "run": meta, "report": report }),
        }
        .save(&path)?;
        Ok((model, Some(report)))
    }

    fn adapt_start(&self, mode: AmplitudeMode) -> Result<Mlp> {
        match self.cfg.adapt_init {
            AdaptInit::Supervised => Ok(self.trained_model(Objective::Supervised, mode)?.0),
            AdaptInit::SelfSupervised => Ok(self.trained_model(Objective::SelfSupervised, mode)?.0),
            AdaptInit::Scratch => {
                let mut m = Mlp::new(self.network_spec(), derive_seed(self.cfg.seed, streams::INIT, 99))?;
                init_output_bias(&mut m, &self.sim, &scenario_for(mode), &self.cfg.train)?;
                Ok(m)
            }
        }
    }

    /// Loads or trains whatever `kind` needs for networks trained on `mode`.
    pub fn prepare(&self, kind: StrategyKind, mode: AmplitudeMode) -> Result<Prepared> {
        let network = match kind {
            StrategyKind::ModelBased => None,
            StrategyKind::Supervised => Some(self.trained_model(Objective::Supervised, mode)?.0),
            StrategyKind::SelfSupervised => Some(self.trained_model(Objective::SelfSupervised, mode)?.0),
            StrategyKind::TtaInstance | StrategyKind::TtaOnline | StrategyKind::TtaDomain => {
                Some(self.adapt_start(mode)?)
            }
        };
        Ok(Prepared { kind, network })
    }

    /// Estimates for `ys`, in their own units.
    pub fn estimate(&self, prepared: &Prepared, ys: &[&ComplexSpectrum]) -> Result<Vec<ModelParams>> {
        let sm = self.model();
        let net = || {
            prepared
                .network
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{} needs a network", prepared.kind)))
        };
        match prepared.kind {
            StrategyKind::ModelBased => {
                let head = Head::physics(sm.layout());
                let init = default_init(self.sim.priors())?;
                Ok(fit_many(sm, &head, ys, &init, &self.cfg.fit, self.cfg.exec)?
                    .into_iter()
                    .map(|f| f.theta)
                    .collect())
            }
            StrategyKind::Supervised | StrategyKind::SelfSupervised => predict_par(net()?, ys, self.cfg.exec),
            StrategyKind::TtaInstance => Ok(tta_instance_many(net()?, sm, ys, &self.cfg.adapt)?
                .into_iter()
                .map(|r| r.theta)
                .collect()),
            StrategyKind::TtaOnline => Ok(tta_online(net()?, sm, ys, &self.cfg.adapt)?.predictions),
            StrategyKind::TtaDomain => {
                let adapted = tta_domain(net()?, sm, ys, &self.cfg.adapt)?;
                predict_adapted(&adapted.model, ys, &self.cfg.adapt)
            }
        }
    }

    /// Median per-sample time of `prepared` on the first spectra of `ys`.
    pub fn time_strategy(&self, prepared: &Prepared, ys: &[&ComplexSpectrum]) -> Result<TimingStats> {
        let subset = &ys[..ys.len().min(TIMING_SAMPLES)];
        measure_time(subset.len(), self.cfg.timing_repeats, || self.estimate(prepared, subset).map(|_| ()))
    }

    pub fn records_for(
        &self,
        kind: StrategyKind,
        scenario: &str,
        data: &[SampleRecord],
        estimates: &[ModelParams],
        ms_per_sample: f64,
    ) -> Result<Vec<EvalRecord>> {
        data.iter()
            .zip(estimates)
            .map(|(r, e)| {
                let mut rec = EvalRecord::new(
                    kind.name(),
                    scenario,
                    r.seed,
                    &r.theta,
                    e,
                    self.mm_index(),
                    r.snr_db,
                    ms_per_sample,
                )?;
                if let Some(sp) = &r.sweep {
                    rec.sweep_parameter = Some(sp.parameter.clone());
                    rec.sweep_value = Some(sp.value);
                }
                Ok(rec)
            })
            .collect()
    }

    /// Every configured strategy on every configured scenario.
    pub fn run_scenario_suite(&self) -> Result<SuiteOutput> {
        let mut out = SuiteOutput::default();
        let mut tests: HashMap<AmplitudeMode, Vec<SampleRecord>> = HashMap::new();
        // Model-based results depend only on the test set.
        let mut fits: HashMap<AmplitudeMode, (Vec<ModelParams>, TimingStats)> = HashMap::new();
        for &kind in &self.cfg.strategies {
            for sc in &self.cfg.scenarios {
                if let Entry::Vacant(e) = tests.entry(sc.test) {
                    e.insert(self.test_set(sc.test)?);
                }
                let data = &tests[&sc.test];
                let ys: Vec<&ComplexSpectrum> = data.iter().map(|r| &r.observed).collect();
                log::info!("{kind} on {}", sc.name);
                let (estimates, timing) = if kind == StrategyKind::ModelBased {
                    if let Entry::Vacant(e) = fits.entry(sc.test) {
                        let prepared = self.prepare(kind, sc.train)?;
                        let est = self.estimate(&prepared, &ys)?;
                        let t = self.time_strategy(&prepared, &ys)?;
                        e.insert((est, t));
                    }
                    fits[&sc.test].clone()
                } else {
                    let prepared = self.prepare(kind, sc.train)?;
                    let est = self.estimate(&prepared, &ys)?;
                    let t = self.time_strategy(&prepared, &ys)?;
                    (est, t)
                };
                out.timing.push(TimingRow {
                    strategy: kind.name().into(),
                    scenario: sc.name.clone(),
                    n_samples: ys.len().min(TIMING_SAMPLES),
                    median_ms: timing.median_ms,
                    variance: timing.variance,
                });
                out.records
                    .extend(self.records_for(kind, &sc.name, data, &estimates, timing.median_ms)?);
            }
        }
        out.summary = summarize(&out.records)?;
        Ok(out)
    }
}

/// Sidecar written next to every result table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: String,
    pub version: String,
    pub fingerprint: String,
    pub config: ExperimentConfig,
}

impl Workbench {
    pub fn run_info(&self, command: &str) -> RunInfo {
        RunInfo {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            fingerprint: self.fingerprint.clone(),
            config: self.cfg.clone(),
        }
    }

    /// Writes records.csv, summary.csv, timing.csv and run.json under `dir`.
    pub fn write_suite(&self, out: &SuiteOutput, dir: &Path) -> Result<()> {
        write_csv(dir.join("records.csv"), &out.records)?;
        write_csv(dir.join("summary.csv"), &out.summary)?;
        write_csv(dir.join("timing.csv"), &out.timing)?;
        write_json(dir.join("run.json"), &self.run_info("evaluate"))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::harness::config::{Preset, ScenarioSpec};

    pub(crate) fn tiny_config(dir: &std::path::Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset(Preset::Desk);
        cfg.out_dir = dir.to_path_buf();
        cfg.test_size = 6;
        cfg.train.max_steps = 4;
        cfg.train.validate_every = 2;
        cfg.train.val_size = 8;
        cfg.fit.steps = 5;
        cfg.adapt.steps = 2;
        cfg.adapt.epochs = 1;
        cfg.sweeps.clear();
        cfg
    }

    #[test]
    fn suite_produces_every_combination_and_reuses_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let wb = Workbench::new(tiny_config(dir.path())).unwrap();
        let out = wb.run_scenario_suite().unwrap();
        assert_eq!(out.records.len(), 6 * 3 * 6);
        assert_eq!(out.summary.len(), 6 * 3);
        for r in &out.records {
            assert_eq!(r.recompute().unwrap(), (r.mae, r.mosae, r.w_opt));
            assert!(r.mosae.is_finite());
        }
        // Model-based estimates are shared between scenarios with one test set.
        let mb: Vec<&EvalRecord> = out.records.iter().filter(|r| r.strategy == "model_based").collect();
        assert_eq!(mb[6].estimate, mb[12].estimate);
        assert!(wb.checkpoint_path(Objective::Supervised, AmplitudeMode::MidRange).exists());

        let (again, report) = wb.trained_model(Objective::Supervised, AmplitudeMode::MidRange).unwrap();
        assert!(report.is_none());
        let (fresh, _) = {
            let mut cfg = tiny_config(dir.path());
            cfg.checkpoint_dir = Some(dir.path().join("other"));
            Workbench::new(cfg).unwrap().trained_model(Objective::Supervised, AmplitudeMode::MidRange).unwrap()
        };
        assert_eq!(again.params(), fresh.params());
    }

    #[test]
    fn missing_or_stale_checkpoints_without_training_fail() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.train_missing = false;
        let wb = Workbench::new(cfg.clone()).unwrap();
        let err = wb.prepare(StrategyKind::Supervised, AmplitudeMode::MidRange).err().unwrap();
        assert!(matches!(err, Error::MissingCheckpoint(_)));

        cfg.train_missing = true;
        Workbench::new(cfg.clone())
            .unwrap()
            .trained_model(Objective::Supervised, AmplitudeMode::MidRange)
            .unwrap();
        cfg.train_missing = false;
        cfg.train.lr = 5e-4;
        let err = Workbench::new(cfg)
            .unwrap()
            .trained_model(Objective::Supervised, AmplitudeMode::MidRange)
            .err()
            .unwrap();
        assert!(err.is_config());
    }

    #[test]
    fn oracle_and_midpoint_baselines() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.test_size = 200;
        cfg.scenarios = vec![ScenarioSpec::new("mid", AmplitudeMode::MidRange, AmplitudeMode::MidRange)];
        let wb = Workbench::new(cfg).unwrap();
        let data = wb.test_set(AmplitudeMode::MidRange).unwrap();
        let truth: Vec<ModelParams> = data.iter().map(|r| r.theta.clone()).collect();
        let oracle = wb.records_for(StrategyKind::Supervised, "mid", &data, &truth, 0.0).unwrap();
        let s = summarize(&oracle).unwrap();
        assert_eq!((s[0].mae_mean, s[0].mosae_mean), (0.0, 0.0));

        let mid = wb.sim.resolve(&Scenario::mid_range()).unwrap().midpoint();
        let guess = vec![mid.clone(); data.len()];
        let recs = wb.records_for(StrategyKind::Supervised, "mid", &data, &guess, 0.0).unwrap();
        let s = summarize(&recs).unwrap();
        assert!(s[0].mosae_mean > 0.0 && s[0].mosae_mean.is_finite());
        // Direct evaluation of the same quantity.
        let direct: f64 = data
            .iter()
            .map(|r| crate::metrics::mosae(&mid.amplitudes, &r.theta.amplitudes, wb.mm_index()).unwrap())
            .sum::<f64>()
            / data.len() as f64;
        assert!((direct - s[0].mosae_mean).abs() < 1e-12);
    }
}
