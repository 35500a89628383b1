use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mrs_workbench::harness::dataset_io::{read_dataset, write_dataset};
use mrs_workbench::harness::report::{read_csv, summarize, sweep_curves, write_csv, write_json, EvalRecord};
use mrs_workbench::harness::suite::scenario_for;
use mrs_workbench::harness::{ExperimentConfig, Preset, StrategyKind, Workbench};
use mrs_workbench::simulator::{AmplitudeMode, SampleRecord};
use mrs_workbench::spectrum::ComplexSpectrum;
use mrs_workbench::strategies::Objective;
use mrs_workbench::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Simulate, fit and evaluate MR spectra")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON experiment config, merged over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// desk or paper.
    #[arg(long, global = true)]
    preset: Option<Preset>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Range {
    Mid,
    Full,
}

impl From<Range> for AmplitudeMode {
    fn from(r: Range) -> Self {
        match r {
            Range::Mid => AmplitudeMode::MidRange,
            Range::Full => AmplitudeMode::FullRange,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Supervised,
    SelfSupervised,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdaptArg {
    Instance,
    Online,
    Domain,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated dataset.
    Simulate {
        #[arg(long, value_enum, default_value = "full")]
        range: Range,
        /// Number of spectra; the config's test size by default.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train (or load from the checkpoint cache) a network.
    Train {
        #[arg(long, value_enum, default_value = "supervised")]
        objective: ObjectiveArg,
        #[arg(long, value_enum, default_value = "mid")]
        range: Range,
    },
    /// Model-based fitting of a dataset.
    Fit {
        /// Dataset written by `simulate`; a fresh test set when absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "full")]
        range: Range,
    },
    /// Test-time adaptation of a trained network to a dataset.
    Adapt {
        #[arg(long, value_enum, default_value = "instance")]
        mode: AdaptArg,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Test range when no dataset is given.
        #[arg(long, value_enum, default_value = "full")]
        range: Range,
        /// Range the starting network was trained on.
        #[arg(long, value_enum, default_value = "mid")]
        train_range: Range,
    },
    /// Every strategy on every scenario.
    Evaluate,
    /// Parameter sweeps.
    Sweep,
    /// Rebuild summary tables from a records file.
    Report {
        /// records.csv or sweep_records.csv; `<out>/records.csv` by default.
        #[arg(long)]
        records: Option<PathBuf>,
    },
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p, g.preset)?,
        None => ExperimentConfig::preset(g.preset.unwrap_or(Preset::Desk)),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset(wb: &Workbench, path: Option<&Path>, range: Range) -> Result<Vec<SampleRecord>> {
    match path {
        Some(p) => Ok(read_dataset(p, Some(&wb.fingerprint))?.1),
        None => wb.test_set(range.into()),
    }
}

fn print_summary(records: &[EvalRecord]) -> Result<()> {
    println!("{:<16} {:<18} {:>6} {:>12} {:>12} {:>12}", "strategy", "scenario", "n", "MAE", "MOSAE", "ms/sample");
    for r in summarize(records)? {
        println!(
            "{:<16} {:<18} {:>6} {:>12.5} {:>12.5} {:>12.4}",
            r.strategy, r.scenario, r.n, r.mae_mean, r.mosae_mean, r.ms_per_sample
        );
    }
    Ok(())
}

fn estimate_to_records(
    wb: &Workbench,
    kind: StrategyKind,
    train: AmplitudeMode,
    scenario: &str,
    data: &[SampleRecord],
) -> Result<Vec<EvalRecord>> {
    let prepared = wb.prepare(kind, train)?;
    let ys: Vec<&ComplexSpectrum> = data.iter().map(|r| &r.observed).collect();
    let t = std::time::Instant::now();
    let est = wb.estimate(&prepared, &ys)?;
    let ms = t.elapsed().as_secs_f64() * 1e3 / ys.len().max(1) as f64;
    wb.records_for(kind, scenario, data, &est, ms)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let out = cfg.out_dir.clone();
    let wb = Workbench::new(cfg)?;
    match cli.command {
        Command::Simulate { range, n } => {
            let mode: AmplitudeMode = range.into();
            let n = n.unwrap_or(wb.cfg.test_size);
            let recs = wb.sim.generate_dataset(n, &scenario_for(mode), wb.cfg.seed, wb.cfg.exec)?;
            let path = out.join(format!("dataset_{mode}.jsonl"));
            let desc = serde_json::json!({ "scenario": mode.to_string(), "seed": wb.cfg.seed });
            write_dataset(&path, &wb.fingerprint, &recs, desc)?;
            println!("wrote {} spectra to {}", recs.len(), path.display());
        }
        Command::Train { objective, range } => {
            let objective = match objective {
                ObjectiveArg::Supervised => Objective::Supervised,
                ObjectiveArg::SelfSupervised => Objective::SelfSupervised,
            };
            let mode: AmplitudeMode = range.into();
            let (_, report) = wb.trained_model(objective, mode)?;
            let path = wb.checkpoint_path(objective, mode);
            match report {
                Some(r) => {
                    write_json(out.join(format!("training_{}.json", path.file_stem().unwrap().to_string_lossy())), &r)?;
                    println!("trained {} steps, best validation loss {:.6} at step {}", r.steps, r.best_loss, r.best_step);
                }
                None => println!("checkpoint {} is up to date", path.display()),
            }
        }
        Command::Fit { dataset: d, range } => {
            let data = dataset(&wb, d.as_deref(), range)?;
            let recs = estimate_to_records(&wb, StrategyKind::ModelBased, AmplitudeMode::MidRange, "fit", &data)?;
            write_csv(out.join("fit_records.csv"), &recs)?;
            write_json(out.join("fit_run.json"), &wb.run_info("fit"))?;
            print_summary(&recs)?;
        }
        Command::Adapt {
            mode,
            dataset: d,
            range,
            train_range,
        } => {
            let kind = match mode {
                AdaptArg::Instance => StrategyKind::TtaInstance,
                AdaptArg::Online => StrategyKind::TtaOnline,
                AdaptArg::Domain => StrategyKind::TtaDomain,
            };
            let data = dataset(&wb, d.as_deref(), range)?;
            let recs = estimate_to_records(&wb, kind, train_range.into(), "adapt", &data)?;
            write_csv(out.join(format!("{kind}_records.csv")), &recs)?;
            write_json(out.join(format!("{kind}_run.json")), &wb.run_info("adapt"))?;
            print_summary(&recs)?;
        }
        Command::Evaluate => {
            let res = wb.run_scenario_suite()?;
            wb.write_suite(&res, &out)?;
            print_summary(&res.records)?;
        }
        Command::Sweep => {
            let res = wb.run_sweeps()?;
            write_csv(out.join("sweep_records.csv"), &res.records)?;
            write_csv(out.join("sweep_curves.csv"), &res.curves)?;
            write_json(out.join("sweep_run.json"), &wb.run_info("sweep"))?;
            println!("{:<16} {:<10} {:>10} {:>12}", "strategy", "parameter", "value", "MOSAE");
            for c in &res.curves {
                println!("{:<16} {:<10} {:>10} {:>12.5}", c.strategy, c.parameter, c.value, c.mosae_mean);
            }
        }
        Command::Report { records } => {
            let path = records.unwrap_or_else(|| out.join("records.csv"));
            let recs: Vec<EvalRecord> = read_csv(&path)?;
            for r in &recs {
                let (mae, mosae, w) = r.recompute()?;
                if (mae, mosae, w) != (r.mae, r.mosae, r.w_opt) {
                    return Err(Error::Corrupt {
                        path: path.clone(),
                        reason: format!("stored metrics disagree with θ for seed {}", r.seed),
                    });
                }
            }
            let dir = path.parent().unwrap_or(Path::new("."));
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().replace("records", "");
            write_csv(dir.join(format!("{stem}summary.csv")), &summarize(&recs)?)?;
            let curves = sweep_curves(&recs)?;
            if !curves.is_empty() {
                write_csv(dir.join(format!("{stem}curves.csv")), &curves)?;
            }
            print_summary(&recs)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() {
                2
            } else if e.is_numeric() {
                3
            } else {
                1
            })
        }
    }
}
