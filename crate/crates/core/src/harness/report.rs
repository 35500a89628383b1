//! Evaluation records, summary tables and their CSV/JSON files.
//!
//! Every summary is a pure function of the records, so `report` can rebuild
//! the tables from a records file alone.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::signal::ModelParams;

/// One estimate of one spectrum by one strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub strategy: String,
    pub scenario: String,
    pub seed: u64,
    pub n_amplitudes: usize,
    pub mm_index: Option<usize>,
    /// θ, space separated.
    pub truth: String,
    /// θ̂, space separated.
    pub estimate: String,
    pub mae: f64,
    pub mosae: f64,
    pub w_opt: f64,
    pub snr_db: f64,
    pub ms_per_sample: f64,
    pub sweep_parameter: Option<String>,
    pub sweep_value: Option<f64>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

fn split(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Validation(format!("bad number '{t}': {e}"))))
        .collect()
}

/// MAE, MOSAE and w_opt of an amplitude estimate.
pub fn amplitude_metrics(pred: &[f64], truth: &[f64], mm_index: Option<usize>) -> Result<(f64, f64, f64)> {
    Ok((
        metrics::mae(pred, truth, mm_index)?,
        metrics::mosae(pred, truth, mm_index)?,
        metrics::optimal_scale(pred, truth, mm_index)?,
    ))
}

impl EvalRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        strategy: &str,
        scenario: &str,
        seed: u64,
        truth: &ModelParams,
        estimate: &ModelParams,
        mm_index: Option<usize>,
        snr_db: f64,
        ms_per_sample: f64,
    ) -> Result<Self> {
        let (mae, mosae, w_opt) = amplitude_metrics(&estimate.amplitudes, &truth.amplitudes, mm_index)?;
        Ok(Self {
            strategy: strategy.into(),
            scenario: scenario.into(),
            seed,
            n_amplitudes: truth.amplitudes.len(),
            mm_index,
            truth: join(&truth.to_vec()),
            estimate: join(&estimate.to_vec()),
            mae,
            mosae,
            w_opt,
            snr_db,
            ms_per_sample,
            sweep_parameter: None,
            sweep_value: None,
        })
    }

    pub fn truth_vec(&self) -> Result<Vec<f64>> {
        split(&self.truth)
    }

    pub fn estimate_vec(&self) -> Result<Vec<f64>> {
        split(&self.estimate)
    }

    /// Metrics recomputed from the stored θ and θ̂.
    pub fn recompute(&self) -> Result<(f64, f64, f64)> {
        let t = self.truth_vec()?;
        let e = self.estimate_vec()?;
        let m = self.n_amplitudes;
        if t.len() < m || e.len() < m {
            return Err(Error::Validation("record holds fewer values than amplitudes".into()));
        }
        amplitude_metrics(&e[..m], &t[..m], self.mm_index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub scenario: String,
    pub n: usize,
    pub mae_mean: f64,
    pub mae_se: f64,
    pub mosae_mean: f64,
    pub mosae_se: f64,
    pub ms_per_sample: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub strategy: String,
    pub parameter: String,
    pub value: f64,
    pub n: usize,
    pub mosae_mean: f64,
    pub mosae_se: f64,
}

/// Groups by `key`, keeping first-appearance order.
fn groups<K: PartialEq + Clone>(records: &[EvalRecord], key: impl Fn(&EvalRecord) -> K) -> Vec<(K, Vec<&EvalRecord>)> {
    let mut out: Vec<(K, Vec<&EvalRecord>)> = Vec::new();
    for r in records {
        let k = key(r);
        match out.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(r),
            None => out.push((k, vec![r])),
        }
    }
    out
}

/// Mean ± SE of MAE and MOSAE per (strategy, scenario).
pub fn summarize(records: &[EvalRecord]) -> Result<Vec<SummaryRow>> {
    groups(records, |r| (r.strategy.clone(), r.scenario.clone()))
        .into_iter()
        .map(|((strategy, scenario), rs)| {
            let mae = metrics::aggregate(&rs.iter().map(|r| r.mae).collect::<Vec<_>>())?;
            let mosae = metrics::aggregate(&rs.iter().map(|r| r.mosae).collect::<Vec<_>>())?;
            let ms = rs.iter().map(|r| r.ms_per_sample).sum::<f64>() / rs.len() as f64;
            Ok(SummaryRow {
                strategy,
                scenario,
                n: rs.len(),
                mae_mean: mae.mean,
                mae_se: mae.standard_error,
                mosae_mean: mosae.mean,
                mosae_se: mosae.standard_error,
                ms_per_sample: ms,
            })
        })
        .collect()
}

/// Mean MOSAE per (strategy, swept parameter, grid value).
pub fn sweep_curves(records: &[EvalRecord]) -> Result<Vec<CurveRow>> {
    let swept: Vec<EvalRecord> = records.iter().filter(|r| r.sweep_parameter.is_some()).cloned().collect();
    groups(&swept, |r| {
        (
            r.strategy.clone(),
            r.sweep_parameter.clone().unwrap(),
            r.sweep_value.unwrap_or(f64::NAN).to_bits(),
        )
    })
    .into_iter()
    .map(|((strategy, parameter, bits), rs)| {
        let s = metrics::aggregate(&rs.iter().map(|r| r.mosae).collect::<Vec<_>>())?;
        Ok(CurveRow {
            strategy,
            parameter,
            value: f64::from_bits(bits),
            n: s.n,
            mosae_mean: s.mean,
            mosae_se: s.standard_error,
        })
    })
    .collect()
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Error::Config(format!("{} does not exist", path.display()))
        }
        _ => csv_err(e),
    })?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Corrupt {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Validation(format!("csv: {other:?}")),
    }
}

/// Writes `value` as pretty JSON.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
