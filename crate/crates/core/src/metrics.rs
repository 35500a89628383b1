//! Quantification error metrics.
//!
//! All amplitude metrics skip the macromolecule entry given by `mm_index`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalization used by [`mosae_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MosaeNorm {
    /// Divide by M, the total entry count including the macromolecules.
    #[default]
    TotalCount,
    /// Divide by M − 1, the number of summed terms.
    SummedCount,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionStats {
    pub alpha: f64,
    pub beta: f64,
    pub r2: f64,
    pub rmse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub standard_error: f64,
    pub n: usize,
}

fn check_pair(pred: &[f64], truth: &[f64], mm_index: Option<usize>) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Validation(format!(
            "prediction has {} amplitudes, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    if let Some(mm) = mm_index {
        if mm >= pred.len() {
            return Err(Error::Validation(format!("mm index {mm} out of range")));
        }
    }
    let included = pred.len() - usize::from(mm_index.is_some());
    if included == 0 {
        return Err(Error::Validation("no metabolites to score".into()));
    }
    Ok(())
}

fn included<'a>(
    pred: &'a [f64],
    truth: &'a [f64],
    mm_index: Option<usize>,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    pred.iter()
        .zip(truth)
        .enumerate()
        .filter(move |(m, _)| Some(*m) != mm_index)
        .map(|(_, (&p, &t))| (p, t))
}

/// Mean absolute amplitude error over the non-macromolecule entries.
pub fn mae(pred: &[f64], truth: &[f64], mm_index: Option<usize>) -> Result<f64> {
    check_pair(pred, truth, mm_index)?;
    let (sum, n) = included(pred, truth, mm_index).fold((0.0, 0usize), |(s, n), (p, t)| (s + (p - t).abs(), n + 1));
    Ok(sum / n as f64)
}

/// The scale `w ≥ 0` minimizing `Σ |w â_m − a_m|`.
///
/// This is the lower weighted median of `a_m / â_m` with weights `|â_m|`.
/// Entries with `â_m = 0` add a constant and are skipped.
pub fn optimal_scale(pred: &[f64], truth: &[f64], mm_index: Option<usize>) -> Result<f64> {
    check_pair(pred, truth, mm_index)?;
    let mut ratios: Vec<(f64, f64)> = included(pred, truth, mm_index)
        .filter(|(p, _)| *p != 0.0)
        .map(|(p, t)| (t / p, p.abs()))
        .collect();
    if ratios.is_empty() {
        return Err(Error::Validation("all predicted amplitudes are zero".into()));
    }
    if ratios.iter().any(|(r, _)| !r.is_finite()) {
        return Err(Error::Numeric("non-finite amplitude ratio".into()));
    }
    ratios.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = 0.5 * ratios.iter().map(|(_, w)| w).sum::<f64>();
    let mut cum = 0.0;
    for &(r, w) in &ratios {
        cum += w;
        if cum >= half {
            return Ok(r.max(0.0));
        }
    }
    Ok(ratios.last().unwrap().0.max(0.0))
}

/// Summed absolute error at scale `w`, over the non-macromolecule entries.
pub fn scaled_abs_error(pred: &[f64], truth: &[f64], mm_index: Option<usize>, w: f64) -> f64 {
    included(pred, truth, mm_index).map(|(p, t)| (w * p - t).abs()).sum()
}

/// MOSAE with the 1/M normalization.
pub fn mosae(pred: &[f64], truth: &[f64], mm_index: Option<usize>) -> Result<f64> {
    mosae_with(pred, truth, mm_index, MosaeNorm::TotalCount)
}

pub fn mosae_with(pred: &[f64], truth: &[f64], mm_index: Option<usize>, norm: MosaeNorm) -> Result<f64> {
    let w = optimal_scale(pred, truth, mm_index)?;
    let denom = match norm {
        MosaeNorm::TotalCount => pred.len(),
        MosaeNorm::SummedCount => pred.len() - usize::from(mm_index.is_some()),
    };
    Ok(scaled_abs_error(pred, truth, mm_index, w) / denom as f64)
}

/// Least-squares fit `a = α â + β`, its R², and the prediction RMSE
/// `sqrt(mean (â − a)²)`.
pub fn regression_stats(pairs: &[(f64, f64)]) -> Result<RegressionStats> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::Validation(format!("regression needs >= 2 points, got {n}")));
    }
    let nf = n as f64;
    let mean_p = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_t = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(p, t) in pairs {
        let (dx, dy) = (p - mean_p, t - mean_t);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Numeric("predictions have zero variance; slope undefined".into()));
    }
    let alpha = sxy / sxx;
    let beta = mean_t - alpha * mean_p;
    let sse: f64 = pairs.iter().map(|&(p, t)| (t - alpha * p - beta).powi(2)).sum();
    let r2 = if syy == 0.0 { if sse == 0.0 { 1.0 } else { 0.0 } } else { 1.0 - sse / syy };
    let rmse = (pairs.iter().map(|&(p, t)| (p - t).powi(2)).sum::<f64>() / nf).sqrt();
    Ok(RegressionStats {
        alpha,
        beta,
        r2: r2.min(1.0),
        rmse,
    })
}

/// Mean and standard error (n − 1 denominator); a single value has SE 0.
pub fn aggregate(values: &[f64]) -> Result<MetricSummary> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Validation("cannot aggregate an empty list".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let standard_error = if n == 1 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Ok(MetricSummary {
        mean,
        standard_error,
        n,
    })
}
