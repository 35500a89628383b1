use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    /// Median wall-clock milliseconds per sample.
    pub median_ms: f64,
    /// Sample variance of the per-run values.
    pub variance: f64,
    pub runs_ms: Vec<f64>,
}

/// Runs `f` `repeats` times (after one warm-up call) and reports per-sample
/// milliseconds, where one call processes `n_samples` samples.
pub fn measure_time<F>(n_samples: usize, repeats: usize, mut f: F) -> Result<TimingStats>
where
    F: FnMut() -> Result<()>,
{
    if repeats < 3 {
        return Err(Error::Config("timing needs at least 3 repeats".into()));
    }
    if n_samples == 0 {
        return Err(Error::Config("timing needs at least one sample".into()));
    }
    f()?;
    let mut runs_ms = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        runs_ms.push(t.elapsed().as_secs_f64() * 1e3 / n_samples as f64);
    }
    let mut sorted = runs_ms.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median_ms = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let mean = runs_ms.iter().sum::<f64>() / repeats as f64;
    let variance = runs_ms.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64;
    Ok(TimingStats {
        median_ms,
        variance,
        runs_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noop_is_near_zero() {
        let t = measure_time(1000, 3, || Ok(())).unwrap();
        assert_eq!(t.runs_ms.len(), 3);
        assert!(t.median_ms < 1e-3, "{}", t.median_ms);
        assert!(t.variance >= 0.0);
    }

    #[test]
    fn counts_calls_and_validates() {
        let mut calls = 0;
        measure_time(1, 4, || {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 5);
        assert!(measure_time(1, 2, || Ok(())).is_err());
        assert!(measure_time(0, 3, || Ok(())).is_err());
    }

    #[test]
    fn sleeping_is_measured() {
        let t = measure_time(2, 3, || {
            std::thread::sleep(std::time::Duration::from_millis(4));
            Ok(())
        })
        .unwrap();
        assert!(t.median_ms >= 2.0, "{}", t.median_ms);
    }
}
