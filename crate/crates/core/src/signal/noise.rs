//! Observation noise, the evaluation-only random-walk corruption and SNR.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::ComplexSpectrum;

/// Divisor that maps the smoothing parameter onto a fraction of the crop
/// length.
pub const SMOOTHING_SCALE: f64 = 1e5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation of each real and imaginary component.
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Validation(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Adds independent N(0, σ²) draws to the real and imaginary part of every
/// point.
pub fn add_noise<R: Rng + ?Sized>(clean: &ComplexSpectrum, noise: NoiseSpec, rng: &mut R) -> Result<ComplexSpectrum> {
    noise.validate()?;
    if noise.sigma == 0.0 {
        return Ok(clean.clone());
    }
    let normal = Normal::new(0.0, noise.sigma).expect("validated sigma");
    let values = clean
        .values
        .iter()
        .map(|z| {
            let re = normal.sample(rng);
            let im = normal.sample(rng);
            z + Complex64::new(re, im)
        })
        .collect();
    Ok(ComplexSpectrum {
        values,
        cropped: clean.cropped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkSpec {
    pub step_size: f64,
    pub smoothing: f64,
    pub min_bound: f64,
    pub max_bound: f64,
}

impl RandomWalkSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.step_size, self.smoothing, self.min_bound, self.max_bound]
            .iter()
            .all(|x| x.is_finite());
        if !finite
            || self.min_bound > 0.0
            || self.max_bound < 0.0
            || self.step_size < 0.0
            || self.smoothing < 1.0
        {
            return Err(Error::Validation(format!("invalid random-walk spec {self:?}")));
        }
        Ok(())
    }

    /// Moving-average window length for `len` points.
    pub fn window(&self, len: usize) -> usize {
        ((len as f64 * self.smoothing / SMOOTHING_SCALE).round() as usize).max(1)
    }
}

/// One bounded, smoothed random walk of length `len`.
fn walk<R: Rng + ?Sized>(len: usize, spec: &RandomWalkSpec, normal: &Normal<f64>, rng: &mut R) -> Vec<f64> {
    let mut pos = 0.0;
    let raw: Vec<f64> = (0..len)
        .map(|_| {
            pos = (pos + normal.sample(rng)).clamp(spec.min_bound, spec.max_bound);
            pos
        })
        .collect();
    moving_average(&raw, spec.window(len))
}

/// Centered moving average; the window is truncated at the edges.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 || x.is_empty() {
        return x.to_vec();
    }
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    let before = (window - 1) / 2;
    let after = window - 1 - before;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Adds a random-walk baseline with independent real and imaginary parts.
pub fn apply_random_walk<R: Rng + ?Sized>(
    spectrum: &ComplexSpectrum,
    spec: RandomWalkSpec,
    rng: &mut R,
) -> Result<ComplexSpectrum> {
    spec.validate()?;
    if spec.step_size == 0.0 || (spec.min_bound == 0.0 && spec.max_bound == 0.0) {
        return Ok(spectrum.clone());
    }
    let normal = Normal::new(0.0, spec.step_size).expect("validated step size");
    let n = spectrum.len();
    let re = walk(n, &spec, &normal, rng);
    let im = walk(n, &spec, &normal, rng);
    let values = spectrum
        .values
        .iter()
        .zip(re.iter().zip(&im))
        .map(|(z, (&a, &b))| z + Complex64::new(a, b))
        .collect();
    Ok(ComplexSpectrum {
        values,
        cropped: spectrum.cropped,
    })
}

/// `10 log10(mean |x|² / (2σ²))` in dB.
///
/// Returns `-inf` for a zero signal. `noise_sigma` must be positive.
pub fn compute_snr(metabolite_only: &ComplexSpectrum, noise_sigma: f64) -> Result<f64> {
    if !metabolite_only.cropped {
        return Err(Error::Validation("SNR is defined on the cropped spectrum".into()));
    }
    if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Validation(format!("noise sigma must be > 0, got {noise_sigma}")));
    }
    if metabolite_only.is_empty() {
        return Err(Error::Validation("empty spectrum".into()));
    }
    let power = metabolite_only.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / metabolite_only.len() as f64;
    if power == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (power / (2.0 * noise_sigma * noise_sigma)).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec_of(len: usize, v: f64) -> ComplexSpectrum {
        ComplexSpectrum::cropped(vec![Complex64::new(v, -v); len])
    }

    #[test]
    fn zero_sigma_is_identity() {
        let s = spec_of(10, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(add_noise(&s, NoiseSpec { sigma: 0.0 }, &mut rng).unwrap(), s);
    }

    #[test]
    fn noise_std_matches_sigma() {
        let s = spec_of(100_000, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out = add_noise(&s, NoiseSpec { sigma: 100.0 }, &mut rng).unwrap();
        let re = out.real();
        let mean = re.iter().sum::<f64>() / re.len() as f64;
        let var = re.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (re.len() - 1) as f64;
        assert!((var.sqrt() - 100.0).abs() < 2.0);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let s = spec_of(50, 1.0);
        let a = add_noise(&s, NoiseSpec { sigma: 5.0 }, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = add_noise(&s, NoiseSpec { sigma: 5.0 }, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(add_noise(&s, NoiseSpec { sigma: -1.0 }, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn random_walk_identities_and_bounds() {
        let s = spec_of(355, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let still = RandomWalkSpec {
            step_size: 0.0,
            smoothing: 10.0,
            min_bound: -1.0,
            max_bound: 1.0,
        };
        assert_eq!(apply_random_walk(&s, still, &mut rng).unwrap(), s);
        let pinned = RandomWalkSpec {
            step_size: 1e3,
            min_bound: 0.0,
            max_bound: 0.0,
            ..still
        };
        assert_eq!(apply_random_walk(&s, pinned, &mut rng).unwrap(), s);
        let bounded = RandomWalkSpec {
            step_size: 1e3,
            smoothing: 1.0,
            min_bound: -1e6,
            max_bound: 1e6,
        };
        let out = apply_random_walk(&s, bounded, &mut rng).unwrap();
        for (o, i) in out.values.iter().zip(&s.values) {
            let r = o - i;
            assert!(r.re.abs() <= 1e6 && r.im.abs() <= 1e6);
        }
        let tight = RandomWalkSpec {
            step_size: 1e3,
            smoothing: 5e4,
            min_bound: -10.0,
            max_bound: 25.0,
        };
        let out = apply_random_walk(&s, tight, &mut rng).unwrap();
        for (o, i) in out.values.iter().zip(&s.values) {
            let r = o - i;
            assert!((-10.0..=25.0).contains(&r.re) && (-10.0..=25.0).contains(&r.im));
        }
    }

    #[test]
    fn random_walk_spec_invariants() {
        let bad = RandomWalkSpec {
            step_size: 1.0,
            smoothing: 0.5,
            min_bound: -1.0,
            max_bound: 1.0,
        };
        assert!(bad.validate().is_err());
        let bad = RandomWalkSpec {
            smoothing: 1.0,
            min_bound: 0.5,
            ..bad
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn moving_average_window() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0], 1), vec![1.0, 2.0, 3.0]);
        assert_eq!(moving_average(&[0.0, 3.0, 6.0, 9.0], 3), vec![1.5, 3.0, 6.0, 7.5]);
        let w = RandomWalkSpec {
            step_size: 1.0,
            smoothing: 1e5,
            min_bound: -1.0,
            max_bound: 1.0,
        };
        assert_eq!(w.window(355), 355);
        assert_eq!(RandomWalkSpec { smoothing: 1.0, ..w }.window(355), 1);
    }

    #[test]
    fn snr_formula() {
        let sigma = 3.0;
        // |x|² = 2σ² everywhere gives 0 dB.
        let s = spec_of(20, sigma);
        assert!(compute_snr(&s, sigma).unwrap().abs() < 1e-12);
        let drop = compute_snr(&s, sigma).unwrap() - compute_snr(&s, 2.0 * sigma).unwrap();
        assert!((drop - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert_eq!(compute_snr(&spec_of(5, 0.0), 1.0).unwrap(), f64::NEG_INFINITY);
        assert!(compute_snr(&s, 0.0).is_err());
    }
}
