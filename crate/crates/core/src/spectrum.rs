//! Time-domain signals, frequency-domain spectra and the transform between
//! them.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::axis::SpectralAxis;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<Complex64>,
    pub dwell_s: f64,
}

impl TimeSignal {
    pub fn new(samples: Vec<Complex64>, dwell_s: f64) -> Result<Self> {
        if let Some(i) = samples.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite {
                index: i,
                context: "time signal sample".into(),
            });
        }
        Ok(Self { samples, dwell_s })
    }
}

/// Frequency-domain spectrum, either over all bins or over the crop window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexSpectrum {
    pub values: Vec<Complex64>,
    pub cropped: bool,
}

impl ComplexSpectrum {
    pub fn cropped(values: Vec<Complex64>) -> Self {
        Self {
            values,
            cropped: true,
        }
    }

    pub fn zeros_cropped(len: usize) -> Self {
        Self::cropped(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Euclidean norm over real and imaginary parts.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|z| z * c).collect(),
            cropped: self.cropped,
        }
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn imag(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.im).collect()
    }

    pub fn from_parts(re: &[f64], im: &[f64], cropped: bool) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::Validation(format!(
                "real/imag length mismatch: {} vs {}",
                re.len(),
                im.len()
            )));
        }
        Ok(Self {
            values: re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect(),
            cropped,
        })
    }

    /// Checks the length against the axis for this spectrum's crop state.
    pub fn check_axis(&self, axis: &SpectralAxis) -> Result<()> {
        let expected = if self.cropped {
            axis.crop_len()
        } else {
            axis.n_points()
        };
        if self.values.len() != expected {
            return Err(Error::Validation(format!(
                "spectrum has {} bins, axis expects {expected} ({})",
                self.values.len(),
                if self.cropped { "cropped" } else { "full" }
            )));
        }
        Ok(())
    }

    /// Restricts a full spectrum to the crop window. Cropped input is returned
    /// unchanged.
    pub fn crop(&self, axis: &SpectralAxis) -> Result<Self> {
        self.check_axis(axis)?;
        if self.cropped {
            return Ok(self.clone());
        }
        Ok(Self::cropped(self.values[axis.crop_range()].to_vec()))
    }
}

/// Cached forward DFT for one axis length.
#[derive(Clone)]
pub struct Transform {
    fft: Arc<dyn Fft<f64>>,
    n: usize,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform").field("n", &self.n).finish()
    }
}

impl Transform {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n);
        Self { fft, n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized in-place forward DFT, `X[q] = Σ_k x[k] e^{-2πi qk/n}`.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.fft.process(buf);
    }
}

/// DFT of a time signal with bins reordered so ppm increases along the array,
/// optionally restricted to the crop window.
pub fn to_frequency_domain(
    sig: &TimeSignal,
    axis: &SpectralAxis,
    crop: bool,
) -> Result<ComplexSpectrum> {
    to_frequency_domain_with(&Transform::new(axis.n_points()), sig, axis, crop)
}

pub fn to_frequency_domain_with(
    transform: &Transform,
    sig: &TimeSignal,
    axis: &SpectralAxis,
    crop: bool,
) -> Result<ComplexSpectrum> {
    let n = axis.n_points();
    if sig.samples.len() != n {
        return Err(Error::Validation(format!(
            "signal has {} samples, axis expects {n}",
            sig.samples.len()
        )));
    }
    if transform.len() != n {
        return Err(Error::Validation("transform length does not match axis".into()));
    }
    let mut buf = sig.samples.clone();
    transform.forward_in_place(&mut buf);
    let range = if crop { axis.crop_range() } else { 0..n };
    let values = range.map(|k| buf[axis.fft_index(k)]).collect();
    Ok(ComplexSpectrum {
        values,
        cropped: crop,
    })
}
