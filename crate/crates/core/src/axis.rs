//! Sampling geometry: time grid, frequency/ppm grid and the crop window.
//!
//! Frequency bins are stored in ascending frequency order (FFT output shifted
//! so the zero-frequency bin sits at index `n/2`). Bin `k` has frequency
//! `(k - n/2) * bandwidth / n` Hz relative to the carrier and chemical shift
//! `center_ppm + f / field_mhz`.
//!
//! Each bin owns the cell `[ppm - Δ/2, ppm + Δ/2]`. The crop window keeps the
//! bins whose whole cell lies inside the requested ppm interval. With the
//! default geometry this is 355 bins for 0.5–4.0 ppm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing cell edges against window edges.
const EDGE_TOL: f64 = 1e-9;

/// Closed ppm interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpmWindow {
    pub lo: f64,
    pub hi: f64,
}

impl PpmWindow {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
}

/// Acquisition geometry shared by every spectrum in a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisConfig {
    pub n_points: usize,
    pub bandwidth_hz: f64,
    pub field_mhz: f64,
    pub center_ppm: f64,
    pub crop_ppm: PpmWindow,
}

impl Default for AxisConfig {
    fn default() -> Self {
        Self {
            n_points: 1024,
            bandwidth_hz: 3000.0,
            field_mhz: 298.03,
            center_ppm: 4.65,
            crop_ppm: PpmWindow::new(0.5, 4.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralAxis {
    config: AxisConfig,
    crop_start: usize,
    crop_len: usize,
}

impl SpectralAxis {
    /// Builds an axis and resolves the crop window to a bin range.
    pub fn new(config: AxisConfig) -> Result<Self> {
        let AxisConfig {
            n_points,
            bandwidth_hz,
            field_mhz,
            center_ppm,
            crop_ppm,
        } = config;
        if n_points < 2 {
            return Err(Error::Config(format!("n_points must be >= 2, got {n_points}")));
        }
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth_hz}")));
        }
        if !(field_mhz > 0.0 && field_mhz.is_finite()) {
            return Err(Error::Config(format!("field strength must be positive, got {field_mhz}")));
        }
        if !center_ppm.is_finite() || !crop_ppm.lo.is_finite() || !crop_ppm.hi.is_finite() {
            return Err(Error::Config("non-finite ppm value in axis".into()));
        }
        if crop_ppm.lo > crop_ppm.hi {
            return Err(Error::Config(format!(
                "crop window is reversed: [{}, {}]",
                crop_ppm.lo, crop_ppm.hi
            )));
        }

        let mut axis = Self {
            config,
            crop_start: 0,
            crop_len: 0,
        };
        let (full_lo, full_hi) = axis.representable_ppm();
        let slack = EDGE_TOL * axis.ppm_spacing();
        if crop_ppm.lo < full_lo - slack || crop_ppm.hi > full_hi + slack {
            return Err(Error::Config(format!(
                "crop window [{}, {}] ppm outside representable range [{full_lo}, {full_hi}]",
                crop_ppm.lo, crop_ppm.hi
            )));
        }

        let half = 0.5 * axis.ppm_spacing();
        let inside = |k: usize| {
            let p = axis.ppm_at(k);
            p - half >= crop_ppm.lo - slack && p + half <= crop_ppm.hi + slack
        };
        let first = (0..n_points).find(|&k| inside(k));
        let Some(first) = first else {
            return Err(Error::Config(format!(
                "crop window [{}, {}] ppm contains no complete frequency bin",
                crop_ppm.lo, crop_ppm.hi
            )));
        };
        let len = (first..n_points).take_while(|&k| inside(k)).count();
        axis.crop_start = first;
        axis.crop_len = len;
        Ok(axis)
    }

    /// Convenience constructor mirroring the individual geometry values.
    pub fn build(
        n_points: usize,
        bandwidth_hz: f64,
        field_mhz: f64,
        center_ppm: f64,
        crop_ppm: PpmWindow,
    ) -> Result<Self> {
        Self::new(AxisConfig {
            n_points,
            bandwidth_hz,
            field_mhz,
            center_ppm,
            crop_ppm,
        })
    }

    pub fn config(&self) -> &AxisConfig {
        &self.config
    }

    pub fn n_points(&self) -> usize {
        self.config.n_points
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.config.bandwidth_hz
    }

    pub fn field_mhz(&self) -> f64 {
        self.config.field_mhz
    }

    pub fn center_ppm(&self) -> f64 {
        self.config.center_ppm
    }

    pub fn dwell_s(&self) -> f64 {
        1.0 / self.config.bandwidth_hz
    }

    pub fn hz_spacing(&self) -> f64 {
        self.config.bandwidth_hz / self.config.n_points as f64
    }

    pub fn ppm_spacing(&self) -> f64 {
        self.config.bandwidth_hz / (self.config.n_points as f64 * self.config.field_mhz)
    }

    /// Frequency of shifted bin `k` in Hz relative to the carrier.
    pub fn freq_hz_at(&self, k: usize) -> f64 {
        (k as f64 - (self.config.n_points / 2) as f64) * self.hz_spacing()
    }

    pub fn ppm_at(&self, k: usize) -> f64 {
        self.config.center_ppm + self.freq_hz_at(k) / self.config.field_mhz
    }

    pub fn ppm_to_hz(&self, ppm: f64) -> f64 {
        (ppm - self.config.center_ppm) * self.config.field_mhz
    }

    /// Index into the unshifted FFT output that lands at shifted bin `k`.
    pub fn fft_index(&self, k: usize) -> usize {
        let n = self.config.n_points;
        (k + n - n / 2) % n
    }

    /// Lowest and highest ppm covered by any bin cell.
    pub fn representable_ppm(&self) -> (f64, f64) {
        let half = 0.5 * self.ppm_spacing();
        (self.ppm_at(0) - half, self.ppm_at(self.config.n_points - 1) + half)
    }

    /// The whole representable range as a window (crop = every bin).
    pub fn full_window(&self) -> PpmWindow {
        let (lo, hi) = self.representable_ppm();
        PpmWindow::new(lo, hi)
    }

    pub fn ppm_grid(&self) -> Vec<f64> {
        (0..self.config.n_points).map(|k| self.ppm_at(k)).collect()
    }

    pub fn crop_range(&self) -> std::ops::Range<usize> {
        self.crop_start..self.crop_start + self.crop_len
    }

    pub fn crop_len(&self) -> usize {
        self.crop_len
    }

    pub fn crop_ppm(&self) -> Vec<f64> {
        self.crop_range().map(|k| self.ppm_at(k)).collect()
    }

    pub fn crop_freq_hz(&self) -> Vec<f64> {
        self.crop_range().map(|k| self.freq_hz_at(k)).collect()
    }

    /// Crop bins mapped affinely onto [-1, 1]; a single-bin crop maps to 0.
    pub fn crop_unit_coordinates(&self) -> Vec<f64> {
        let l = self.crop_len;
        if l == 1 {
            return vec![0.0];
        }
        (0..l)
            .map(|j| -1.0 + 2.0 * j as f64 / (l - 1) as f64)
            .collect()
    }

    /// Time of sample `k` in seconds.
    pub fn time_at(&self, k: usize) -> f64 {
        k as f64 * self.dwell_s()
    }

    pub fn time_grid(&self) -> Vec<f64> {
        (0..self.config.n_points).map(|k| self.time_at(k)).collect()
    }
}

impl Default for SpectralAxis {
    fn default() -> Self {
        Self::new(AxisConfig::default()).expect("default axis is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_axis_has_355_crop_bins() {
        let axis = SpectralAxis::default();
        assert_eq!(axis.crop_len(), 355);
        let ppm = axis.crop_ppm();
        assert!(ppm.first().unwrap() - 0.5 * axis.ppm_spacing() >= 0.5);
        assert!(ppm.last().unwrap() + 0.5 * axis.ppm_spacing() <= 4.0);
    }

    #[test]
    fn ppm_grid_is_strictly_increasing_with_stated_spacing() {
        let axis = SpectralAxis::default();
        let g = axis.ppm_grid();
        let expect = 3000.0 / (1024.0 * 298.03);
        for w in g.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] - w[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn minimal_axis_full_crop() {
        let probe = SpectralAxis::build(2, 1.0, 1.0, 0.0, PpmWindow::new(-0.75, 0.25)).unwrap();
        let full = probe.full_window();
        let axis = SpectralAxis::build(2, 1.0, 1.0, 0.0, full).unwrap();
        assert_eq!(axis.crop_len(), 2);
        assert_eq!(axis.crop_range(), 0..2);
    }

    #[test]
    fn narrow_window_matches_enumeration() {
        let base = SpectralAxis::default();
        let delta = base.ppm_spacing();
        for (lo, width) in [(2.0, 1e-4), (2.0, 0.1), (1.234, 0.37), (3.0, 2.5 * delta)] {
            let hi = lo + width;
            let expected = base
                .ppm_grid()
                .iter()
                .filter(|&&p| p - delta / 2.0 >= lo && p + delta / 2.0 <= hi)
                .count();
            let axis = SpectralAxis::build(1024, 3000.0, 298.03, 4.65, PpmWindow::new(lo, hi));
            match axis {
                Ok(a) => assert_eq!(a.crop_len(), expected, "window [{lo}, {hi}]"),
                Err(_) => assert_eq!(expected, 0, "window [{lo}, {hi}]"),
            }
        }
    }

    #[test]
    fn crop_outside_range_is_config_error() {
        let err = SpectralAxis::build(1024, 3000.0, 298.03, 4.65, PpmWindow::new(-5.0, 4.0));
        assert!(matches!(err, Err(Error::Config(_))));
        let err = SpectralAxis::build(1024, 3000.0, 298.03, 4.65, PpmWindow::new(3.0, 2.0));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn fft_index_places_dc_at_center() {
        let axis = SpectralAxis::default();
        assert_eq!(axis.fft_index(512), 0);
        assert_eq!(axis.freq_hz_at(512), 0.0);
        assert_eq!(axis.fft_index(0), 512);
        let odd = SpectralAxis::build(5, 5.0, 1.0, 0.0, PpmWindow::new(-2.5, 2.5)).unwrap();
        assert_eq!(odd.fft_index(2), 0);
        assert_eq!(odd.fft_index(0), 3);
        assert_eq!(odd.freq_hz_at(0), -2.0);
    }
}
