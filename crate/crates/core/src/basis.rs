//! Metabolite basis functions.
//!
//! A basis description lists each metabolite as a set of resonance lines
//! (chemical shift, amplitude, optional intrinsic Gaussian damping). The
//! synthesized basis holds the time-domain signal of every entry,
//! `s_m(t) = Σ_p A_p exp(i 2π δ_p t) exp(-(g_p t)²)` with `δ_p` the line offset
//! from the carrier in Hz.
//!
//! The bundled description (`data/basis_default.json`) approximates common
//! brain metabolites with singlets and collapsed multiplets. It is a stand-in
//! for a measured basis set, not a spin-simulation result.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::axis::{AxisConfig, PpmWindow, SpectralAxis};
use crate::error::{Error, Result};
use crate::fingerprint::sha256_hex;

const DEFAULT_BASIS_JSON: &str = include_str!("../data/basis_default.json");

/// Default intrinsic Gaussian damping of macromolecule lines, s⁻¹.
pub const DEFAULT_MM_GAUSS_PER_S: f64 = 40.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakSpec {
    pub ppm: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub intrinsic_gauss_per_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaboliteSpec {
    pub name: String,
    #[serde(default)]
    pub is_mm: bool,
    pub peaks: Vec<PeakSpec>,
}

/// Geometry echo stored in basis files; the crop window is not part of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisAxis {
    pub n_points: usize,
    pub bandwidth_hz: f64,
    pub field_mhz: f64,
    pub center_ppm: f64,
}

impl BasisAxis {
    pub fn from_axis(axis: &SpectralAxis) -> Self {
        let c = axis.config();
        Self {
            n_points: c.n_points,
            bandwidth_hz: c.bandwidth_hz,
            field_mhz: c.field_mhz,
            center_ppm: c.center_ppm,
        }
    }

    pub fn with_crop(&self, crop_ppm: PpmWindow) -> AxisConfig {
        AxisConfig {
            n_points: self.n_points,
            bandwidth_hz: self.bandwidth_hz,
            field_mhz: self.field_mhz,
            center_ppm: self.center_ppm,
            crop_ppm,
        }
    }
}

/// Basis interchange document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub axis: BasisAxis,
    pub metabolites: Vec<MetaboliteSpec>,
}

impl BasisSpec {
    /// The bundled 20-metabolite + macromolecule description.
    pub fn default_brain() -> Self {
        Self::from_json_str(DEFAULT_BASIS_JSON).expect("bundled basis parses")
    }

    /// Three well-separated singlets with no macromolecule entry, used for
    /// recovery checks.
    pub fn three_singlets(axis: &BasisAxis) -> Self {
        let line = |name: &str, ppm: f64| MetaboliteSpec {
            name: name.to_string(),
            is_mm: false,
            peaks: vec![PeakSpec {
                ppm,
                amplitude: 3.0e3,
                intrinsic_gauss_per_s: 0.0,
            }],
        };
        Self {
            axis: axis.clone(),
            metabolites: vec![line("P1", 1.3), line("P2", 2.2), line("P3", 3.2)],
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.metabolites.iter().map(|m| m.name.clone()).collect()
    }

    /// Structural checks that do not need an axis.
    pub fn validate(&self) -> Result<()> {
        if self.metabolites.is_empty() {
            return Err(Error::Validation("basis has no metabolites".into()));
        }
        let mut seen = HashSet::new();
        for m in &self.metabolites {
            if !seen.insert(m.name.as_str()) {
                return Err(Error::Validation(format!("duplicate metabolite name '{}'", m.name)));
            }
            if m.peaks.is_empty() {
                return Err(Error::Validation(format!("metabolite '{}' has no peaks", m.name)));
            }
            for p in &m.peaks {
                if !(p.ppm.is_finite() && p.amplitude.is_finite())
                    || !(p.intrinsic_gauss_per_s.is_finite() && p.intrinsic_gauss_per_s >= 0.0)
                {
                    return Err(Error::Validation(format!(
                        "metabolite '{}' has an invalid peak {p:?}",
                        m.name
                    )));
                }
            }
        }
        let mm = self.metabolites.iter().filter(|m| m.is_mm).count();
        if mm > 1 {
            return Err(Error::Validation(format!(
                "at most one macromolecule entry allowed, found {mm}"
            )));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("basis serializes").as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisEntry {
    pub name: String,
    pub signal: Vec<Complex64>,
    pub is_mm: bool,
}

/// Time-domain basis signals on one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisSet {
    entries: Vec<BasisEntry>,
    n_points: usize,
    dwell_s: f64,
    fingerprint: String,
}

impl BasisSet {
    pub fn entries(&self) -> &[BasisEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dwell_s(&self) -> f64 {
        self.dwell_s
    }

    pub fn mm_index(&self) -> Option<usize> {
        self.entries.iter().position(|e| e.is_mm)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Fingerprint of the description this set was synthesized from.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

/// Builds time-domain basis signals for `spec` on `axis`.
pub fn synthesize_basis(spec: &BasisSpec, axis: &SpectralAxis) -> Result<BasisSet> {
    spec.validate()?;
    let echo = BasisAxis::from_axis(axis);
    if echo != spec.axis {
        return Err(Error::Validation(format!(
            "basis geometry {:?} does not match axis {:?}",
            spec.axis, echo
        )));
    }
    let (lo, hi) = axis.representable_ppm();
    let times = axis.time_grid();
    let mut entries = Vec::with_capacity(spec.metabolites.len());
    for m in &spec.metabolites {
        let mut signal = vec![Complex64::new(0.0, 0.0); axis.n_points()];
        for p in &m.peaks {
            if p.ppm < lo || p.ppm > hi {
                return Err(Error::Validation(format!(
                    "peak of '{}' at {} ppm outside representable range [{lo}, {hi}]",
                    m.name, p.ppm
                )));
            }
            let hz = axis.ppm_to_hz(p.ppm);
            for (s, &t) in signal.iter_mut().zip(&times) {
                let g = p.intrinsic_gauss_per_s * t;
                *s += Complex64::from_polar(p.amplitude * (-g * g).exp(), 2.0 * PI * hz * t);
            }
        }
        entries.push(BasisEntry {
            name: m.name.clone(),
            signal,
            is_mm: m.is_mm,
        });
    }
    Ok(BasisSet {
        entries,
        n_points: axis.n_points(),
        dwell_s: axis.dwell_s(),
        fingerprint: spec.fingerprint(),
    })
}
