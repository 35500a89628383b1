//! Parametric forward model and its exact residual gradient.
//!
//! ```text
//! X(f|θ) = e^{i(φ0 + f φ1)} Σ_m a_m S_m(f) + B(f)
//! S_m(f) = DFT{ s_m(t) e^{-(γ + ς² t + iε) t} }
//! B(f)   = Σ_k (b_k + i b_{K+1+k}) u(f)^k,  u = crop window mapped to [-1, 1]
//! ```
//!
//! The damping is shared by all entries, so the model sums the basis in the
//! time domain and needs a single DFT. The residual gradient uses a second
//! DFT: for a time-domain parameter p, `∂L/∂p = 2 Re Σ_t ∂z(t)/∂p · H(t)` with
//! `H = DFT(conj(r) · phase)` placed on the crop bins.
//!
//! Sign convention: the factor `e^{-iεt}` moves every line by `-ε/(2π)` Hz
//! under the forward DFT used here.

use std::sync::Arc;

use num_complex::Complex64;

use crate::axis::SpectralAxis;
use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::signal::params::{ModelParams, ParamLayout};
use crate::spectrum::{ComplexSpectrum, Transform};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Forward model bound to one axis, basis and baseline order.
#[derive(Clone, Debug)]
pub struct SignalModel {
    axis: SpectralAxis,
    basis: Arc<BasisSet>,
    transform: Transform,
    layout: ParamLayout,
    times: Vec<f64>,
    crop_hz: Vec<f64>,
    crop_fft_index: Vec<usize>,
    /// `u^k` for k = 0..=K over the crop window.
    powers: Vec<Vec<f64>>,
}

/// Intermediate quantities of one forward evaluation.
struct Evaluation {
    /// Damped time-domain sum `z(t)`.
    z: Vec<Complex64>,
    /// Damping factor `d(t)`.
    damping: Vec<Complex64>,
    /// Phase factor per crop bin.
    phase: Vec<Complex64>,
    /// Metabolite sum on the crop window before phasing.
    metab: Vec<Complex64>,
    baseline: Vec<Complex64>,
}

impl SignalModel {
    pub fn new(axis: SpectralAxis, basis: BasisSet, baseline_order: usize) -> Result<Self> {
        if basis.n_points() != axis.n_points() {
            return Err(Error::Validation(format!(
                "basis has {} points, axis has {}",
                basis.n_points(),
                axis.n_points()
            )));
        }
        let u = axis.crop_unit_coordinates();
        let powers = (0..=baseline_order)
            .map(|k| u.iter().map(|x| x.powi(k as i32)).collect())
            .collect();
        Ok(Self {
            transform: Transform::new(axis.n_points()),
            layout: ParamLayout::new(basis.len(), baseline_order),
            times: axis.time_grid(),
            crop_hz: axis.crop_freq_hz(),
            crop_fft_index: axis.crop_range().map(|k| axis.fft_index(k)).collect(),
            powers,
            basis: Arc::new(basis),
            axis,
        })
    }

    pub fn axis(&self) -> &SpectralAxis {
        &self.axis
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn crop_len(&self) -> usize {
        self.crop_hz.len()
    }

    fn check(&self, theta: &ModelParams) -> Result<()> {
        let layout = theta.layout()?;
        if layout != self.layout {
            return Err(Error::Validation(format!(
                "parameters have layout {layout:?}, model expects {:?}",
                self.layout
            )));
        }
        if let Some(i) = theta.to_vec().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                index: i,
                context: "forward model input".into(),
            });
        }
        if theta.gamma < 0.0 || theta.sigma_g < 0.0 {
            return Err(Error::Validation(format!(
                "broadenings must be nonnegative (gamma {}, sigma_g {})",
                theta.gamma, theta.sigma_g
            )));
        }
        Ok(())
    }

    fn evaluate(&self, theta: &ModelParams, include: impl Fn(usize) -> bool) -> Evaluation {
        let n = self.axis.n_points();
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        for (m, entry) in self.basis.entries().iter().enumerate() {
            let a = theta.amplitudes[m];
            if a == 0.0 || !include(m) {
                continue;
            }
            for (acc, s) in z.iter_mut().zip(&entry.signal) {
                *acc += s * a;
            }
        }
        let sg2 = theta.sigma_g * theta.sigma_g;
        let damping: Vec<Complex64> = self
            .times
            .iter()
            .map(|&t| Complex64::from_polar((-(theta.gamma + sg2 * t) * t).exp(), -theta.epsilon * t))
            .collect();
        for (zk, dk) in z.iter_mut().zip(&damping) {
            *zk *= dk;
        }
        let mut buf = z.clone();
        self.transform.forward_in_place(&mut buf);
        let metab: Vec<Complex64> = self.crop_fft_index.iter().map(|&q| buf[q]).collect();
        let phase: Vec<Complex64> = self
            .crop_hz
            .iter()
            .map(|&f| Complex64::from_polar(1.0, theta.phi0 + f * theta.phi1))
            .collect();
        let k1 = self.layout.baseline_order + 1;
        let baseline = (0..self.crop_len())
            .map(|j| {
                (0..k1)
                    .map(|k| Complex64::new(theta.baseline[k], theta.baseline[k1 + k]) * self.powers[k][j])
                    .sum()
            })
            .collect();
        Evaluation {
            z,
            damping,
            phase,
            metab,
            baseline,
        }
    }

    /// Modeled spectrum over the crop window.
    pub fn forward(&self, theta: &ModelParams) -> Result<ComplexSpectrum> {
        self.check(theta)?;
        let ev = self.evaluate(theta, |_| true);
        Ok(ComplexSpectrum::cropped(
            ev.metab
                .iter()
                .zip(&ev.phase)
                .zip(&ev.baseline)
                .map(|((s, p), b)| p * s + b)
                .collect(),
        ))
    }

    /// Phased metabolite signal without the macromolecule entry and baseline.
    pub fn metabolite_only(&self, theta: &ModelParams) -> Result<ComplexSpectrum> {
        self.check(theta)?;
        let mm = self.basis.mm_index();
        let ev = self.evaluate(theta, |m| Some(m) != mm);
        Ok(ComplexSpectrum::cropped(
            ev.metab.iter().zip(&ev.phase).map(|(s, p)| p * s).collect(),
        ))
    }

    /// The broadened, shifted and phased contribution of entry `m` at unit
    /// amplitude.
    pub fn component(&self, theta: &ModelParams, m: usize) -> Result<ComplexSpectrum> {
        self.check(theta)?;
        if m >= self.basis.len() {
            return Err(Error::Validation(format!("no basis entry {m}")));
        }
        let mut unit = theta.clone();
        unit.amplitudes.iter_mut().for_each(|a| *a = 0.0);
        unit.amplitudes[m] = 1.0;
        let ev = self.evaluate(&unit, |i| i == m);
        Ok(ComplexSpectrum::cropped(
            ev.metab.iter().zip(&ev.phase).map(|(s, p)| p * s).collect(),
        ))
    }

    fn check_observation(&self, y: &ComplexSpectrum) -> Result<()> {
        if !y.cropped || y.len() != self.crop_len() {
            return Err(Error::Validation(format!(
                "observation must be a cropped spectrum of {} bins, got {} (cropped: {})",
                self.crop_len(),
                y.len(),
                y.cropped
            )));
        }
        Ok(())
    }

    /// Squared residual `Σ_f |y(f) - X(f|θ)|²` over the crop window.
    pub fn loss(&self, theta: &ModelParams, y: &ComplexSpectrum) -> Result<f64> {
        self.check_observation(y)?;
        let x = self.forward(theta)?;
        let loss: f64 = x.values.iter().zip(&y.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        if !loss.is_finite() {
            return Err(Error::Numeric("residual loss is not finite".into()));
        }
        Ok(loss)
    }

    /// Residual loss and its exact gradient with respect to every component
    /// of θ, in [`ParamLayout`] order.
    pub fn residual_gradient(&self, theta: &ModelParams, y: &ComplexSpectrum) -> Result<(f64, Vec<f64>)> {
        self.check_observation(y)?;
        self.check(theta)?;
        let layout = self.layout;
        let ev = self.evaluate(theta, |_| true);
        let l = self.crop_len();

        let mut grad = vec![0.0; layout.len()];
        let mut loss = 0.0;
        let mut residual = Vec::with_capacity(l);
        for j in 0..l {
            let pz = ev.phase[j] * ev.metab[j];
            let r = pz + ev.baseline[j] - y.values[j];
            loss += r.norm_sqr();
            let rc = r.conj();
            grad[layout.phi0()] += 2.0 * (rc * I * pz).re;
            grad[layout.phi1()] += 2.0 * (rc * I * pz).re * self.crop_hz[j];
            residual.push(r);
        }
        let k1 = layout.baseline_order + 1;
        for k in 0..k1 {
            let (mut gre, mut gim) = (0.0, 0.0);
            for (r, u) in residual.iter().zip(&self.powers[k]) {
                gre += r.re * u;
                gim += r.im * u;
            }
            grad[layout.baseline(k)] = 2.0 * gre;
            grad[layout.baseline(k1 + k)] = 2.0 * gim;
        }

        let n = self.axis.n_points();
        let mut h = vec![Complex64::new(0.0, 0.0); n];
        for (j, &q) in self.crop_fft_index.iter().enumerate() {
            h[q] = residual[j].conj() * ev.phase[j];
        }
        self.transform.forward_in_place(&mut h);

        let weighted: Vec<Complex64> = ev.damping.iter().zip(&h).map(|(d, hk)| d * hk).collect();
        for (m, entry) in self.basis.entries().iter().enumerate() {
            let acc: f64 = entry
                .signal
                .iter()
                .zip(&weighted)
                .map(|(s, w)| s.re * w.re - s.im * w.im)
                .sum();
            grad[layout.amplitude(m)] = 2.0 * acc;
        }
        let (mut g_gamma, mut g_sigma, mut g_eps) = (0.0, 0.0, 0.0);
        for ((&t, zk), hk) in self.times.iter().zip(&ev.z).zip(&h) {
            let zh = zk * hk;
            g_gamma -= t * zh.re;
            g_sigma -= t * t * zh.re;
            // Re(-i t z H) = t Im(z H)
            g_eps += t * zh.im;
        }
        grad[layout.gamma()] = 2.0 * g_gamma;
        grad[layout.sigma_g()] = 4.0 * theta.sigma_g * g_sigma;
        grad[layout.epsilon()] = 2.0 * g_eps;

        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                index: i,
                context: "residual gradient".into(),
            });
        }
        if !loss.is_finite() {
            return Err(Error::Numeric("residual loss is not finite".into()));
        }
        Ok((loss, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axis::AxisConfig;
    use crate::basis::{synthesize_basis, BasisAxis, BasisSpec, MetaboliteSpec, PeakSpec};
    use std::f64::consts::PI;

    fn default_model() -> SignalModel {
        let axis = SpectralAxis::default();
        let basis = synthesize_basis(&BasisSpec::default_brain(), &axis).unwrap();
        SignalModel::new(axis, basis, 2).unwrap()
    }

    fn sample_theta(model: &SignalModel, seed: u64) -> ModelParams {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let layout = model.layout();
        let mut p = ModelParams::zeros(layout);
        for a in p.amplitudes.iter_mut() {
            *a = 0.5 + 10.0 * next();
        }
        p.gamma = 2.0 + 20.0 * next();
        p.sigma_g = 2.0 + 20.0 * next();
        p.epsilon = -10.0 + 20.0 * next();
        p.phi0 = -0.5 + next();
        p.phi1 = (-1.0 + 2.0 * next()) * 1e-5;
        for b in p.baseline.iter_mut() {
            *b = -500.0 + 1000.0 * next();
        }
        p
    }

    #[test]
    fn zero_params_zero_spectrum() {
        let model = default_model();
        let mut p = ModelParams::zeros(model.layout());
        p.gamma = 5.0;
        let x = model.forward(&p).unwrap();
        assert!(x.values.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn phase_pi_negates_metabolite_term() {
        let model = default_model();
        let mut p = sample_theta(&model, 3);
        p.baseline.iter_mut().for_each(|b| *b = 0.0);
        p.phi0 = 0.0;
        let a = model.forward(&p).unwrap();
        p.phi0 = PI;
        let b = model.forward(&p).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x + y).norm() <= 1e-12 * x.norm().max(1.0));
        }
    }

    #[test]
    fn phase_is_2pi_periodic() {
        let model = default_model();
        let mut p = sample_theta(&model, 11);
        let a = model.forward(&p).unwrap();
        p.phi0 += 2.0 * PI;
        let b = model.forward(&p).unwrap();
        let scale = a.norm();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn amplitude_linearity() {
        let model = default_model();
        let p = sample_theta(&model, 5);
        let base = model.forward(&p).unwrap();
        for m in [0, 7, 20] {
            let mut q = p.clone();
            q.amplitudes[m] += 2.5;
            let bumped = model.forward(&q).unwrap();
            let comp = model.component(&p, m).unwrap();
            let scale = bumped.norm();
            for j in 0..base.len() {
                let expect = base.values[j] + comp.values[j] * 2.5;
                assert!((bumped.values[j] - expect).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn baseline_never_touches_metabolite_term() {
        let model = default_model();
        let p = sample_theta(&model, 8);
        let mut q = p.clone();
        q.baseline.iter_mut().for_each(|b| *b += 123.0);
        let a = model.metabolite_only(&p).unwrap();
        let b = model.metabolite_only(&q).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_model_has_zero_loss_and_gradient() {
        let model = default_model();
        let p = sample_theta(&model, 21);
        let y = model.forward(&p).unwrap();
        let (loss, grad) = model.residual_gradient(&p, &y).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn constant_real_baseline_gradient() {
        let model = default_model();
        let p = sample_theta(&model, 2);
        let y = model.forward(&sample_theta(&model, 99)).unwrap();
        let x = model.forward(&p).unwrap();
        let expect: f64 = 2.0 * x.values.iter().zip(&y.values).map(|(a, b)| (a - b).re).sum::<f64>();
        let (_, grad) = model.residual_gradient(&p, &y).unwrap();
        let g = grad[model.layout().baseline(0)];
        assert!((g - expect).abs() <= 1e-10 * expect.abs());
    }

    /// `L(θ') - L(θ)` accumulated per bin as `Re((x' - x) conj(x' + x - 2y))`,
    /// which avoids differencing two large totals.
    fn loss_delta(model: &SignalModel, base: &ComplexSpectrum, v: &[f64], y: &ComplexSpectrum) -> f64 {
        let x = model.forward(&ModelParams::from_slice(v, model.layout()).unwrap()).unwrap();
        (0..y.len())
            .map(|j| {
                let d = x.values[j] - base.values[j];
                let s = x.values[j] + base.values[j] - y.values[j] * 2.0;
                (d * s.conj()).re
            })
            .sum()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let model = default_model();
        let layout = model.layout();
        for seed in 0..100 {
            let p = sample_theta(&model, 100 + seed);
            let y = model.forward(&sample_theta(&model, 200 + seed)).unwrap();
            let (_, grad) = model.residual_gradient(&p, &y).unwrap();
            let base = model.forward(&p).unwrap();
            let v = p.to_vec();
            for i in 0..layout.len() {
                let h = 1e-4 * v[i].abs().max(if i == layout.phi1() { 1e-5 } else { 1.0 });
                let at = |k: f64| {
                    let mut w = v.clone();
                    w[i] += k * h;
                    loss_delta(&model, &base, &w, &y)
                };
                // Five-point central stencil.
                let fd = (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * h);
                let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs());
                assert!(rel < 1e-5, "seed {seed} component {i}: analytic {} fd {fd}", grad[i]);
            }
        }
    }

    #[test]
    fn lorentzian_fwhm_close_to_gamma_over_pi() {
        // Long acquisition so the line spans many bins.
        let cfg = AxisConfig {
            n_points: 16384,
            crop_ppm: crate::axis::PpmWindow::new(4.3, 5.0),
            ..AxisConfig::default()
        };
        let axis = SpectralAxis::new(cfg).unwrap();
        let spec = BasisSpec {
            axis: BasisAxis::from_axis(&axis),
            metabolites: vec![MetaboliteSpec {
                name: "S".into(),
                is_mm: false,
                peaks: vec![PeakSpec {
                    ppm: 4.65,
                    amplitude: 1.0,
                    intrinsic_gauss_per_s: 0.0,
                }],
            }],
        };
        let basis = synthesize_basis(&spec, &axis).unwrap();
        let model = SignalModel::new(axis.clone(), basis, 0).unwrap();
        let mut p = ModelParams::zeros(model.layout());
        p.amplitudes[0] = 1.0;
        p.gamma = 10.0;
        let x = model.forward(&p).unwrap();
        // Power spectrum of exp(-γt) has FWHM γ/π Hz.
        let power: Vec<f64> = x.values.iter().map(|z| z.norm_sqr()).collect();
        let peak = power.iter().cloned().fold(0.0, f64::max);
        let above = power.iter().filter(|&&v| v >= 0.5 * peak).count();
        let fwhm = above as f64 * axis.hz_spacing();
        let expect = 10.0 / PI;
        assert!((fwhm - expect).abs() / expect < 0.1, "FWHM {fwhm} Hz");
    }

    #[test]
    fn epsilon_shifts_lines_down_by_eps_over_2pi() {
        let model = default_model();
        let axis = model.axis().clone();
        let mut p = ModelParams::zeros(model.layout());
        let naa = model.basis().index_of("NAA").unwrap();
        p.amplitudes[naa] = 10.0;
        p.gamma = 3.0;
        let peak_ppm = |p: &ModelParams| {
            let x = model.forward(p).unwrap();
            let j = (0..x.len())
                .max_by(|&a, &b| x.values[a].norm().total_cmp(&x.values[b].norm()))
                .unwrap();
            axis.crop_ppm()[j]
        };
        let before = peak_ppm(&p);
        // Shift by 20 bins worth of Hz.
        let shift_hz = 20.0 * axis.hz_spacing();
        p.epsilon = 2.0 * PI * shift_hz;
        let after = peak_ppm(&p);
        let moved_bins = ((after - before) / axis.ppm_spacing()).round();
        assert_eq!(moved_bins, -20.0);
    }

    #[test]
    fn rejects_bad_shapes_and_negative_broadening() {
        let model = default_model();
        let mut p = ModelParams::zeros(model.layout());
        p.gamma = -1.0;
        assert!(matches!(model.forward(&p), Err(Error::Validation(_))));
        let q = ModelParams::zeros(ParamLayout::new(3, 2));
        assert!(matches!(model.forward(&q), Err(Error::Validation(_))));
    }
}
