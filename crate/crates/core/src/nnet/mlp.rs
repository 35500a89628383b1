//! Multilayer perceptron with per-bin input batch normalization.
//!
//! Input rows are `[re_1..re_L, im_1..im_L]` of a unit-norm spectrum. Bin `j`
//! is normalized with statistics pooled over the real and imaginary value of
//! every row, then the row passes through the linear layers (ELU between
//! them) and the output head.
//!
//! All trainable values live in one flat vector:
//! `[bn_gamma (L), bn_beta (L)]` (when affine), then per layer the weight
//! matrix (`out × in`, row-major) followed by the bias.

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::adam::Adam;
use crate::nnet::head::Head;
use crate::signal::ParamLayout;
use crate::spectrum::ComplexSpectrum;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Tolerance on the unit-norm input check.
pub const NORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_bins: usize,
    /// Layer widths including the input (`2·input_bins`) and output width.
    pub widths: Vec<usize>,
    /// Learn a per-bin scale and shift after normalization.
    pub bn_affine: bool,
    pub head: Head,
}

impl MlpSpec {
    /// The 710 → 512 → 256 → 128 → |θ| network for `input_bins = 355`.
    pub fn standard(input_bins: usize, layout: ParamLayout) -> Self {
        Self {
            input_bins,
            widths: vec![2 * input_bins, 512, 256, 128, layout.len()],
            bn_affine: true,
            head: Head::physics(layout),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_bins == 0 || self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::Config(format!("invalid network shape {:?}", self.widths)));
        }
        if self.widths[0] != 2 * self.input_bins {
            return Err(Error::Config(format!(
                "first width must be 2·input_bins = {}, got {}",
                2 * self.input_bins,
                self.widths[0]
            )));
        }
        let out = *self.widths.last().unwrap();
        if out != self.head.width() {
            return Err(Error::Config(format!(
                "last width {out} does not match the head width {}",
                self.head.width()
            )));
        }
        self.head.validate()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn bn_len(&self) -> usize {
        if self.bn_affine {
            2 * self.input_bins
        } else {
            0
        }
    }

    /// Offsets `(weight, bias)` of every linear layer in the flat vector.
    fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = self.bn_len();
        (0..self.n_layers())
            .map(|l| {
                let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
                let w = off;
                let b = w + fan_in * fan_out;
                off = b + fan_out;
                (w, b)
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.bn_len()
            + (0..self.n_layers())
                .map(|l| self.widths[l] * self.widths[l + 1] + self.widths[l + 1])
                .sum::<usize>()
    }
}

/// Source of batch-normalization statistics in a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BnStats {
    /// Statistics of the current batch.
    Batch,
    /// Frozen running statistics.
    Running,
}

/// Values saved by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    /// Normalized input before the affine step, `B × 2L`.
    xhat: Array2<f64>,
    /// Layer inputs; `inputs[0]` is the batch-norm output.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Array2<f64>>,
    /// Per-bin batch mean and biased variance, when batch statistics were used.
    batch_stats: Option<(Vec<f64>, Vec<f64>, usize)>,
}

impl ForwardCache {
    /// Raw (pre-head) outputs.
    pub fn raw(&self) -> &Array2<f64> {
        self.pre.last().unwrap()
    }

    pub fn batch_size(&self) -> usize {
        self.xhat.nrows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    /// Incremented on every parameter change; forward caches remember it.
    #[serde(skip)]
    version: u64,
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

impl Mlp {
    /// Fan-in uniform initialization: weights and biases of a layer with
    /// fan-in `n` are drawn from `U(-1/√n, 1/√n)`; batch-norm starts as the
    /// identity (scale 1, shift 0, running mean 0, running variance 1).
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; spec.n_params()];
        if spec.bn_affine {
            params[..spec.input_bins].fill(1.0);
        }
        for (l, (w, _)) in spec.layer_offsets().into_iter().enumerate() {
            let fan_in = spec.widths[l];
            let fan_out = spec.widths[l + 1];
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[w..w + fan_in * fan_out + fan_out] {
                *p = rng.random_range(-bound..bound);
            }
        }
        let l = spec.input_bins;
        Ok(Self {
            spec,
            params,
            running_mean: vec![0.0; l],
            running_var: vec![1.0; l],
            version: 0,
        })
    }

    /// Reassembles a model from stored parts.
    pub fn from_parts(spec: MlpSpec, params: Vec<f64>, running_mean: Vec<f64>, running_var: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.n_params() || running_mean.len() != spec.input_bins || running_var.len() != spec.input_bins
        {
            return Err(Error::Validation("model parts do not match the network spec".into()));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                index: i,
                context: "network parameter".into(),
            });
        }
        if running_var.iter().any(|v| v.is_nan() || *v < 0.0) || running_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Validation("invalid batch-norm running statistics".into()));
        }
        Ok(Self {
            spec,
            params,
            running_mean,
            running_var,
            version: 0,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Replaces the parameter vector.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Validation("parameter vector length mismatch".into()));
        }
        self.params.copy_from_slice(params);
        self.version += 1;
        Ok(())
    }

    /// Sets the output-layer bias so that an all-zero last hidden layer maps
    /// to `theta` through the head.
    pub fn set_output_bias(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.spec.output_width() {
            return Err(Error::Validation("bias target has the wrong width".into()));
        }
        let raw = self.spec.head.inverse(theta);
        let (_, b) = *self.spec.layer_offsets().last().unwrap();
        self.params[b..b + raw.len()].copy_from_slice(&raw);
        self.version += 1;
        Ok(())
    }

    /// One Adam update with `grads`.
    pub fn adam_step(&mut self, adam: &mut Adam, grads: &[f64]) -> Result<()> {
        adam.step(&mut self.params, grads)?;
        self.version += 1;
        Ok(())
    }

    /// Packs unit-norm cropped spectra into network input rows.
    pub fn input_matrix(&self, spectra: &[&ComplexSpectrum]) -> Result<Array2<f64>> {
        let l = self.spec.input_bins;
        let mut x = Array2::zeros((spectra.len(), 2 * l));
        for (b, s) in spectra.iter().enumerate() {
            if s.len() != l {
                return Err(Error::Validation(format!("spectrum has {} bins, network expects {l}", s.len())));
            }
            let norm = s.norm();
            if (norm - 1.0).abs() > NORM_TOL {
                return Err(Error::Validation(format!("network input must have unit norm, got {norm}")));
            }
            let mut row = x.row_mut(b);
            for (j, z) in s.values.iter().enumerate() {
                row[j] = z.re;
                row[l + j] = z.im;
            }
        }
        Ok(x)
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (w, b) = self.spec.layer_offsets()[l];
        let (fan_in, fan_out) = (self.spec.widths[l], self.spec.widths[l + 1]);
        (
            ArrayView2::from_shape((fan_out, fan_in), &self.params[w..b]).unwrap(),
            ArrayView1::from(&self.params[b..b + fan_out]),
        )
    }

    /// Per-bin mean and biased variance pooled over real/imag and the batch.
    fn batch_stats(&self, x: &Array2<f64>) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let l = self.spec.input_bins;
        let count = 2 * x.nrows();
        if count < 2 {
            return Err(Error::Statistics(format!(
                "batch statistics need at least 2 values per bin, got {count}"
            )));
        }
        let mut mean = vec![0.0; l];
        let mut var = vec![0.0; l];
        for row in x.rows() {
            for j in 0..l {
                mean[j] += row[j] + row[l + j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        for row in x.rows() {
            for j in 0..l {
                var[j] += (row[j] - mean[j]).powi(2) + (row[l + j] - mean[j]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v /= count as f64);
        Ok((mean, var, count))
    }

    /// Raw outputs, constrained outputs and the backward cache for input
    /// rows `x` (see [`Mlp::input_matrix`]).
    pub fn forward(&self, x: &Array2<f64>, stats: BnStats) -> Result<(Array2<f64>, ForwardCache)> {
        let l = self.spec.input_bins;
        if x.ncols() != 2 * l {
            return Err(Error::Validation(format!("input has {} columns, expected {}", x.ncols(), 2 * l)));
        }
        if x.nrows() == 0 {
            return Err(Error::Validation("empty batch".into()));
        }
        let (mean, var, batch_stats) = match stats {
            BnStats::Batch => {
                let (m, v, n) = self.batch_stats(x)?;
                (m.clone(), v.clone(), Some((m, v, n)))
            }
            BnStats::Running => (self.running_mean.clone(), self.running_var.clone(), None),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = x.clone();
        for mut row in xhat.rows_mut() {
            for j in 0..l {
                row[j] = (row[j] - mean[j]) * inv_std[j];
                row[l + j] = (row[l + j] - mean[j]) * inv_std[j];
            }
        }
        let mut h0 = xhat.clone();
        if self.spec.bn_affine {
            let (g, b) = self.params[..2 * l].split_at(l);
            for mut row in h0.rows_mut() {
                for j in 0..l {
                    row[j] = g[j] * row[j] + b[j];
                    row[l + j] = g[j] * row[l + j] + b[j];
                }
            }
        }

        let n_layers = self.spec.n_layers();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut h = h0;
        for k in 0..n_layers {
            let (w, b) = self.layer(k);
            let mut z = h.dot(&w.t());
            z += &b;
            let next = if k + 1 < n_layers { z.mapv(elu) } else { Array2::zeros((0, 0)) };
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(z);
        }
        let raw = pre.last().unwrap();
        let mut out = Array2::zeros(raw.raw_dim());
        for (r, mut o) in raw.rows().into_iter().zip(out.rows_mut()) {
            self.spec
                .head
                .apply(r.as_slice().unwrap(), o.as_slice_mut().unwrap());
        }
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: i % self.spec.output_width(),
                context: "network output".into(),
            });
        }
        Ok((
            out,
            ForwardCache {
                version: self.version,
                xhat,
                inputs,
                pre,
                batch_stats,
            },
        ))
    }

    /// Eval-mode outputs only.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x, BnStats::Running)?.0)
    }

    /// Folds the batch statistics of `cache` into the running statistics.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) -> Result<()> {
        self.check_cache(cache)?;
        let Some((mean, var, n)) = &cache.batch_stats else {
            return Ok(());
        };
        let unbias = *n as f64 / (*n as f64 - 1.0);
        for j in 0..self.spec.input_bins {
            self.running_mean[j] = (1.0 - BN_MOMENTUM) * self.running_mean[j] + BN_MOMENTUM * mean[j];
            self.running_var[j] = (1.0 - BN_MOMENTUM) * self.running_var[j] + BN_MOMENTUM * var[j] * unbias;
        }
        Ok(())
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.version != self.version {
            return Err(Error::StaleCache {
                cache: cache.version,
                model: self.version,
            });
        }
        Ok(())
    }

    /// Gradient over all parameters given the cotangent of the constrained
    /// outputs (`B × out`).
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>) -> Result<Vec<f64>> {
        self.check_cache(cache)?;
        let raw = cache.raw();
        if d_out.dim() != raw.dim() {
            return Err(Error::Validation(format!(
                "cotangent shape {:?} does not match output shape {:?}",
                d_out.dim(),
                raw.dim()
            )));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut dz = d_out.clone();
        for (r, mut g) in raw.rows().into_iter().zip(dz.rows_mut()) {
            self.spec
                .head
                .backward(r.as_slice().unwrap(), g.as_slice_mut().unwrap());
        }
        let offsets = self.spec.layer_offsets();
        for k in (0..self.spec.n_layers()).rev() {
            let (fan_in, fan_out) = (self.spec.widths[k], self.spec.widths[k + 1]);
            let (w_off, b_off) = offsets[k];
            {
                let mut gw = ArrayViewMut2::from_shape((fan_out, fan_in), &mut grads[w_off..b_off]).unwrap();
                gw.assign(&dz.t().dot(&cache.inputs[k]));
            }
            for (gb, s) in grads[b_off..b_off + fan_out].iter_mut().zip(dz.sum_axis(Axis(0))) {
                *gb = s;
            }
            if k == 0 && !self.spec.bn_affine {
                break;
            }
            let (w, _) = self.layer(k);
            let mut dh = dz.dot(&w);
            if k > 0 {
                dh.zip_mut_with(&cache.pre[k - 1], |d, &z| *d *= elu_grad(z));
                dz = dh;
            } else {
                let l = self.spec.input_bins;
                let (gg, gb) = grads[..2 * l].split_at_mut(l);
                for (drow, xrow) in dh.rows().into_iter().zip(cache.xhat.rows()) {
                    for j in 0..l {
                        gg[j] += drow[j] * xrow[j] + drow[l + j] * xrow[l + j];
                        gb[j] += drow[j] + drow[l + j];
                    }
                }
                break;
            }
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                index: i,
                context: "network gradient".into(),
            });
        }
        Ok(grads)
    }
}
