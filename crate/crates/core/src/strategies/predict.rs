use crate::error::Result;
use crate::nnet::{BnStats, Mlp};
use crate::par::{try_map_slice, Exec};
use crate::signal::{ModelParams, ParamLayout};
use crate::spectrum::ComplexSpectrum;
use crate::strategies::norm::{denormalize, normalize, NormContext};

/// Rows per forward pass during inference.
pub const PREDICT_CHUNK: usize = 256;

pub(crate) fn layout_of(model: &Mlp) -> Result<ParamLayout> {
    match &model.spec().head {
        crate::nnet::Head::Physics { layout, .. } => Ok(*layout),
        crate::nnet::Head::Identity { .. } => Err(crate::Error::Config(
            "strategies need a network with the physics head".into(),
        )),
    }
}

/// Unit-norm copies of `ys` and their norms.
pub fn normalize_all(ys: &[&ComplexSpectrum]) -> Result<(Vec<ComplexSpectrum>, Vec<NormContext>)> {
    let mut units = Vec::with_capacity(ys.len());
    let mut ctxs = Vec::with_capacity(ys.len());
    for y in ys {
        let (u, c) = normalize(y)?;
        units.push(u);
        ctxs.push(c);
    }
    Ok((units, ctxs))
}

/// Network outputs in normalized units for unit-norm spectra.
pub fn predict_normalized(model: &Mlp, units: &[&ComplexSpectrum], stats: BnStats) -> Result<Vec<ModelParams>> {
    let layout = layout_of(model)?;
    let mut out = Vec::with_capacity(units.len());
    for chunk in units.chunks(PREDICT_CHUNK) {
        let x = model.input_matrix(chunk)?;
        let (theta, _) = model.forward(&x, stats)?;
        for row in theta.rows() {
            out.push(ModelParams::from_slice(row.as_slice().unwrap(), layout)?);
        }
    }
    Ok(out)
}

/// Eval-mode estimates in the units of each input spectrum.
pub fn predict(model: &Mlp, ys: &[&ComplexSpectrum]) -> Result<Vec<ModelParams>> {
    let (units, ctxs) = normalize_all(ys)?;
    let refs: Vec<&ComplexSpectrum> = units.iter().collect();
    let theta = predict_normalized(model, &refs, BnStats::Running)?;
    Ok(theta.iter().zip(ctxs).map(|(t, c)| denormalize(t, c)).collect())
}

/// [`predict`] with chunks spread over the pool; identical results.
pub fn predict_par(model: &Mlp, ys: &[&ComplexSpectrum], exec: Exec) -> Result<Vec<ModelParams>> {
    let chunks: Vec<&[&ComplexSpectrum]> = ys.chunks(PREDICT_CHUNK).collect();
    let parts = try_map_slice(&chunks, exec, |c| predict(model, c))?;
    Ok(parts.into_iter().flatten().collect())
}
