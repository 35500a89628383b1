use crate::error::{Error, Result};
use crate::signal::{ModelParams, ParamLayout};
use crate::spectrum::ComplexSpectrum;

/// Euclidean norm removed from a spectrum by [`normalize`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormContext {
    pub norm: f64,
}

/// `y / ‖y‖₂`.
pub fn normalize(y: &ComplexSpectrum) -> Result<(ComplexSpectrum, NormContext)> {
    let norm = y.norm();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::Validation(format!("cannot normalize a spectrum with norm {norm}")));
    }
    Ok((y.scaled(1.0 / norm), NormContext { norm }))
}

/// Scales amplitudes and baseline of a normalized-units estimate back to the
/// units of the original spectrum.
pub fn denormalize(theta: &ModelParams, ctx: NormContext) -> ModelParams {
    theta.scale_linear(ctx.norm)
}

/// [`denormalize`] on a flat θ vector.
pub fn denormalize_vec(theta: &[f64], layout: ParamLayout, ctx: NormContext) -> Vec<f64> {
    theta
        .iter()
        .enumerate()
        .map(|(i, &v)| if layout.is_scale_carrying(i) { v * ctx.norm } else { v })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn spec(seed: u64) -> ComplexSpectrum {
        ComplexSpectrum::cropped(
            (0..50)
                .map(|k| {
                    let t = (k as f64 + seed as f64) * 0.37;
                    Complex64::new(t.sin() * 1e4, t.cos() * 3e3)
                })
                .collect(),
        )
    }

    #[test]
    fn unit_norm_and_identity() {
        let y = spec(1);
        let (u, ctx) = normalize(&y).unwrap();
        assert!((u.norm() - 1.0).abs() < 1e-12);
        let (again, c2) = normalize(&u).unwrap();
        assert!((c2.norm - 1.0).abs() < 1e-15);
        for (a, b) in again.values.iter().zip(&u.values) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!(ctx.norm > 1.0);
        assert!(normalize(&ComplexSpectrum::zeros_cropped(3)).is_err());
    }

    #[test]
    fn homogeneity() {
        let y = spec(2);
        let (u1, c1) = normalize(&y).unwrap();
        let (u3, c3) = normalize(&y.scaled(3.0)).unwrap();
        for (a, b) in u1.values.iter().zip(&u3.values) {
            assert!((a - b).norm() < 1e-15);
        }
        let layout = ParamLayout::new(2, 0);
        let mut t = ModelParams::zeros(layout);
        t.amplitudes = vec![1.0, 2.0];
        t.gamma = 5.0;
        t.baseline = vec![0.5, -0.5];
        let d1 = denormalize(&t, c1);
        let d3 = denormalize(&t, c3);
        assert_eq!(d3.gamma, 5.0);
        assert!((d3.amplitudes[1] - 3.0 * d1.amplitudes[1]).abs() < 1e-9 * d3.amplitudes[1]);
        assert_eq!(denormalize_vec(&t.to_vec(), layout, c3), d3.to_vec());
    }
}
