//! The operator `L u = ∂^{γ,λ_t}_t u + c(−Δ_λ)^{α/2} u + v·∇_x u` as a
//! stencil plus an advection term.

use ndarray::{s, Array1, Array2, ArrayView2};

use super::{check_width, Coefficient, Field, InverseSpatial, OperatorConfig, OperatorError, SpatialScheme, Stencil, StencilBuilder, TimeEstimator};
use crate::sampling::{RngStream, SobolSphere};

/// Spatial estimator of a residual: fixed coefficients or the
/// resampling-free tempered form.
#[derive(Debug, Clone)]
pub enum SpatialEstimator {
    Forward(SpatialScheme),
    Inverse(InverseSpatial),
}

/// Everything needed to evaluate `L u` at a batch of points.
#[derive(Debug, Clone)]
pub struct ResidualEstimators {
    pub spatial: SpatialEstimator,
    pub time: Option<TimeEstimator>,
}

impl ResidualEstimators {
    pub fn tracked(&self) -> Vec<Coefficient> {
        let mut out = Vec::new();
        if let SpatialEstimator::Inverse(s) = &self.spatial {
            if s.track_alpha {
                out.push(Coefficient::Alpha);
            }
            if s.track_lambda {
                out.push(Coefficient::Lambda);
            }
        }
        if let Some(TimeEstimator::Inverse(t)) = &self.time {
            if t.track_gamma {
                out.push(Coefficient::Gamma);
            }
        }
        out
    }
}

/// Stencil of the non-local part of `L u` (everything except advection).
pub fn residual_stencil(
    points: ArrayView2<'_, f64>,
    spatial_dim: usize,
    support: super::Support,
    cfg: &OperatorConfig,
    est: &ResidualEstimators,
    rng: RngStream,
    mut sobol: Option<&mut SobolSphere>,
) -> Result<Stencil, OperatorError> {
    let width = points.ncols();
    let has_time = est.time.is_some();
    if width != spatial_dim + usize::from(has_time) {
        return Err(OperatorError::DimensionMismatch {
            expected: spatial_dim + usize::from(has_time),
            got: width,
        });
    }
    let mut b = StencilBuilder::new(points.nrows(), width, spatial_dim, support);
    for c in est.tracked() {
        b = b.track(c);
    }
    for (i, row) in points.rows().into_iter().enumerate() {
        let center = row.to_vec();
        let mut r = rng.substream(i as u64).rng();
        match &est.spatial {
            SpatialEstimator::Forward(s) => s.add_point(&mut b, i, &center, cfg.c, &mut r, sobol.as_deref_mut())?,
            SpatialEstimator::Inverse(s) => s.add_point(&mut b, i, &center, cfg.c, &mut r, sobol.as_deref_mut())?,
        }
        if let Some(t) = &est.time {
            t.add_point(&mut b, i, &center, cfg.lambda_t, 1.0, &mut r)?;
        }
    }
    Ok(b.build())
}

/// Input-space directions `(v, 0)` for the advection term, or `None` when
/// the velocity is zero.
pub fn advection_dirs(points: ArrayView2<'_, f64>, v: &[f64]) -> Option<Array2<f64>> {
    if v.iter().all(|&x| x == 0.0) {
        return None;
    }
    let mut dirs = Array2::zeros(points.dim());
    for mut row in dirs.rows_mut() {
        row.slice_mut(s![..v.len()]).assign(&ndarray::ArrayView1::from(v));
    }
    Some(dirs)
}

/// `L u(points) − forcing`.
pub fn pde_residual(
    u: &dyn Field,
    points: ArrayView2<'_, f64>,
    cfg: &OperatorConfig,
    forcing: &Array1<f64>,
    est: &ResidualEstimators,
    rng: RngStream,
) -> Result<Array1<f64>, OperatorError> {
    check_width(u, points)?;
    if forcing.len() != points.nrows() {
        return Err(OperatorError::DimensionMismatch {
            expected: points.nrows(),
            got: forcing.len(),
        });
    }
    if !cfg.v.is_empty() && cfg.v.len() != u.spatial_dim() {
        return Err(OperatorError::DimensionMismatch {
            expected: u.spatial_dim(),
            got: cfg.v.len(),
        });
    }
    if est.time.is_some() != u.has_time() {
        return Err(OperatorError::ConfigMismatch("time estimator present iff the field has time".into()));
    }
    let stencil = residual_stencil(points, u.spatial_dim(), u.support(), cfg, est, rng, None)?;
    let mut r = stencil.apply_field(u) - forcing;
    if let Some(dirs) = advection_dirs(points, &cfg.v) {
        let adv = u
            .directional_derivative(points, dirs.view())
            .ok_or_else(|| OperatorError::ConfigMismatch("advection needs a field gradient".into()))?;
        r += &adv;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{FnField, Support, TimeScheme};
    use crate::quadrature::radial_rule_ball;
    use ndarray::array;

    #[test]
    fn zero_field_gives_negative_forcing() {
        let u = FnField::spatial(2, Support::UnitBall, |_| 0.0);
        let cfg = OperatorConfig::default();
        let est = ResidualEstimators {
            spatial: SpatialEstimator::Forward(SpatialScheme::QuadBall {
                rule: radial_rule_ball(16, 1.5, 2.0).unwrap(),
            }),
            time: None,
        };
        let f = array![1.0, -2.0];
        let r = pde_residual(&u, array![[0.1, 0.2], [0.0, -0.5]].view(), &cfg, &f, &est, RngStream::new(0)).unwrap();
        assert_eq!(r, -f);
    }

    #[test]
    fn advection_requires_gradient_and_matching_widths() {
        let u = FnField {
            d: 1,
            time: true,
            support: Support::UnitBallPositiveTime,
            f: |x: ndarray::ArrayView1<'_, f64>| x[0] * x[1],
        };
        let cfg = OperatorConfig {
            gamma: Some(0.5),
            v: vec![1.0],
            ..Default::default()
        };
        let est = ResidualEstimators {
            spatial: SpatialEstimator::Forward(SpatialScheme::mc(&cfg).unwrap()),
            time: Some(TimeEstimator::Forward(TimeScheme::quadrature(0.5, 8).unwrap())),
        };
        let f = array![0.0];
        let err = pde_residual(&u, array![[0.1, 0.5]].view(), &cfg, &f, &est, RngStream::new(0));
        assert!(matches!(err, Err(OperatorError::ConfigMismatch(_))));
        let est_no_time = ResidualEstimators { time: None, ..est };
        let err = pde_residual(&u, array![[0.1, 0.5]].view(), &cfg, &f, &est_no_time, RngStream::new(0));
        assert!(matches!(err, Err(OperatorError::ConfigMismatch(_))));
    }
}
