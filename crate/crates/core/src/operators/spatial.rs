//! Spatial estimators: fractional Laplacian (two-part Beta split and
//! Gauss-Jacobi ball quadrature) and tempered fractional Laplacian (Gamma
//! sampling and generalized Gauss-Laguerre quadrature), plus the
//! resampling-free forms used when `α` or `λ` is being identified.
//!
//! The radial-angular decomposition turns every estimator into a weighted
//! sum of symmetric second differences `2u(x) − u(x − rξ) − u(x + rξ)` with
//! one fresh direction `ξ` per radial node.

use ndarray::{Array1, ArrayView2};

use super::stencil::{Grad3, NO_GRAD};
use super::{check_width, Coefficient, Field, OperatorConfig, OperatorError, StencilBuilder, DOMAIN_DIAMETER};
use crate::quadrature::{radial_rule_ball, radial_rule_halfline, RadialProvenance, RadialRule};
use crate::sampling::{sample_beta_one, sample_gamma, RngStream, SobolSphere, StreamRng};
use crate::special::{frac_laplacian_sphere_constant, inv_abs_gamma_neg, inv_abs_gamma_neg_dalpha, ln_abs_gamma};

/// Points per chunk when an estimator is applied to a large batch.
const CHUNK: usize = 256;

/// A spatial estimator with all of its fixed ingredients resolved.
#[derive(Debug, Clone)]
pub enum SpatialScheme {
    /// Beta(2−α,1) radii inside `B_{r0}`, Beta(α,1) reciprocal radii outside.
    McSplit { alpha: f64, r0: f64, epsilon: f64, n: usize },
    /// Gauss-Jacobi radii on `(0, r0)` with the outer part in closed form.
    QuadBall { rule: RadialRule },
    /// Gamma(2−α, λ) radii.
    McTempered { alpha: f64, lambda: f64, epsilon: f64, n: usize },
    /// Generalized Gauss-Laguerre radii.
    QuadTempered { rule: RadialRule },
}

impl SpatialScheme {
    pub fn mc(cfg: &OperatorConfig) -> Result<Self, OperatorError> {
        cfg.validate()?;
        Ok(if cfg.is_tempered() {
            SpatialScheme::McTempered {
                alpha: cfg.alpha,
                lambda: cfg.lambda_x,
                epsilon: cfg.epsilon,
                n: cfg.n_radial,
            }
        } else {
            SpatialScheme::McSplit {
                alpha: cfg.alpha,
                r0: cfg.mc_r0(),
                epsilon: cfg.epsilon,
                n: cfg.n_radial,
            }
        })
    }

    pub fn quadrature(cfg: &OperatorConfig) -> Result<Self, OperatorError> {
        cfg.validate()?;
        Ok(if cfg.is_tempered() {
            SpatialScheme::QuadTempered {
                rule: radial_rule_halfline(cfg.n_radial, cfg.alpha, cfg.lambda_x)?,
            }
        } else {
            let r0 = cfg.quad_r0();
            SpatialScheme::QuadBall {
                rule: radial_rule_ball(cfg.n_radial, cfg.alpha, r0)?,
            }
        })
    }

    pub fn is_tempered(&self) -> bool {
        matches!(self, SpatialScheme::McTempered { .. } | SpatialScheme::QuadTempered { .. })
    }

    fn check_against(&self, cfg: &OperatorConfig) -> Result<(), OperatorError> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-14 * a.abs().max(b.abs()).max(1.0);
        match self {
            SpatialScheme::QuadBall { rule } => {
                if rule.provenance != RadialProvenance::JacobiBall {
                    return Err(OperatorError::RuleMismatch("expected a Gauss-Jacobi ball rule".into()));
                }
                if !close(rule.params.order, cfg.alpha) {
                    return Err(OperatorError::RuleMismatch(format!(
                        "rule alpha {} vs config alpha {}",
                        rule.params.order, cfg.alpha
                    )));
                }
                let r0 = rule.params.r0.unwrap_or(DOMAIN_DIAMETER);
                if !close(r0, cfg.quad_r0()) {
                    return Err(OperatorError::RuleMismatch(format!("rule r0 {r0} vs config r0 {}", cfg.quad_r0())));
                }
                if r0 < DOMAIN_DIAMETER {
                    return Err(OperatorError::ConfigMismatch(format!(
                        "closed-form outer term needs r0 >= {DOMAIN_DIAMETER}, got {r0}"
                    )));
                }
                if cfg.is_tempered() {
                    return Err(OperatorError::ConfigMismatch("ball quadrature needs lambda_x = 0".into()));
                }
            }
            SpatialScheme::QuadTempered { rule } => {
                if !cfg.is_tempered() {
                    return Err(OperatorError::LambdaNonPositive(cfg.lambda_x));
                }
                if rule.provenance != RadialProvenance::LaguerreHalfline {
                    return Err(OperatorError::RuleMismatch("expected a generalized Laguerre rule".into()));
                }
                let lambda = rule.params.lambda.unwrap_or(f64::NAN);
                if !close(rule.params.order, cfg.alpha) || !close(lambda, cfg.lambda_x) {
                    return Err(OperatorError::RuleMismatch(format!(
                        "rule (alpha, lambda) = ({}, {lambda}) vs config ({}, {})",
                        rule.params.order, cfg.alpha, cfg.lambda_x
                    )));
                }
            }
            SpatialScheme::McSplit { .. } => {
                if cfg.is_tempered() {
                    return Err(OperatorError::ConfigMismatch(
                        "two-part Beta estimator needs lambda_x = 0".into(),
                    ));
                }
            }
            SpatialScheme::McTempered { .. } => {
                if !cfg.is_tempered() {
                    return Err(OperatorError::LambdaNonPositive(cfg.lambda_x));
                }
            }
        }
        Ok(())
    }

    /// Adds `scale · (−Δ_λ)^{α/2} u(center)` estimated at one point.
    pub fn add_point(
        &self,
        b: &mut StencilBuilder,
        owner: usize,
        center: &[f64],
        scale: f64,
        rng: &mut StreamRng,
        sobol: Option<&mut SobolSphere>,
    ) -> Result<(), OperatorError> {
        let d = b.spatial_dim();
        match self {
            &SpatialScheme::McSplit { alpha, r0, epsilon, n } => {
                let cs = frac_laplacian_sphere_constant(d, alpha);
                let p_in = scale * cs * r0.powf(2.0 - alpha) / (2.0 * (2.0 - alpha)) / n as f64;
                let p_out = scale * cs * r0.powf(-alpha) / (2.0 * alpha) / n as f64;
                let inner = sample_beta_one(2.0 - alpha, n, rng)?;
                let outer = sample_beta_one(alpha, n, rng)?;
                let dirs = draw_dirs(d, 2 * n, rng, sobol);
                let floor = epsilon / r0;
                for (i, &beta) in inner.iter().enumerate() {
                    let r = r0 * beta.max(floor);
                    b.second_difference(owner, center, dirs.row(i).as_slice().unwrap(), r, p_in / (r * r), NO_GRAD, None);
                }
                for (i, &beta) in outer.iter().enumerate() {
                    let r = r0 / beta;
                    b.second_difference(owner, center, dirs.row(n + i).as_slice().unwrap(), r, p_out, NO_GRAD, None);
                }
            }
            SpatialScheme::QuadBall { rule } => {
                let alpha = rule.params.order;
                let r0 = rule.params.r0.unwrap_or(DOMAIN_DIAMETER);
                let cs = scale * frac_laplacian_sphere_constant(d, alpha);
                let dirs = draw_dirs(d, rule.len(), rng, sobol);
                for (i, (&r, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                    b.second_difference(owner, center, dirs.row(i).as_slice().unwrap(), r, 0.5 * cs * w / (r * r), NO_GRAD, None);
                }
                b.center(owner, center, cs * r0.powf(-alpha) / alpha, NO_GRAD);
            }
            &SpatialScheme::McTempered { alpha, lambda, epsilon, n } => {
                let pref = scale * 0.5 * inv_abs_gamma_neg(alpha)
                    * (ln_abs_gamma(2.0 - alpha) - (2.0 - alpha) * lambda.ln()).exp()
                    / n as f64;
                let radii = sample_gamma(2.0 - alpha, lambda, n, rng)?;
                let dirs = draw_dirs(d, n, rng, sobol);
                for (i, &g) in radii.iter().enumerate() {
                    let r = g.max(epsilon);
                    b.second_difference(owner, center, dirs.row(i).as_slice().unwrap(), r, pref / (r * r), NO_GRAD, None);
                }
            }
            SpatialScheme::QuadTempered { rule } => {
                let alpha = rule.params.order;
                let pref = scale * 0.5 * inv_abs_gamma_neg(alpha);
                let dirs = draw_dirs(d, rule.len(), rng, sobol);
                for (i, (&r, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                    b.second_difference(owner, center, dirs.row(i).as_slice().unwrap(), r, pref * w / (r * r), NO_GRAD, None);
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn draw_dirs(
    d: usize,
    count: usize,
    rng: &mut StreamRng,
    sobol: Option<&mut SobolSphere>,
) -> ndarray::Array2<f64> {
    match sobol {
        Some(s) => s.next_block(count),
        None => crate::sampling::sample_sphere(d, count, rng),
    }
}

/// Radial ingredients of the resampling-free tempered estimator.
#[derive(Debug, Clone)]
pub enum InverseBase {
    /// Gamma(2−α_H, 1) draws.
    Mc { n: usize, epsilon: f64 },
    /// Generalized Laguerre rule for `r^{1−α_H} e^{−r}`.
    Quad { rule: RadialRule },
}

/// Tempered fractional Laplacian in the form
/// `½ λ^α |S| Γ(2−α_H) E[(2u(x) − u(x − ξr/λ) − u(x + ξr/λ)) r^{α_H−α} / r²]`
/// with `r ~ Gamma(2−α_H, 1)`, which stays valid while `α < α_H` and `λ`
/// change without redrawing `r`.
#[derive(Debug, Clone)]
pub struct InverseSpatial {
    pub alpha: f64,
    pub alpha_h: f64,
    pub lambda: f64,
    pub base: InverseBase,
    pub track_alpha: bool,
    pub track_lambda: bool,
}

impl InverseSpatial {
    pub fn mc(alpha: f64, alpha_h: f64, lambda: f64, n: usize, epsilon: f64) -> Result<Self, OperatorError> {
        let s = Self {
            alpha,
            alpha_h,
            lambda,
            base: InverseBase::Mc { n, epsilon },
            track_alpha: false,
            track_lambda: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn quadrature(alpha: f64, alpha_h: f64, lambda: f64, n: usize) -> Result<Self, OperatorError> {
        let s = Self {
            alpha,
            alpha_h,
            lambda,
            base: InverseBase::Quad {
                rule: radial_rule_halfline(n, alpha_h, 1.0)?,
            },
            track_alpha: false,
            track_lambda: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), OperatorError> {
        if !(self.alpha_h > 0.0 && self.alpha_h < 2.0) {
            return Err(OperatorError::AlphaOutOfRange {
                alpha: self.alpha_h,
                upper: 2.0,
            });
        }
        if !(self.alpha > 0.0 && self.alpha <= self.alpha_h) {
            return Err(OperatorError::AlphaOutOfRange {
                alpha: self.alpha,
                upper: self.alpha_h,
            });
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(OperatorError::LambdaNonPositive(self.lambda));
        }
        Ok(())
    }

    pub fn add_point(
        &self,
        b: &mut StencilBuilder,
        owner: usize,
        center: &[f64],
        scale: f64,
        rng: &mut StreamRng,
        sobol: Option<&mut SobolSphere>,
    ) -> Result<(), OperatorError> {
        let d = b.spatial_dim();
        let (alpha, alpha_h, lambda) = (self.alpha, self.alpha_h, self.lambda);
        let ct = inv_abs_gamma_neg(alpha);
        let dct = inv_abs_gamma_neg_dalpha(alpha);
        let lam_pow = lambda.powf(alpha);
        // the MC count divides last so α = α_H, λ = 1 repeats the forward arithmetic
        let (radii, base_w, count): (Vec<f64>, Vec<f64>, f64) = match &self.base {
            &InverseBase::Mc { n, epsilon } => {
                let w = ln_abs_gamma(2.0 - alpha_h).exp();
                let r = sample_gamma(2.0 - alpha_h, 1.0, n, rng)?;
                (r.into_iter().map(|g| g.max(epsilon)).collect(), vec![w; n], n as f64)
            }
            InverseBase::Quad { rule } => (rule.nodes.clone(), rule.weights.clone(), 1.0),
        };
        let dirs = draw_dirs(d, radii.len(), rng, sobol);
        let track_lambda = self.track_lambda && b.tracks(Coefficient::Lambda);
        for (i, (&r, &w0)) in radii.iter().zip(&base_w).enumerate() {
            // common = ½ λ^α w0 r^{α_H−α} / r²
            let decay = (alpha_h - alpha).mul_add(r.ln(), 0.0).exp();
            let common = scale * 0.5 * lam_pow * w0 * decay / count / (r * r);
            let w = scale * 0.5 * ct * lam_pow * w0 * decay / count / (r * r);
            let mut grad: Grad3 = NO_GRAD;
            if self.track_alpha {
                grad[Coefficient::Alpha as usize] = common * (dct + ct * (lambda.ln() - r.ln()));
            }
            if self.track_lambda {
                grad[Coefficient::Lambda as usize] = w * alpha / lambda;
            }
            let shift = r / lambda;
            let dshift = track_lambda.then_some(-r / (lambda * lambda));
            b.second_difference(owner, center, dirs.row(i).as_slice().unwrap(), shift, w, grad, dshift);
        }
        Ok(())
    }
}

/// Applies `add` point by point in chunks and sums the stencil on `u`.
fn estimate<F>(u: &dyn Field, x: ArrayView2<'_, f64>, rng: RngStream, mut sobol: Option<SobolSphere>, add: F) -> Result<Array1<f64>, OperatorError>
where
    F: Fn(&mut StencilBuilder, usize, &[f64], &mut StreamRng, Option<&mut SobolSphere>) -> Result<(), OperatorError>,
{
    check_width(u, x)?;
    let n = x.nrows();
    let mut out = Array1::zeros(n);
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let mut b = StencilBuilder::new(end - start, u.input_dim(), u.spatial_dim(), u.support());
        for i in start..end {
            let center = x.row(i).to_vec();
            let mut point_rng = rng.substream(i as u64).rng();
            add(&mut b, i - start, &center, &mut point_rng, sobol.as_mut())?;
        }
        let part = b.build().apply_field(u);
        out.slice_mut(ndarray::s![start..end]).assign(&part);
        start = end;
    }
    Ok(out)
}

/// Two-part Monte Carlo estimate of `(−Δ)^{α/2} u` at each row of `x`.
pub fn mc_frac_laplacian(u: &dyn Field, x: ArrayView2<'_, f64>, cfg: &OperatorConfig, rng: RngStream) -> Result<Array1<f64>, OperatorError> {
    if cfg.is_tempered() {
        return Err(OperatorError::ConfigMismatch("two-part Beta estimator needs lambda_x = 0".into()));
    }
    let scheme = SpatialScheme::mc(cfg)?;
    estimate(u, x, rng, None, |b, o, c, r, s| scheme.add_point(b, o, c, 1.0, r, s))
}

/// Gauss-Jacobi radial quadrature with Monte Carlo directions.
pub fn quad_frac_laplacian(
    u: &dyn Field,
    x: ArrayView2<'_, f64>,
    cfg: &OperatorConfig,
    rule: &RadialRule,
    rng: RngStream,
) -> Result<Array1<f64>, OperatorError> {
    let scheme = SpatialScheme::QuadBall { rule: rule.clone() };
    scheme.check_against(cfg)?;
    estimate(u, x, rng, None, |b, o, c, r, s| scheme.add_point(b, o, c, 1.0, r, s))
}

/// Gauss-Jacobi radial quadrature with Sobol directions.
pub fn qmc_frac_laplacian(
    u: &dyn Field,
    x: ArrayView2<'_, f64>,
    cfg: &OperatorConfig,
    rule: &RadialRule,
    skip: usize,
) -> Result<Array1<f64>, OperatorError> {
    let scheme = SpatialScheme::QuadBall { rule: rule.clone() };
    scheme.check_against(cfg)?;
    let sobol = SobolSphere::new(u.spatial_dim(), skip)?;
    estimate(u, x, RngStream::new(0), Some(sobol), |b, o, c, r, s| scheme.add_point(b, o, c, 1.0, r, s))
}

/// Gamma-sampled Monte Carlo estimate of `(−Δ_λ)^{α/2} u`.
pub fn mc_tempered_frac_laplacian(
    u: &dyn Field,
    x: ArrayView2<'_, f64>,
    cfg: &OperatorConfig,
    rng: RngStream,
) -> Result<Array1<f64>, OperatorError> {
    if !cfg.is_tempered() {
        return Err(OperatorError::LambdaNonPositive(cfg.lambda_x));
    }
    let scheme = SpatialScheme::mc(cfg)?;
    estimate(u, x, rng, None, |b, o, c, r, s| scheme.add_point(b, o, c, 1.0, r, s))
}

/// Generalized Gauss-Laguerre radial quadrature with Monte Carlo directions.
pub fn quad_tempered_frac_laplacian(
    u: &dyn Field,
    x: ArrayView2<'_, f64>,
    cfg: &OperatorConfig,
    rule: &RadialRule,
    rng: RngStream,
) -> Result<Array1<f64>, OperatorError> {
    let scheme = SpatialScheme::QuadTempered { rule: rule.clone() };
    scheme.check_against(cfg)?;
    estimate(u, x, rng, None, |b, o, c, r, s| scheme.add_point(b, o, c, 1.0, r, s))
}

/// Resampling-free Monte Carlo tempered estimator at trainable `(α, λ)`.
#[allow(clippy::too_many_arguments)]
pub fn inverse_mc_tempered_laplacian(
    u: &dyn Field,
    x: ArrayView2<'_, f64>,
    alpha: f64,
    alpha_h: f64,
    lambda: f64,
    n: usize,
    epsilon: f64,
    rng: RngStream,
) -> Result<Array1<f64>, OperatorError> {
    let est = InverseSpatial::mc(alpha, alpha_h, lambda, n, epsilon)?;
    inverse_tempered_laplacian(u, x, &est, rng)
}

pub fn inverse_tempered_laplacian(
    u: &dyn Field,
    x: ArrayView2<'_, f64>,
    est: &InverseSpatial,
    rng: RngStream,
) -> Result<Array1<f64>, OperatorError> {
    est.validate()?;
    estimate(u, x, rng, None, |b, o, c, r, s| est.add_point(b, o, c, 1.0, r, s))
}
