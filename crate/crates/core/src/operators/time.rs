//! Caputo and tempered time-fractional derivatives on `(0, t]`.
//!
//! With `τ` a relative lag the Caputo derivative of order `γ` is
//!
//! ```text
//! (1/Γ(1−γ)) [ γ t^{1−γ} ∫_0^1 τ^{−γ} (f(t) − f(t − tτ))/(tτ) dτ + (f(t) − f(0))/t^γ ]
//! ```
//!
//! and the tempered version folds `e^{−λt}` into the lagged values. The
//! lag integral is estimated with Beta(1−γ,1) draws or a Gauss-Jacobi rule;
//! the importance-weighted forms keep the draws fixed while `γ < γ_H` moves.

use super::stencil::{Grad3, NO_GRAD};
use super::{Coefficient, OperatorError, StencilBuilder};
use crate::quadrature::{radial_rule_time, RadialProvenance, RadialRule};
use crate::sampling::{sample_beta_one, RngStream, StreamRng};
use crate::special::{digamma, ln_abs_gamma};

/// Lower bound on Monte Carlo lag draws, guarding the `1/τ` difference
/// quotient against cancellation.
pub const TIME_LAG_FLOOR: f64 = 1e-6;

/// `Σ c_i (f(t) − e^{−λtτ_i} f(t − tτ_i)) + p (f(t) − e^{−λt} f(0))`
/// together with its derivative in `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeStencil {
    pub t: f64,
    pub lags: Vec<f64>,
    pub lag_weight: Vec<f64>,
    pub d_lag_weight: Vec<f64>,
    pub lag_decay: Vec<f64>,
    pub power: f64,
    pub d_power: f64,
    pub origin_decay: f64,
}

impl TimeStencil {
    fn combine(&self, f: &dyn Fn(f64) -> f64, w: &[f64], p: f64) -> f64 {
        let ft = f(self.t);
        let lagged: f64 = self
            .lags
            .iter()
            .zip(w)
            .zip(&self.lag_decay)
            .map(|((&s, &c), &e)| c * (ft - e * f(s)))
            .sum();
        lagged + p * (ft - self.origin_decay * f(0.0))
    }

    pub fn apply(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        self.combine(f, &self.lag_weight, self.power)
    }

    pub fn apply_dgamma(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        self.combine(f, &self.d_lag_weight, self.d_power)
    }
}

/// Builds the stencil for lags `taus` with weights `weights`, where
/// `Σ weights_i g(taus_i) ≈ ∫_0^1 g(τ) τ^{−γ_H} dτ`.
pub fn time_stencil(
    t: f64,
    gamma: f64,
    gamma_h: f64,
    lambda_t: f64,
    taus: &[f64],
    weights: &[f64],
) -> Result<TimeStencil, OperatorError> {
    if !(t > 0.0) {
        return Err(OperatorError::NonPositiveTime(t));
    }
    check_gamma(gamma, gamma_h)?;
    let norm = (-ln_abs_gamma(1.0 - gamma)).exp();
    let psi = digamma(1.0 - gamma);
    let ln_t = t.ln();
    let power = (-gamma * ln_t).exp() * norm;
    let n = taus.len();
    let mut st = TimeStencil {
        t,
        lags: Vec::with_capacity(n),
        lag_weight: Vec::with_capacity(n),
        d_lag_weight: Vec::with_capacity(n),
        lag_decay: Vec::with_capacity(n),
        power,
        d_power: power * (psi - ln_t),
        origin_decay: (-lambda_t * t).exp(),
    };
    for (&tau, &w) in taus.iter().zip(weights) {
        let c = gamma * power * w * ((gamma_h - gamma) * tau.ln()).exp() / tau;
        st.lags.push(t - t * tau);
        st.lag_weight.push(c);
        st.d_lag_weight.push(c * (1.0 / gamma - ln_t - tau.ln() + psi));
        st.lag_decay.push((-lambda_t * t * tau).exp());
    }
    Ok(st)
}

fn check_gamma(gamma: f64, gamma_h: f64) -> Result<(), OperatorError> {
    if !(gamma_h > 0.0 && gamma_h < 1.0) {
        return Err(OperatorError::GammaOutOfRange { gamma: gamma_h, upper: 1.0 });
    }
    if !(gamma > 0.0 && gamma <= gamma_h) {
        return Err(OperatorError::GammaOutOfRange { gamma, upper: gamma_h });
    }
    Ok(())
}

fn check_time_rule(rule: &RadialRule, gamma: f64) -> Result<(), OperatorError> {
    if rule.provenance != RadialProvenance::JacobiTime {
        return Err(OperatorError::RuleMismatch("expected a Gauss-Jacobi time rule".into()));
    }
    if (rule.params.order - gamma).abs() > 1e-14 {
        return Err(OperatorError::RuleMismatch(format!(
            "rule gamma {} vs requested gamma {gamma}",
            rule.params.order
        )));
    }
    Ok(())
}

fn mc_lags(gamma_h: f64, n: usize, rng: &mut StreamRng) -> Result<(Vec<f64>, Vec<f64>), OperatorError> {
    let taus = sample_beta_one(1.0 - gamma_h, n, rng)?
        .into_iter()
        .map(|tau| tau.max(TIME_LAG_FLOOR))
        .collect();
    Ok((taus, vec![1.0 / ((1.0 - gamma_h) * n as f64); n]))
}

/// Forward time-fractional estimator.
#[derive(Debug, Clone)]
pub enum TimeScheme {
    Mc { gamma: f64, n: usize },
    Quad { rule: RadialRule },
}

impl TimeScheme {
    pub fn mc(gamma: f64, n: usize) -> Result<Self, OperatorError> {
        check_gamma(gamma, gamma)?;
        if n == 0 {
            return Err(OperatorError::InvalidConfig {
                field: "n_time",
                value: "0".into(),
                expected: ">= 1",
            });
        }
        Ok(TimeScheme::Mc { gamma, n })
    }

    pub fn quadrature(gamma: f64, n: usize) -> Result<Self, OperatorError> {
        Ok(TimeScheme::Quad {
            rule: radial_rule_time(n, gamma)?,
        })
    }

    pub fn gamma(&self) -> f64 {
        match self {
            TimeScheme::Mc { gamma, .. } => *gamma,
            TimeScheme::Quad { rule } => rule.params.order,
        }
    }

    fn lags(&self, rng: &mut StreamRng) -> Result<(Vec<f64>, Vec<f64>), OperatorError> {
        match self {
            &TimeScheme::Mc { gamma, n } => mc_lags(gamma, n, rng),
            TimeScheme::Quad { rule } => Ok((rule.nodes.clone(), rule.weights.clone())),
        }
    }

    pub fn stencil(&self, t: f64, lambda_t: f64, rng: &mut StreamRng) -> Result<TimeStencil, OperatorError> {
        let (taus, w) = self.lags(rng)?;
        let g = self.gamma();
        time_stencil(t, g, g, lambda_t, &taus, &w)
    }
}

#[derive(Debug, Clone)]
pub enum InverseTimeBase {
    Mc { n: usize },
    /// Rule built for `γ_H`.
    Quad { rule: RadialRule },
}

/// Importance-weighted estimator at a trainable `γ ≤ γ_H`.
#[derive(Debug, Clone)]
pub struct InverseTime {
    pub gamma: f64,
    pub gamma_h: f64,
    pub base: InverseTimeBase,
    pub track_gamma: bool,
}

impl InverseTime {
    pub fn mc(gamma: f64, gamma_h: f64, n: usize) -> Result<Self, OperatorError> {
        check_gamma(gamma, gamma_h)?;
        Ok(Self {
            gamma,
            gamma_h,
            base: InverseTimeBase::Mc { n },
            track_gamma: false,
        })
    }

    pub fn quadrature(gamma: f64, gamma_h: f64, n: usize) -> Result<Self, OperatorError> {
        check_gamma(gamma, gamma_h)?;
        Ok(Self {
            gamma,
            gamma_h,
            base: InverseTimeBase::Quad {
                rule: radial_rule_time(n, gamma_h)?,
            },
            track_gamma: false,
        })
    }

    pub fn stencil(&self, t: f64, lambda_t: f64, rng: &mut StreamRng) -> Result<TimeStencil, OperatorError> {
        let (taus, w) = match &self.base {
            &InverseTimeBase::Mc { n } => mc_lags(self.gamma_h, n, rng)?,
            InverseTimeBase::Quad { rule } => {
                check_time_rule(rule, self.gamma_h)?;
                (rule.nodes.clone(), rule.weights.clone())
            }
        };
        time_stencil(t, self.gamma, self.gamma_h, lambda_t, &taus, &w)
    }
}

#[derive(Debug, Clone)]
pub enum TimeEstimator {
    Forward(TimeScheme),
    Inverse(InverseTime),
}

impl TimeEstimator {
    pub fn stencil(&self, t: f64, lambda_t: f64, rng: &mut StreamRng) -> Result<TimeStencil, OperatorError> {
        match self {
            TimeEstimator::Forward(s) => s.stencil(t, lambda_t, rng),
            TimeEstimator::Inverse(s) => s.stencil(t, lambda_t, rng),
        }
    }

    fn tracks_gamma(&self) -> bool {
        matches!(self, TimeEstimator::Inverse(s) if s.track_gamma)
    }

    /// Adds `scale · ∂^{γ,λ_t}_t u` at `row`, whose last column is time.
    pub fn add_point(
        &self,
        b: &mut StencilBuilder,
        owner: usize,
        row: &[f64],
        lambda_t: f64,
        scale: f64,
        rng: &mut StreamRng,
    ) -> Result<(), OperatorError> {
        let d = b.spatial_dim();
        let st = self.stencil(row[d], lambda_t, rng)?;
        let track = self.tracks_gamma();
        let grad = |dc: f64| -> Grad3 {
            let mut g = NO_GRAD;
            if track {
                g[Coefficient::Gamma as usize] = scale * dc;
            }
            g
        };
        let mut shifted = row.to_vec();
        for (((&s, &c), &dc), &e) in st.lags.iter().zip(&st.lag_weight).zip(&st.d_lag_weight).zip(&st.lag_decay) {
            b.center(owner, row, scale * c, grad(dc));
            shifted[d] = s;
            b.push(owner, &shifted, -scale * c * e, grad(-dc * e));
        }
        b.center(owner, row, scale * st.power, grad(st.d_power));
        shifted[d] = 0.0;
        b.push(owner, &shifted, -scale * st.power * st.origin_decay, grad(-st.d_power * st.origin_decay));
        Ok(())
    }
}

/// Monte Carlo Caputo derivative of `f` at `t`.
pub fn mc_time_frac(f: &dyn Fn(f64) -> f64, t: f64, gamma: f64, n: usize, rng: RngStream) -> Result<f64, OperatorError> {
    let st = TimeScheme::mc(gamma, n)?.stencil(t, 0.0, &mut rng.rng())?;
    Ok(st.apply(f))
}

/// Gauss-Jacobi Caputo derivative of `f` at `t`.
pub fn quad_time_frac(f: &dyn Fn(f64) -> f64, t: f64, gamma: f64, rule: &RadialRule) -> Result<f64, OperatorError> {
    check_time_rule(rule, gamma)?;
    let st = time_stencil(t, gamma, gamma, 0.0, &rule.nodes, &rule.weights)?;
    Ok(st.apply(f))
}

/// `e^{−λt} · inner(s ↦ e^{λs} f(s))` evaluated at `t`.
pub fn tempered_time_frac(
    f: &dyn Fn(f64) -> f64,
    t: f64,
    lambda_t: f64,
    inner: &TimeScheme,
    rng: RngStream,
) -> Result<f64, OperatorError> {
    if !(lambda_t >= 0.0 && lambda_t.is_finite()) {
        return Err(OperatorError::InvalidConfig {
            field: "lambda_t",
            value: lambda_t.to_string(),
            expected: "[0, inf)",
        });
    }
    let st = inner.stencil(t, 0.0, &mut rng.rng())?;
    if lambda_t == 0.0 {
        return Ok(st.apply(f));
    }
    let g = |s: f64| (lambda_t * s).exp() * f(s);
    Ok((-lambda_t * t).exp() * st.apply(&g))
}

/// Importance-weighted Monte Carlo Caputo derivative; the draws come from
/// Beta(1−γ_H, 1) so they do not depend on `γ`.
pub fn inverse_mc_time_frac(
    f: &dyn Fn(f64) -> f64,
    t: f64,
    gamma: f64,
    gamma_h: f64,
    n: usize,
    rng: RngStream,
) -> Result<f64, OperatorError> {
    let st = InverseTime::mc(gamma, gamma_h, n)?.stencil(t, 0.0, &mut rng.rng())?;
    Ok(st.apply(f))
}

/// Importance-weighted quadrature on a rule built for `γ_H`.
pub fn inverse_quad_time_frac(
    f: &dyn Fn(f64) -> f64,
    t: f64,
    gamma: f64,
    gamma_h: f64,
    rule: &RadialRule,
) -> Result<f64, OperatorError> {
    check_gamma(gamma, gamma_h)?;
    check_time_rule(rule, gamma_h)?;
    let st = time_stencil(t, gamma, gamma_h, 0.0, &rule.nodes, &rule.weights)?;
    Ok(st.apply(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma as gamma_fn;
    use approx::assert_relative_eq;

    #[test]
    fn quadrature_monomials() {
        let rule = radial_rule_time(4, 0.5).unwrap();
        let v = quad_time_frac(&|s| s, 1.0, 0.5, &rule).unwrap();
        assert_relative_eq!(v, 1.0 / gamma_fn(1.5), max_relative = 1e-12);
        let rule = radial_rule_time(16, 0.3).unwrap();
        let v = quad_time_frac(&|s| s.powi(3), 0.7, 0.3, &rule).unwrap();
        let exact = 6.0 / gamma_fn(3.7) * 0.7f64.powf(2.7);
        assert_relative_eq!(v, exact, max_relative = 1e-10);
        assert_eq!(quad_time_frac(&|_| 3.0, 0.4, 0.3, &rule).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let rule = radial_rule_time(4, 0.5).unwrap();
        assert!(matches!(quad_time_frac(&|s| s, 0.0, 0.5, &rule), Err(OperatorError::NonPositiveTime(_))));
        assert!(matches!(quad_time_frac(&|s| s, 1.0, 0.4, &rule), Err(OperatorError::RuleMismatch(_))));
        assert!(matches!(
            inverse_mc_time_frac(&|s| s, 1.0, 0.8, 0.7, 4, RngStream::new(0)),
            Err(OperatorError::GammaOutOfRange { .. })
        ));
    }

    #[test]
    fn tempered_reductions() {
        let scheme = TimeScheme::quadrature(0.5, 16).unwrap();
        let f = |s: f64| s * s + 1.0;
        let plain = quad_time_frac(&f, 0.8, 0.5, match &scheme {
            TimeScheme::Quad { rule } => rule,
            _ => unreachable!(),
        })
        .unwrap();
        assert_eq!(tempered_time_frac(&f, 0.8, 0.0, &scheme, RngStream::new(1)).unwrap(), plain);
        let decay = tempered_time_frac(&|s: f64| (-1.3 * s).exp(), 0.8, 1.3, &scheme, RngStream::new(1)).unwrap();
        assert!(decay.abs() < 1e-14);
        let v = tempered_time_frac(&|s: f64| (-s).exp() * s, 1.0, 1.0, &scheme, RngStream::new(1)).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp() / gamma_fn(1.5), max_relative = 1e-12);
    }

    #[test]
    fn folded_tempering_matches_composition() {
        let scheme = TimeScheme::quadrature(0.35, 12).unwrap();
        let f = |s: f64| (2.0 * s).sin() + s;
        let composed = tempered_time_frac(&f, 0.9, 0.7, &scheme, RngStream::new(0)).unwrap();
        let folded = scheme.stencil(0.9, 0.7, &mut RngStream::new(0).rng()).unwrap().apply(&f);
        assert_relative_eq!(composed, folded, max_relative = 1e-12);
    }

    #[test]
    fn gamma_derivative_matches_finite_difference() {
        let f = |s: f64| s.powf(1.7) + 0.3 * s;
        let (t, gh) = (0.8, 0.75);
        let st = |g: f64| {
            let inv = InverseTime::quadrature(g, gh, 24).unwrap();
            inv.stencil(t, 0.4, &mut RngStream::new(0).rng()).unwrap()
        };
        let g = 0.45;
        let h = 1e-6;
        let fd = (st(g + h).apply(&f) - st(g - h).apply(&f)) / (2.0 * h);
        assert_relative_eq!(st(g).apply_dgamma(&f), fd, max_relative = 1e-6);
    }

    #[test]
    fn inverse_reduces_to_forward() {
        let f = |s: f64| s * s;
        let fwd = mc_time_frac(&f, 0.6, 0.4, 32, RngStream::new(9)).unwrap();
        let inv = inverse_mc_time_frac(&f, 0.6, 0.4, 0.4, 32, RngStream::new(9)).unwrap();
        assert_eq!(fwd, inv);
    }
}
