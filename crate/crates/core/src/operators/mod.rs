//! Estimators for the fractional and tempered fractional operators.
//!
//! Every estimator is a random *linear functional* of the field: for fixed
//! draws it is `Σ_j a_j u(p_j)` over a set of evaluation inputs `p_j`. The
//! estimators therefore build a [`Stencil`] (inputs plus coefficients) and
//! apply it with one batched field evaluation. Training reuses the same
//! stencils to back-propagate through the network.

mod residual;
mod spatial;
mod stencil;
mod time;

pub use residual::{advection_dirs, pde_residual, residual_stencil, ResidualEstimators, SpatialEstimator};
pub use spatial::{
    inverse_mc_tempered_laplacian, inverse_tempered_laplacian, mc_frac_laplacian, mc_tempered_frac_laplacian,
    qmc_frac_laplacian, quad_frac_laplacian, quad_tempered_frac_laplacian, InverseBase, InverseSpatial, SpatialScheme,
};
pub use stencil::{Coefficient, Stencil, StencilBuilder, Support};
pub use time::{
    inverse_mc_time_frac, inverse_quad_time_frac, mc_time_frac, quad_time_frac, tempered_time_frac, time_stencil,
    InverseTime, InverseTimeBase, TimeEstimator, TimeScheme, TimeStencil, TIME_LAG_FLOOR,
};

use ndarray::{Array1, ArrayView1, ArrayView2};
use thiserror::Error;

use crate::quadrature::QuadratureError;
use crate::sampling::SamplingError;

/// Diameter of the unit ball, the support of every field in this crate.
pub const DOMAIN_DIAMETER: f64 = 2.0;
/// Ball-split radius used by the Monte Carlo split estimator unless set.
pub const MC_DEFAULT_R0: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("invalid operator config: {field} = {value} (expected {expected})")]
    InvalidConfig {
        field: &'static str,
        value: String,
        expected: &'static str,
    },
    #[error("estimator does not match config: {0}")]
    ConfigMismatch(String),
    #[error("quadrature rule does not match config: {0}")]
    RuleMismatch(String),
    #[error("tempering factor must be positive, got {0}")]
    LambdaNonPositive(f64),
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("gamma = {gamma} outside (0, {upper})")]
    GammaOutOfRange { gamma: f64, upper: f64 },
    #[error("alpha = {alpha} outside (0, {upper})")]
    AlphaOutOfRange { alpha: f64, upper: f64 },
    #[error("input has {got} columns, field expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Coefficients of `∂^{γ,λ_t}_t u + c (-Δ_{λ_x})^{α/2} u + v·∇u`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorConfig {
    pub alpha: f64,
    pub lambda_x: f64,
    pub gamma: Option<f64>,
    pub lambda_t: f64,
    pub c: f64,
    /// Flow velocity; empty means zero.
    pub v: Vec<f64>,
    /// Ball-split radius. `None` resolves to [`MC_DEFAULT_R0`] for the Monte
    /// Carlo split and to [`DOMAIN_DIAMETER`] for the quadrature variant.
    pub r0: Option<f64>,
    pub epsilon: f64,
    pub n_radial: usize,
    /// Node/sample count for the time-fractional term; `None` uses `n_radial`.
    pub n_time: Option<usize>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            lambda_x: 0.0,
            gamma: None,
            lambda_t: 0.0,
            c: 1.0,
            v: Vec::new(),
            r0: None,
            epsilon: 1e-6,
            n_radial: 64,
            n_time: None,
        }
    }
}

fn invalid(field: &'static str, value: impl ToString, expected: &'static str) -> OperatorError {
    OperatorError::InvalidConfig {
        field,
        value: value.to_string(),
        expected,
    }
}

impl OperatorConfig {
    pub fn validate(&self) -> Result<(), OperatorError> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(invalid("alpha", self.alpha, "(0, 2)"));
        }
        if !(self.lambda_x >= 0.0 && self.lambda_x.is_finite()) {
            return Err(invalid("lambda_x", self.lambda_x, "[0, inf)"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(invalid("gamma", g, "(0, 1)"));
            }
        }
        if !(self.lambda_t >= 0.0 && self.lambda_t.is_finite()) {
            return Err(invalid("lambda_t", self.lambda_t, "[0, inf)"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("c", self.c, "(0, inf)"));
        }
        if self.v.iter().any(|x| !x.is_finite()) {
            return Err(invalid("v", format!("{:?}", self.v), "finite components"));
        }
        if let Some(r0) = self.r0 {
            if !(r0 > 0.0 && r0.is_finite()) {
                return Err(invalid("r0", r0, "(0, inf)"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < self.mc_r0()) {
            return Err(invalid("epsilon", self.epsilon, "(0, r0)"));
        }
        if self.n_radial == 0 {
            return Err(invalid("n_radial", 0, ">= 1"));
        }
        if self.n_time == Some(0) {
            return Err(invalid("n_time", 0, ">= 1"));
        }
        Ok(())
    }

    pub fn mc_r0(&self) -> f64 {
        self.r0.unwrap_or(MC_DEFAULT_R0)
    }

    pub fn quad_r0(&self) -> f64 {
        self.r0.unwrap_or(DOMAIN_DIAMETER)
    }

    pub fn time_nodes(&self) -> usize {
        self.n_time.unwrap_or(self.n_radial)
    }

    pub fn is_tempered(&self) -> bool {
        self.lambda_x > 0.0
    }
}

/// A scalar field `u(x)` or `u(x, t)` evaluated row-wise on a batch of
/// inputs. Time, when present, is the last column.
pub trait Field {
    fn spatial_dim(&self) -> usize;

    fn has_time(&self) -> bool {
        false
    }

    fn input_dim(&self) -> usize {
        self.spatial_dim() + usize::from(self.has_time())
    }

    fn eval(&self, inputs: ArrayView2<'_, f64>) -> Array1<f64>;

    /// Where the field is identically zero; used to skip evaluations.
    fn support(&self) -> Support {
        Support::Everywhere
    }

    /// Directional derivative `∇u(p_i)·dir_i` in input space for each row.
    fn directional_derivative(&self, _inputs: ArrayView2<'_, f64>, _dirs: ArrayView2<'_, f64>) -> Option<Array1<f64>> {
        None
    }
}

/// Wraps a closure `f(input_row)` as a [`Field`].
pub struct FnField<F> {
    pub d: usize,
    pub time: bool,
    pub support: Support,
    pub f: F,
}

impl<F: Fn(ArrayView1<'_, f64>) -> f64> FnField<F> {
    pub fn spatial(d: usize, support: Support, f: F) -> Self {
        Self {
            d,
            time: false,
            support,
            f,
        }
    }
}

impl<F: Fn(ArrayView1<'_, f64>) -> f64> Field for FnField<F> {
    fn spatial_dim(&self) -> usize {
        self.d
    }

    fn has_time(&self) -> bool {
        self.time
    }

    fn eval(&self, inputs: ArrayView2<'_, f64>) -> Array1<f64> {
        inputs.rows().into_iter().map(|r| (self.f)(r)).collect()
    }

    fn support(&self) -> Support {
        self.support
    }
}

pub(crate) fn check_width(field: &dyn Field, x: ArrayView2<'_, f64>) -> Result<(), OperatorError> {
    if x.ncols() != field.input_dim() {
        return Err(OperatorError::DimensionMismatch {
            expected: field.input_dim(),
            got: x.ncols(),
        });
    }
    Ok(())
}
