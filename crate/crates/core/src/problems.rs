//! Manufactured solutions on the unit ball, their forcing terms, test sets
//! and error metrics.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::operators::{
    mc_frac_laplacian, mc_tempered_frac_laplacian, Field, OperatorConfig, OperatorError, Support, TimeEstimator,
    TimeScheme,
};
use crate::sampling::{sample_ball, RngStream};
use crate::special::ln_abs_gamma;

/// Stream ids reserved for problem-level draws.
const COEFF_STREAM: u64 = 0x0c0e_ff00;
const VELOCITY_STREAM: u64 = 0x0e10_c000;
const TEST_STREAM: u64 = 0x7e57_0000;

/// Node count of the Gauss-Jacobi rule used for the time term of forcings.
pub const FORCING_TIME_NODES: usize = 64;
/// Sample count of Monte Carlo forcing estimates.
pub const FORCING_SAMPLES: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("points have {got} columns, problem expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point {row} lies outside the unit ball (norm {norm})")]
    OutsideDomain { row: usize, norm: f64 },
    #[error("reference vector is identically zero")]
    ZeroReference,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no analytic forcing for {0}")]
    NoAnalyticForcing(&'static str),
    #[error("problem needs d >= {min}, got {d}")]
    DimensionTooSmall { d: usize, min: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// `(1−‖x‖²)^{α/2}(c₁₀ + c₁·x) + (1−‖x‖²)^{1+α/2}(c₂₀ + c₂·x)`
    DydaCombined,
    /// `ReLU(1−‖x‖²) Σ c_i sin(x_i + cos x_{i+1} + x_{i+1} cos x_i)`
    TwoBody,
    /// `ReLU(1−‖x‖²) Σ c_i exp(x_i x_{i+1} x_{i+2})`
    ThreeBody,
    /// `ReLU(1−‖x‖²) Σ c_i sin(t(x_i + cos x_{i+1} + x_{i+1} cos x_i))`
    TwoBodyTime,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::DydaCombined => "dyda_combined",
            ProblemKind::TwoBody => "two_body",
            ProblemKind::ThreeBody => "three_body",
            ProblemKind::TwoBodyTime => "two_body_time",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            ProblemKind::DydaCombined,
            ProblemKind::TwoBody,
            ProblemKind::ThreeBody,
            ProblemKind::TwoBodyTime,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    pub fn has_time(&self) -> bool {
        matches!(self, ProblemKind::TwoBodyTime)
    }

    fn min_dim(&self) -> usize {
        match self {
            ProblemKind::DydaCombined => 1,
            ProblemKind::TwoBody | ProblemKind::TwoBodyTime => 2,
            ProblemKind::ThreeBody => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingSource {
    Analytic,
    McEstimate { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub d: usize,
    pub kind: ProblemKind,
    /// Dyda: `c₁` with the constant first (length `d+1`). Otherwise the
    /// interaction coefficients `c_i`.
    pub c1: Vec<f64>,
    /// Dyda only: `c₂` with the constant first.
    pub c2: Vec<f64>,
    pub op: OperatorConfig,
    pub t_final: f64,
    pub forcing: ForcingSource,
    pub seed: u64,
}

impl ProblemSpec {
    /// Draws the coefficients from `N(0, 1)` under `seed`. For the
    /// time-dependent problem an empty velocity is replaced by `U[0,1]^d`.
    pub fn new(kind: ProblemKind, d: usize, mut op: OperatorConfig, seed: u64) -> Result<Self, ProblemError> {
        if d < kind.min_dim() {
            return Err(ProblemError::DimensionTooSmall { d, min: kind.min_dim() });
        }
        op.validate()?;
        let mut rng = RngStream::with_stream(seed, COEFF_STREAM).rng();
        let mut normals = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let (c1, c2) = match kind {
            ProblemKind::DydaCombined => (normals(d + 1), normals(d + 1)),
            ProblemKind::TwoBody | ProblemKind::TwoBodyTime => (normals(d - 1), Vec::new()),
            ProblemKind::ThreeBody => (normals(d - 2), Vec::new()),
        };
        if kind.has_time() && op.v.is_empty() {
            let mut vr = RngStream::with_stream(seed, VELOCITY_STREAM).rng();
            op.v = (0..d).map(|_| vr.random_range(0.0..1.0)).collect();
        }
        if !op.v.is_empty() && op.v.len() != d {
            return Err(ProblemError::DimensionMismatch {
                expected: d,
                got: op.v.len(),
            });
        }
        let forcing = if kind == ProblemKind::DydaCombined && !op.is_tempered() {
            ForcingSource::Analytic
        } else {
            ForcingSource::McEstimate { n: FORCING_SAMPLES }
        };
        Ok(Self {
            d,
            kind,
            c1,
            c2,
            op,
            t_final: 1.0,
            forcing,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.d + usize::from(self.kind.has_time())
    }

    fn check(&self, x: ArrayView2<'_, f64>) -> Result<(), ProblemError> {
        if x.ncols() != self.input_dim() {
            return Err(ProblemError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn eval_exact(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>, ProblemError> {
        self.check(x)?;
        Ok(x.rows().into_iter().map(|r| self.exact_row(r)).collect())
    }

    fn exact_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let d = self.d;
        let x = row.slice(s![..d]);
        let q = 1.0 - x.dot(&x);
        if q <= 0.0 {
            return 0.0;
        }
        match self.kind {
            ProblemKind::DydaCombined => {
                let a = self.op.alpha / 2.0;
                let p1 = self.c1[0] + x.dot(&ArrayView1::from(&self.c1[1..]));
                let p2 = self.c2[0] + x.dot(&ArrayView1::from(&self.c2[1..]));
                let qa = q.powf(a);
                qa * p1 + qa * q * p2
            }
            ProblemKind::TwoBody => q * two_body_sum(x, &self.c1, 1.0),
            ProblemKind::TwoBodyTime => q * two_body_sum(x, &self.c1, row[d]),
            ProblemKind::ThreeBody => {
                let s: f64 = self
                    .c1
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| c * (x[i] * x[i + 1] * x[i + 2]).exp())
                    .sum();
                q * s
            }
        }
    }

    /// Spatial gradient `∇_x u` of the exact solution.
    pub fn grad_exact(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, ProblemError> {
        self.check(x)?;
        let d = self.d;
        let mut out = Array2::zeros((x.nrows(), d));
        for (row, mut g) in x.rows().into_iter().zip(out.rows_mut()) {
            let xs = row.slice(s![..d]);
            let q = 1.0 - xs.dot(&xs);
            if q <= 0.0 {
                continue;
            }
            match self.kind {
                ProblemKind::DydaCombined => {
                    let a = self.op.alpha / 2.0;
                    let c1 = ArrayView1::from(&self.c1[1..]);
                    let c2 = ArrayView1::from(&self.c2[1..]);
                    let p1 = self.c1[0] + xs.dot(&c1);
                    let p2 = self.c2[0] + xs.dot(&c2);
                    let qa = q.powf(a);
                    let radial = -2.0 * (a * qa / q * p1 + (a + 1.0) * qa * p2);
                    for k in 0..d {
                        g[k] = radial * xs[k] + qa * c1[k] + qa * q * c2[k];
                    }
                }
                ProblemKind::TwoBody | ProblemKind::TwoBodyTime => {
                    let t = if self.kind.has_time() { row[d] } else { 1.0 };
                    let sum = two_body_sum(xs, &self.c1, t);
                    for (i, &c) in self.c1.iter().enumerate() {
                        let (a, b) = (xs[i], xs[i + 1]);
                        let arg = a + b.cos() + b * a.cos();
                        let w = c * t * (t * arg).cos() * q;
                        g[i] += w * (1.0 - b * a.sin());
                        g[i + 1] += w * (a.cos() - b.sin());
                    }
                    for k in 0..d {
                        g[k] -= 2.0 * xs[k] * sum;
                    }
                }
                ProblemKind::ThreeBody => {
                    let mut sum = 0.0;
                    for (i, &c) in self.c1.iter().enumerate() {
                        let (a, b, e) = (xs[i], xs[i + 1], xs[i + 2]);
                        let v = c * (a * b * e).exp();
                        sum += v;
                        g[i] += q * v * b * e;
                        g[i + 1] += q * v * a * e;
                        g[i + 2] += q * v * a * b;
                    }
                    for k in 0..d {
                        g[k] -= 2.0 * xs[k] * sum;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn exact_field(&self) -> ExactField<'_> {
        ExactField { spec: self }
    }

    /// Interior points, paired with `t ∈ (0, T]` for time-dependent kinds.
    pub fn sample_points(&self, n: usize, rng: RngStream) -> Array2<f64> {
        let mut r = rng.rng();
        let x = sample_ball(self.d, n, &mut r);
        if !self.kind.has_time() {
            return x;
        }
        let mut out = Array2::zeros((n, self.d + 1));
        out.slice_mut(s![.., ..self.d]).assign(&x);
        for i in 0..n {
            // 1 − U lies in (0, 1]
            out[[i, self.d]] = self.t_final * (1.0 - r.random_range(0.0..1.0));
        }
        out
    }

    /// Fixed evaluation set for a run seed.
    pub fn test_set(&self, n: usize, seed: u64) -> Array2<f64> {
        self.sample_points(n, RngStream::with_stream(seed, TEST_STREAM))
    }

    /// Forcing at `x` under the configured source.
    pub fn forcing(&self, x: ArrayView2<'_, f64>, rng: RngStream) -> Result<Array1<f64>, ProblemError> {
        match self.forcing {
            ForcingSource::Analytic => self.dyda_forcing(x, self.op.alpha),
            ForcingSource::McEstimate { n } => self.mc_forcing(x, n, rng),
        }
    }

    /// Closed-form `(−Δ)^{α/2} u` of the combined Dyda solution.
    pub fn dyda_forcing(&self, x: ArrayView2<'_, f64>, alpha: f64) -> Result<Array1<f64>, ProblemError> {
        if self.kind != ProblemKind::DydaCombined {
            return Err(ProblemError::NoAnalyticForcing(self.kind.name()));
        }
        self.check(x)?;
        let d = self.d as f64;
        let h = d / 2.0;
        let ln2a = alpha * 2f64.ln();
        let k1 = (ln2a + ln_abs_gamma(alpha / 2.0 + 1.0) + ln_abs_gamma((alpha + d) / 2.0) - ln_abs_gamma(h)).exp();
        let k2 = (ln2a + ln_abs_gamma(alpha / 2.0 + 2.0) + ln_abs_gamma((alpha + d) / 2.0) - ln_abs_gamma(h)).exp();
        let k3 =
            (ln2a + ln_abs_gamma(alpha / 2.0 + 1.0) + ln_abs_gamma((alpha + d) / 2.0 + 1.0) - ln_abs_gamma(h + 1.0)).exp();
        let k4 =
            (ln2a + ln_abs_gamma(alpha / 2.0 + 2.0) + ln_abs_gamma((alpha + d) / 2.0 + 1.0) - ln_abs_gamma(h + 1.0)).exp();
        let c1 = ArrayView1::from(&self.c1[1..]);
        let c2 = ArrayView1::from(&self.c2[1..]);
        let mut out = Array1::zeros(x.nrows());
        for (i, row) in x.rows().into_iter().enumerate() {
            let r2 = row.dot(&row);
            if r2 >= 1.0 {
                return Err(ProblemError::OutsideDomain { row: i, norm: r2.sqrt() });
            }
            out[i] = self.c1[0] * k1
                + self.c2[0] * k2 * (1.0 - (1.0 + alpha / d) * r2)
                + k3 * row.dot(&c1)
                + k4 * (1.0 - (1.0 + alpha / (d + 2.0)) * r2) * row.dot(&c2);
        }
        Ok(out)
    }

    /// Monte Carlo estimate of `L u` with `n` (radius, direction) pairs per
    /// point; the time term uses a high-order Gauss-Jacobi rule and the
    /// advection term the analytic gradient.
    pub fn mc_forcing(&self, x: ArrayView2<'_, f64>, n: usize, rng: RngStream) -> Result<Array1<f64>, ProblemError> {
        self.check(x)?;
        let cfg = OperatorConfig {
            n_radial: n,
            ..self.op.clone()
        };
        let u = self.exact_field();
        let spatial = if cfg.is_tempered() {
            mc_tempered_frac_laplacian(&u, x, &cfg, rng)?
        } else {
            mc_frac_laplacian(&u, x, &cfg, rng)?
        };
        let mut f = spatial * cfg.c;
        if !cfg.v.is_empty() {
            let g = self.grad_exact(x)?;
            f += &g.dot(&ArrayView1::from(&cfg.v));
        }
        if let Some(gamma) = cfg.gamma {
            f += &self.time_term(x, gamma, cfg.lambda_t)?;
        }
        Ok(f)
    }

    /// `∂^{γ,λ_t}_t u` of the exact solution.
    pub fn time_term(&self, x: ArrayView2<'_, f64>, gamma: f64, lambda_t: f64) -> Result<Array1<f64>, ProblemError> {
        self.check(x)?;
        if !self.kind.has_time() {
            return Ok(Array1::zeros(x.nrows()));
        }
        let est = TimeEstimator::Forward(TimeScheme::quadrature(gamma, FORCING_TIME_NODES)?);
        let mut rng = RngStream::new(0).rng();
        let d = self.d;
        let mut out = Array1::zeros(x.nrows());
        for (i, xr) in x.rows().into_iter().enumerate() {
            let st = est.stencil(xr[d], lambda_t, &mut rng)?;
            let row = std::cell::RefCell::new(xr.to_vec());
            let f = |t: f64| {
                let mut r = row.borrow_mut();
                r[d] = t;
                self.exact_row(ArrayView1::from(&r[..]))
            };
            out[i] = st.apply(&f);
        }
        Ok(out)
    }
}

fn two_body_sum(x: ArrayView1<'_, f64>, c: &[f64], t: f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(i, &ci)| {
            let (a, b) = (x[i], x[i + 1]);
            ci * (t * (a + b.cos() + b * a.cos())).sin()
        })
        .sum()
}

/// The exact solution as an estimator [`Field`].
pub struct ExactField<'a> {
    spec: &'a ProblemSpec,
}

impl Field for ExactField<'_> {
    fn spatial_dim(&self) -> usize {
        self.spec.d
    }

    fn has_time(&self) -> bool {
        self.spec.kind.has_time()
    }

    fn eval(&self, inputs: ArrayView2<'_, f64>) -> Array1<f64> {
        inputs.rows().into_iter().map(|r| self.spec.exact_row(r)).collect()
    }

    fn support(&self) -> Support {
        if self.spec.kind.has_time() {
            Support::UnitBallPositiveTime
        } else {
            Support::UnitBall
        }
    }

    /// Spatial directions only; the time component of `dirs` is ignored.
    fn directional_derivative(&self, inputs: ArrayView2<'_, f64>, dirs: ArrayView2<'_, f64>) -> Option<Array1<f64>> {
        let g = self.spec.grad_exact(inputs).ok()?;
        let d = self.spec.d;
        Some(
            g.rows()
                .into_iter()
                .zip(dirs.rows())
                .map(|(g, v)| g.dot(&v.slice(s![..d])))
                .collect(),
        )
    }
}

/// `‖pred − exact‖₂ / ‖exact‖₂`.
pub fn rel_l2(pred: &Array1<f64>, exact: &Array1<f64>) -> Result<f64, ProblemError> {
    if pred.len() != exact.len() {
        return Err(ProblemError::LengthMismatch(pred.len(), exact.len()));
    }
    let den = exact.dot(exact).sqrt();
    if den == 0.0 {
        return Err(ProblemError::ZeroReference);
    }
    let num: f64 = pred.iter().zip(exact).map(|(p, e)| (p - e) * (p - e)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// `|pred − exact| / |exact|` for a scalar coefficient.
pub fn rel_l1(pred: f64, exact: f64) -> Result<f64, ProblemError> {
    if exact == 0.0 {
        return Err(ProblemError::ZeroReference);
    }
    Ok((pred - exact).abs() / exact.abs())
}
