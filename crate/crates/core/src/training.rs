//! Loss assembly, Adam with linear learning-rate decay, and the forward and
//! inverse training loops.

use std::io::{self, Write};
use std::time::Instant;

use ndarray::{Array1, ArrayView2};
use serde::Serialize;
use thiserror::Error;

use crate::network::{Model, NetworkError, Wrapper};
use crate::operators::{
    advection_dirs, residual_stencil, Coefficient, Field, InverseSpatial, InverseTime, OperatorError, ResidualEstimators,
    SpatialEstimator, SpatialScheme, Stencil, TimeEstimator, TimeScheme,
};
use crate::problems::{rel_l1, rel_l2, ProblemError, ProblemSpec};
use crate::sampling::{RngStream, SobolSphere};

const MODEL_STREAM: u64 = 0x30de_1000;
const EPOCH_STREAM: u64 = 0xe90c_0000;
const UNIT_TEST_STREAM: u64 = 0x0417_7e57;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss {last_loss} at epoch {epoch} (lr {lr})")]
    NonFiniteLoss { epoch: usize, lr: f64, last_loss: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorVariant {
    Mc,
    Quadrature,
    Qmc,
}

impl EstimatorVariant {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorVariant::Mc => "mc",
            EstimatorVariant::Quadrature => "quadrature",
            EstimatorVariant::Qmc => "qmc",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "mc" => Some(EstimatorVariant::Mc),
            "quadrature" => Some(EstimatorVariant::Quadrature),
            "qmc" => Some(EstimatorVariant::Qmc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub n_residual: usize,
    pub n_data: usize,
    pub w_initial: f64,
    pub w_residual: f64,
    pub w_data: f64,
    pub variant: EstimatorVariant,
    pub seed: u64,
    pub n_test: usize,
    /// Hidden layer widths of the network.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            lr0: 1e-3,
            n_residual: 100,
            n_data: 100,
            w_initial: 1.0,
            w_residual: 1.0,
            w_data: 1.0,
            variant: EstimatorVariant::Quadrature,
            seed: 0,
            n_test: 20_000,
            hidden: vec![128, 128, 128],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 = {} (expected > 0)", self.lr0));
        }
        for (name, w) in [("w_initial", self.w_initial), ("w_residual", self.w_residual), ("w_data", self.w_data)] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("{name} = {w} (expected >= 0)"));
            }
        }
        if self.n_residual == 0 {
            return bad("n_residual = 0 (expected >= 1)".into());
        }
        if self.n_test == 0 {
            return bad("n_test = 0 (expected >= 1)".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer of width 0".into());
        }
        Ok(())
    }
}

/// `lr0 · (1 − epoch/epochs)` for `epoch ∈ 1..=epochs`.
pub fn learning_rate(lr0: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs == 0 {
        return 0.0;
    }
    (lr0 * (1.0 - epoch as f64 / epochs as f64)).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected update at step `t ≥ 1` with step size `lr`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], t: usize, lr: f64) -> Result<(), TrainError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TrainError::ShapeMismatch(format!(
                "adam state {} vs params {} / grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let t = t.max(1) as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid(raw)·(hi − lo) + lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedCoeff {
    pub raw: f64,
    pub lo: f64,
    pub hi: f64,
}

impl BoundedCoeff {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { raw: 0.0, lo, hi }
    }

    pub fn with_value(lo: f64, hi: f64, value: f64) -> Self {
        let p = (value - lo) / (hi - lo);
        Self {
            raw: (p / (1.0 - p)).ln(),
            lo,
            hi,
        }
    }

    pub fn value(&self) -> f64 {
        sigmoid(self.raw) * (self.hi - self.lo) + self.lo
    }

    pub fn dvalue_draw(&self) -> f64 {
        let s = sigmoid(self.raw);
        s * (1.0 - s) * (self.hi - self.lo)
    }
}

/// `exp(raw)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositiveCoeff {
    pub raw: f64,
}

impl PositiveCoeff {
    pub fn with_value(value: f64) -> Self {
        Self { raw: value.ln() }
    }

    pub fn value(&self) -> f64 {
        self.raw.exp()
    }

    pub fn dvalue_draw(&self) -> f64 {
        self.raw.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoeffParam {
    Bounded(BoundedCoeff),
    Positive(PositiveCoeff),
}

impl CoeffParam {
    pub fn value(&self) -> f64 {
        match self {
            CoeffParam::Bounded(b) => b.value(),
            CoeffParam::Positive(p) => p.value(),
        }
    }

    pub fn dvalue_draw(&self) -> f64 {
        match self {
            CoeffParam::Bounded(b) => b.dvalue_draw(),
            CoeffParam::Positive(p) => p.dvalue_draw(),
        }
    }

    pub fn raw_mut(&mut self) -> &mut f64 {
        match self {
            CoeffParam::Bounded(b) => &mut b.raw,
            CoeffParam::Positive(p) => &mut p.raw,
        }
    }

    pub fn raw(&self) -> f64 {
        match self {
            CoeffParam::Bounded(b) => b.raw,
            CoeffParam::Positive(p) => p.raw,
        }
    }
}

/// One coefficient identified during inverse training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unknown {
    pub which: Coefficient,
    pub param: CoeffParam,
}

impl Unknown {
    /// `α` in `(lo, hi)`, starting at `init` or the midpoint.
    pub fn alpha(lo: f64, hi: f64, init: Option<f64>) -> Self {
        Self {
            which: Coefficient::Alpha,
            param: CoeffParam::Bounded(init.map_or(BoundedCoeff::new(lo, hi), |v| BoundedCoeff::with_value(lo, hi, v))),
        }
    }

    pub fn gamma(lo: f64, hi: f64, init: Option<f64>) -> Self {
        Self {
            which: Coefficient::Gamma,
            param: CoeffParam::Bounded(init.map_or(BoundedCoeff::new(lo, hi), |v| BoundedCoeff::with_value(lo, hi, v))),
        }
    }

    pub fn lambda(init: f64) -> Self {
        Self {
            which: Coefficient::Lambda,
            param: CoeffParam::Positive(PositiveCoeff::with_value(init)),
        }
    }

    pub fn name(&self) -> &'static str {
        coeff_name(self.which)
    }
}

pub fn coeff_name(c: Coefficient) -> &'static str {
    match c {
        Coefficient::Alpha => "alpha",
        Coefficient::Lambda => "lambda",
        Coefficient::Gamma => "gamma",
    }
}

/// Loss value with gradients for network parameters and tracked
/// coefficients (indexed by [`Coefficient`]).
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub coeff_grad: [f64; 3],
    pub evaluations: usize,
}

fn model_support(model: &Model) -> crate::operators::Support {
    model.field().support()
}

/// Mean squared residual of `L u − f` over `points`, scaled by `weight`,
/// with its gradients accumulated into `out`.
#[allow(clippy::too_many_arguments)]
pub fn residual_loss(
    model: &Model,
    cfg_op: &crate::operators::OperatorConfig,
    points: ArrayView2<'_, f64>,
    forcing: &Array1<f64>,
    est: &ResidualEstimators,
    rng: RngStream,
    sobol: Option<&mut SobolSphere>,
    weight: f64,
) -> Result<LossEval, TrainError> {
    let n = points.nrows();
    if n == 0 || forcing.len() != n {
        return Err(TrainError::ShapeMismatch(format!("{n} points vs {} forcing values", forcing.len())));
    }
    let stencil = residual_stencil(points, model.spatial(), model_support(model), cfg_op, est, rng, sobol)?;
    let mut grad = vec![0.0; model.mlp.n_params()];
    let mut evaluations = stencil.len();
    let tape = if stencil.is_empty() { None } else { Some(model.tape(stencil.inputs())?) };
    let values = tape.as_ref().map_or_else(|| Array1::zeros(0), |t| t.output.clone());
    let mut residual = stencil.apply(&values) - forcing;
    let adv = match advection_dirs(points, &cfg_op.v) {
        Some(dirs) => {
            let jt = model.jvp_tape(points, dirs.view())?;
            residual += &jt.tangent;
            evaluations += n;
            Some(jt)
        }
        None => None,
    };
    let loss = weight * residual.dot(&residual) / n as f64;
    let r_bar = &residual * (2.0 * weight / n as f64);
    if let Some(t) = &tape {
        let upstream: Array1<f64> = stencil.owner.iter().zip(&stencil.coeff).map(|(&o, &c)| r_bar[o] * c).collect();
        t.backward(model, &upstream, &mut grad, false)?;
    }
    if let Some(jt) = &adv {
        jt.backward(model, &Array1::zeros(n), &r_bar, &mut grad)?;
    }
    let mut coeff_grad = [0.0; 3];
    for c in est.tracked() {
        let moving = if c == Coefficient::Lambda {
            moving_point_derivatives(model, &stencil)?
        } else {
            None
        };
        let d = stencil.apply_coeff_derivative(c, &values, moving.as_ref());
        coeff_grad[c as usize] = r_bar.dot(&d);
    }
    Ok(LossEval {
        loss,
        grad,
        coeff_grad,
        evaluations,
    })
}

fn moving_point_derivatives(model: &Model, stencil: &Stencil) -> Result<Option<Array1<f64>>, TrainError> {
    let Some(dirs) = &stencil.input_grad_lambda else {
        return Ok(None);
    };
    if stencil.is_empty() {
        return Ok(None);
    }
    Ok(Some(model.jvp_tape(stencil.inputs(), dirs.view())?.tangent))
}

/// Mean squared misfit `(u(x_n) − u*_n)²` scaled by `weight`.
pub fn data_loss(model: &Model, points: ArrayView2<'_, f64>, targets: &Array1<f64>, weight: f64) -> Result<LossEval, TrainError> {
    let n = points.nrows();
    if n == 0 || targets.len() != n {
        return Err(TrainError::ShapeMismatch(format!("{n} observations vs {} targets", targets.len())));
    }
    let tape = model.tape(points)?;
    let diff = &tape.output - targets;
    let loss = weight * diff.dot(&diff) / n as f64;
    let mut grad = vec![0.0; model.mlp.n_params()];
    tape.backward(model, &(&diff * (2.0 * weight / n as f64)), &mut grad, false)?;
    Ok(LossEval {
        loss,
        grad,
        coeff_grad: [0.0; 3],
        evaluations: n,
    })
}

/// Builds the residual estimators for the configured variant. `unknowns`
/// switches the spatial (and time) terms to the resampling-free forms.
pub fn build_estimators(
    problem: &ProblemSpec,
    variant: EstimatorVariant,
    unknowns: &[Unknown],
) -> Result<ResidualEstimators, TrainError> {
    let op = &problem.op;
    let quad = variant != EstimatorVariant::Mc;
    let find = |c: Coefficient| unknowns.iter().find(|u| u.which == c);
    let alpha_u = find(Coefficient::Alpha);
    let lambda_u = find(Coefficient::Lambda);
    let gamma_u = find(Coefficient::Gamma);
    let spatial = if alpha_u.is_some() || lambda_u.is_some() {
        if !op.is_tempered() {
            return Err(TrainError::InvalidConfig(
                "identifying alpha or lambda needs the tempered operator (lambda_x > 0)".into(),
            ));
        }
        let (alpha, alpha_h) = match alpha_u {
            Some(u) => match u.param {
                CoeffParam::Bounded(b) => (b.value(), b.hi),
                CoeffParam::Positive(_) => return Err(TrainError::InvalidConfig("alpha needs bounds".into())),
            },
            None => (op.alpha, op.alpha),
        };
        let lambda = lambda_u.map_or(op.lambda_x, |u| u.param.value());
        let mut s = if quad {
            InverseSpatial::quadrature(alpha, alpha_h, lambda, op.n_radial)?
        } else {
            InverseSpatial::mc(alpha, alpha_h, lambda, op.n_radial, op.epsilon)?
        };
        s.track_alpha = alpha_u.is_some();
        s.track_lambda = lambda_u.is_some();
        SpatialEstimator::Inverse(s)
    } else if quad {
        SpatialEstimator::Forward(SpatialScheme::quadrature(op)?)
    } else {
        SpatialEstimator::Forward(SpatialScheme::mc(op)?)
    };
    let time = match (op.gamma, gamma_u) {
        (None, None) => None,
        (None, Some(_)) => return Err(TrainError::InvalidConfig("gamma is unknown but the problem has no time term".into())),
        (Some(g), None) => Some(TimeEstimator::Forward(if quad {
            TimeScheme::quadrature(g, op.time_nodes())?
        } else {
            TimeScheme::mc(g, op.time_nodes())?
        })),
        (Some(_), Some(u)) => {
            let CoeffParam::Bounded(b) = u.param else {
                return Err(TrainError::InvalidConfig("gamma needs bounds".into()));
            };
            let mut t = if quad {
                InverseTime::quadrature(b.value(), b.hi, op.time_nodes())?
            } else {
                InverseTime::mc(b.value(), b.hi, op.time_nodes())?
            };
            t.track_gamma = true;
            Some(TimeEstimator::Inverse(t))
        }
    };
    Ok(ResidualEstimators { spatial, time })
}

fn update_estimators(est: &mut ResidualEstimators, unknowns: &[Unknown]) {
    for u in unknowns {
        let v = u.param.value();
        match (u.which, &mut est.spatial, &mut est.time) {
            (Coefficient::Alpha, SpatialEstimator::Inverse(s), _) => s.alpha = v.min(s.alpha_h),
            (Coefficient::Lambda, SpatialEstimator::Inverse(s), _) => s.lambda = v,
            (Coefficient::Gamma, _, Some(TimeEstimator::Inverse(t))) => t.gamma = v.min(t.gamma_h),
            _ => {}
        }
    }
}

/// Relative L2 error of the estimated `(−Δ)^{α/2} u` against the
/// closed-form forcing on the fixed test set.
pub fn forcing_error(p: &ProblemSpec, variant: EstimatorVariant, n_test: usize, seed: u64) -> Result<(f64, usize), TrainError> {
    let test = p.test_set(n_test, seed);
    let exact = p.dyda_forcing(test.view(), p.op.alpha)?;
    let est = build_estimators(p, variant, &[])?;
    let field = p.exact_field();
    let mut sobol = match variant {
        EstimatorVariant::Qmc => Some(SobolSphere::new(p.d, 0).map_err(OperatorError::from)?),
        _ => None,
    };
    let stencil = residual_stencil(
        test.view(),
        p.d,
        field.support(),
        &p.op,
        &est,
        RngStream::with_stream(seed, UNIT_TEST_STREAM),
        sobol.as_mut(),
    )?;
    let lu = stencil.apply_field(&field);
    Ok((rel_l2(&lu, &exact)?, stencil.len()))
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub residual_loss: f64,
    pub data_loss: f64,
    pub lr: f64,
    pub coeffs: Vec<f64>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiedCoeff {
    pub name: String,
    pub value: f64,
    pub truth: f64,
    pub rel_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub seed: u64,
    pub problem: String,
    pub dimension: usize,
    pub variant: EstimatorVariant,
    pub epochs: usize,
    pub coeff_names: Vec<String>,
    pub history: Vec<EpochRecord>,
    pub init_rel_l2: f64,
    pub final_rel_l2: f64,
    pub identified: Vec<IdentifiedCoeff>,
    pub elapsed_s: f64,
    pub epochs_per_s: f64,
    pub evaluations_per_s: f64,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "epoch,loss,residual_loss,data_loss,lr")?;
        for n in &self.coeff_names {
            write!(w, ",{n}")?;
        }
        writeln!(w, ",elapsed_s")?;
        for r in &self.history {
            write!(w, "{},{:e},{:e},{:e},{:e}", r.epoch, r.loss, r.residual_loss, r.data_loss, r.lr)?;
            for c in &r.coeffs {
                write!(w, ",{c:.10}")?;
            }
            writeln!(w, ",{:.3}", r.elapsed_s)?;
        }
        Ok(())
    }

    /// Key-value summary without the per-epoch history.
    pub fn summary_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report is serializable");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("history");
        }
        v
    }
}

/// Everything `train` needs beyond the problem and config.
#[derive(Debug, Clone, Default)]
pub struct InverseSetup {
    pub unknowns: Vec<Unknown>,
}

/// Trains with the residual loss only (plus the identically-zero initial
/// loss under the spacetime envelope).
pub fn train_forward(
    problem: &ProblemSpec,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(Model, TrainReport), TrainError> {
    let (model, report, _) = train(problem, cfg, &InverseSetup::default(), observer)?;
    Ok((model, report))
}

/// Joint optimization of the network and the unknown coefficients using
/// residual and data losses.
pub fn train_inverse(
    problem: &ProblemSpec,
    cfg: &TrainConfig,
    setup: &InverseSetup,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(Model, Vec<Unknown>, TrainReport), TrainError> {
    if setup.unknowns.is_empty() {
        return Err(TrainError::InvalidConfig("inverse training needs at least one unknown coefficient".into()));
    }
    let (model, report, unknowns) = train(problem, cfg, setup, observer)?;
    Ok((model, unknowns, report))
}

pub fn init_model(problem: &ProblemSpec, cfg: &TrainConfig) -> Result<Model, TrainError> {
    let wrapper = if problem.kind.has_time() { Wrapper::SpacetimeBall } else { Wrapper::SpatialBall };
    let mut sizes = vec![problem.input_dim()];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    Ok(Model::new(
        crate::network::Mlp::init(&sizes, RngStream::with_stream(cfg.seed, MODEL_STREAM))?,
        wrapper,
    )?)
}

fn truth_of(problem: &ProblemSpec, c: Coefficient) -> f64 {
    match c {
        Coefficient::Alpha => problem.op.alpha,
        Coefficient::Lambda => problem.op.lambda_x,
        Coefficient::Gamma => problem.op.gamma.unwrap_or(f64::NAN),
    }
}

fn train(
    problem: &ProblemSpec,
    cfg: &TrainConfig,
    setup: &InverseSetup,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(Model, TrainReport, Vec<Unknown>), TrainError> {
    cfg.validate()?;
    let mut model = init_model(problem, cfg)?;
    let mut unknowns = setup.unknowns.clone();
    let inverse = !unknowns.is_empty();
    let mut est = build_estimators(problem, cfg.variant, &unknowns)?;
    let mut sobol = match cfg.variant {
        EstimatorVariant::Qmc => Some(SobolSphere::new(problem.d, 0).map_err(OperatorError::from)?),
        _ => None,
    };
    let test = problem.test_set(cfg.n_test, cfg.seed);
    let exact = problem.eval_exact(test.view())?;
    let init_rel_l2 = rel_l2(&model.forward(test.view())?, &exact)?;
    let mut adam = Adam::new(model.mlp.n_params());
    let mut coeff_adam = Adam::new(unknowns.len());
    let runs = RngStream::with_stream(cfg.seed, EPOCH_STREAM);
    let start = Instant::now();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut evaluations = 0usize;
    let op = problem.op.clone();
    for epoch in 1..=cfg.epochs {
        let lr = learning_rate(cfg.lr0, epoch, cfg.epochs);
        let er = runs.substream(epoch as u64);
        let points = problem.sample_points(cfg.n_residual, er.substream(0));
        let forcing = problem.forcing(points.view(), er.substream(1))?;
        update_estimators(&mut est, &unknowns);
        let res = residual_loss(&model, &op, points.view(), &forcing, &est, er.substream(2), sobol.as_mut(), cfg.w_residual)?;
        evaluations += res.evaluations;
        let mut grad = res.grad;
        let mut loss = res.loss;
        let mut dloss = 0.0;
        if inverse && cfg.n_data > 0 && cfg.w_data > 0.0 {
            let obs = problem.sample_points(cfg.n_data, er.substream(3));
            let targets = problem.eval_exact(obs.view())?;
            let dl = data_loss(&model, obs.view(), &targets, cfg.w_data)?;
            evaluations += dl.evaluations;
            dloss = dl.loss;
            loss += dl.loss;
            grad.iter_mut().zip(&dl.grad).for_each(|(g, d)| *g += d);
        }
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                lr,
                last_loss: loss,
            });
        }
        adam.step(model.mlp.params_mut(), &grad, epoch, lr)?;
        if inverse {
            let cg: Vec<f64> = unknowns.iter().map(|u| res.coeff_grad[u.which as usize] * u.param.dvalue_draw()).collect();
            let mut raws: Vec<f64> = unknowns.iter().map(|u| u.param.raw()).collect();
            coeff_adam.step(&mut raws, &cg, epoch, lr)?;
            for (u, r) in unknowns.iter_mut().zip(raws) {
                *u.param.raw_mut() = r;
            }
        }
        let rec = EpochRecord {
            epoch,
            loss,
            residual_loss: res.loss,
            data_loss: dloss,
            lr,
            coeffs: unknowns.iter().map(|u| u.param.value()).collect(),
            elapsed_s: start.elapsed().as_secs_f64(),
        };
        observer(&rec);
        history.push(rec);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let final_rel_l2 = rel_l2(&model.forward(test.view())?, &exact)?;
    let identified = unknowns
        .iter()
        .map(|u| {
            let truth = truth_of(problem, u.which);
            IdentifiedCoeff {
                name: u.name().to_string(),
                value: u.param.value(),
                truth,
                rel_l1: rel_l1(u.param.value(), truth).unwrap_or(f64::NAN),
            }
        })
        .collect();
    let report = TrainReport {
        seed: cfg.seed,
        problem: problem.kind.name().to_string(),
        dimension: problem.d,
        variant: cfg.variant,
        epochs: cfg.epochs,
        coeff_names: unknowns.iter().map(|u| u.name().to_string()).collect(),
        history,
        init_rel_l2,
        final_rel_l2,
        identified,
        elapsed_s: elapsed,
        epochs_per_s: if elapsed > 0.0 { cfg.epochs as f64 / elapsed } else { 0.0 },
        evaluations_per_s: if elapsed > 0.0 { evaluations as f64 / elapsed } else { 0.0 },
    };
    Ok((model, report, unknowns))
}
