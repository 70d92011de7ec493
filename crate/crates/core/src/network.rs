//! Fully-connected tanh network with hard-constraint output envelopes.
//!
//! Parameters live in one flat buffer, layer by layer: the weight matrix
//! (`in × out`, row-major) followed by the bias. A batch is a row-major
//! matrix, so a layer is `Z = H·W + b`.
//!
//! Besides plain forward/backward passes the model supports a forward-mode
//! tangent (`∇u·dir`) and its reverse pass, which the advection term needs.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use thiserror::Error;

use crate::operators::{Field, Support};
use crate::sampling::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
}

/// Output envelope enforcing zero boundary (and initial) values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrapper {
    None,
    /// `ReLU(1 − ‖x‖²) · raw(x)`
    SpatialBall,
    /// `t · ReLU(1 − ‖x‖²) · raw(x, t)`
    SpacetimeBall,
}

impl Wrapper {
    pub fn name(&self) -> &'static str {
        match self {
            Wrapper::None => "none",
            Wrapper::SpatialBall => "spatial_ball",
            Wrapper::SpacetimeBall => "spacetime_ball",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Wrapper::None),
            "spatial_ball" => Some(Wrapper::SpatialBall),
            "spacetime_ball" => Some(Wrapper::SpacetimeBall),
            _ => None,
        }
    }

    fn has_time(&self) -> bool {
        matches!(self, Wrapper::SpacetimeBall)
    }

    /// Envelope value at one input row.
    fn value(&self, row: ArrayView1<'_, f64>, spatial: usize) -> f64 {
        match self {
            Wrapper::None => 1.0,
            Wrapper::SpatialBall => (1.0 - sq_norm(row.slice(s![..spatial]))).max(0.0),
            Wrapper::SpacetimeBall => row[spatial] * (1.0 - sq_norm(row.slice(s![..spatial]))).max(0.0),
        }
    }

    /// Envelope gradient at one input row, written into `out`.
    fn gradient(&self, row: ArrayView1<'_, f64>, spatial: usize, mut out: ndarray::ArrayViewMut1<'_, f64>) {
        out.fill(0.0);
        match self {
            Wrapper::None => {}
            Wrapper::SpatialBall | Wrapper::SpacetimeBall => {
                let g = 1.0 - sq_norm(row.slice(s![..spatial]));
                if g <= 0.0 {
                    return;
                }
                let t = if self.has_time() { row[spatial] } else { 1.0 };
                for k in 0..spatial {
                    out[k] = -2.0 * row[k] * t;
                }
                if self.has_time() {
                    out[spatial] = g;
                }
            }
        }
    }
}

fn sq_norm(x: ArrayView1<'_, f64>) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Plain tanh multilayer perceptron with identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights and zero biases.
    pub fn init(sizes: &[usize], rng: RngStream) -> Result<Self, NetworkError> {
        let mut m = Self::zeros(sizes)?;
        let mut r = rng.rng();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w, _) = m.layer_ranges(l);
            for p in &mut m.params[w] {
                *p = r.random_range(-limit..limit);
            }
        }
        Ok(m)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self, NetworkError> {
        if sizes.len() < 2 {
            return Err(NetworkError::BadShape(format!("need at least 2 layer sizes, got {}", sizes.len())));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(NetworkError::BadShape(format!("layer {i} has zero width")));
        }
        let count = param_count(sizes);
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; count],
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, NetworkError> {
        let mut m = Self::zeros(sizes)?;
        if params.len() != m.params.len() {
            return Err(NetworkError::BadShape(format!(
                "expected {} parameters, got {}",
                m.params.len(),
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(NetworkError::NonFinite(i));
        }
        m.params = params;
        Ok(m)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn layer_ranges(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut off = 0;
        for k in 0..l {
            off += self.sizes[k] * self.sizes[k + 1] + self.sizes[k + 1];
        }
        let w = off..off + self.sizes[l] * self.sizes[l + 1];
        let b = w.end..w.end + self.sizes[l + 1];
        (w, b)
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (w, _) = self.layer_ranges(l);
        ArrayView2::from_shape((self.sizes[l], self.sizes[l + 1]), &self.params[w]).expect("layer shape")
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let (_, b) = self.layer_ranges(l);
        ArrayView1::from(&self.params[b])
    }

    fn affine(&self, l: usize, h: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = Array2::zeros((h.nrows(), self.sizes[l + 1]));
        z.rows_mut().into_iter().for_each(|mut r| r.assign(&self.bias(l)));
        general_mat_mul(1.0, &h, &self.weight(l), 1.0, &mut z);
        z
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// `tanh` to within a few ulps, about twice as fast as the libm call.
#[inline]
fn tanh(x: f64) -> f64 {
    let a = x.abs();
    let r = if a < 0.0625 {
        let y = a * a;
        a * (1.0 + y * (-1.0 / 3.0 + y * (2.0 / 15.0 + y * (-17.0 / 315.0 + y * (62.0 / 2835.0 - y * 1382.0 / 155925.0)))))
    } else if a > 19.0 {
        1.0
    } else {
        let e = (-2.0 * a).exp();
        (1.0 - e) / (1.0 + e)
    };
    r.copysign(x)
}

fn tanh_inplace(z: &mut Array2<f64>) {
    z.mapv_inplace(tanh);
}

/// Splits a flat gradient buffer into per-layer `(W, b)` mutable views.
fn grad_views<'a>(sizes: &[usize], grad: &'a mut [f64]) -> Vec<(ArrayViewMut2<'a, f64>, &'a mut [f64])> {
    let mut out = Vec::with_capacity(sizes.len() - 1);
    let mut rest = grad;
    for w in sizes.windows(2) {
        let (wpart, tail) = rest.split_at_mut(w[0] * w[1]);
        let (bpart, tail) = tail.split_at_mut(w[1]);
        out.push((ArrayViewMut2::from_shape((w[0], w[1]), wpart).expect("layer shape"), bpart));
        rest = tail;
    }
    out
}

fn add_column_sums(target: &mut [f64], m: &Array2<f64>) {
    for row in m.rows() {
        for (t, &v) in target.iter_mut().zip(row) {
            *t += v;
        }
    }
}

/// The network composed with its envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub mlp: Mlp,
    pub wrapper: Wrapper,
}

impl Model {
    pub fn new(mlp: Mlp, wrapper: Wrapper) -> Result<Self, NetworkError> {
        if *mlp.sizes.last().unwrap() != 1 {
            return Err(NetworkError::BadShape("output layer must have width 1".into()));
        }
        if wrapper.has_time() && mlp.sizes[0] < 2 {
            return Err(NetworkError::BadShape("spacetime model needs at least one spatial input".into()));
        }
        Ok(Self { mlp, wrapper })
    }

    /// Default architecture: three hidden tanh layers of width 128.
    pub fn default_for(spatial: usize, wrapper: Wrapper, rng: RngStream) -> Result<Self, NetworkError> {
        let input = spatial + usize::from(wrapper.has_time());
        Self::new(Mlp::init(&[input, 128, 128, 128, 1], rng)?, wrapper)
    }

    pub fn input_width(&self) -> usize {
        self.mlp.sizes[0]
    }

    pub fn spatial(&self) -> usize {
        self.input_width() - usize::from(self.wrapper.has_time())
    }

    fn check(&self, x: ArrayView2<'_, f64>) -> Result<(), NetworkError> {
        if x.ncols() != self.input_width() {
            return Err(NetworkError::BadShape(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    fn envelope(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let d = self.spatial();
        x.rows().into_iter().map(|r| self.wrapper.value(r, d)).collect()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>, NetworkError> {
        Ok(self.tape(x)?.output)
    }

    /// Forward pass that keeps what the reverse pass needs.
    pub fn tape(&self, x: ArrayView2<'_, f64>) -> Result<Tape, NetworkError> {
        self.check(x)?;
        let n_layers = self.mlp.n_layers();
        let mut hidden = Vec::with_capacity(n_layers - 1);
        let mut z = self.mlp.affine(0, x);
        for l in 1..n_layers {
            tanh_inplace(&mut z);
            let next = self.mlp.affine(l, z.view());
            hidden.push(z);
            z = next;
        }
        let raw = z.column(0).to_owned();
        let envelope = self.envelope(x);
        let output = &raw * &envelope;
        Ok(Tape {
            input: x.to_owned(),
            hidden,
            raw,
            envelope,
            output,
        })
    }

    /// Gradient of `Σ_b upstream_b · u(x_b)` with respect to all parameters.
    pub fn grad_params(&self, x: ArrayView2<'_, f64>, upstream: &Array1<f64>) -> Result<Vec<f64>, NetworkError> {
        let tape = self.tape(x)?;
        let mut g = vec![0.0; self.mlp.n_params()];
        tape.backward(self, upstream, &mut g, false)?;
        Ok(g)
    }

    /// `∇u` with respect to every input column (time last, when present).
    pub fn grad_input(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, NetworkError> {
        let tape = self.tape(x)?;
        let mut scratch = vec![0.0; self.mlp.n_params()];
        let ones = Array1::ones(x.nrows());
        Ok(tape.backward(self, &ones, &mut scratch, true)?.expect("input gradient requested"))
    }

    /// Forward pass carrying the tangent `∇u·dir` for each row.
    pub fn jvp_tape(&self, x: ArrayView2<'_, f64>, dirs: ArrayView2<'_, f64>) -> Result<JvpTape, NetworkError> {
        self.check(x)?;
        if dirs.dim() != x.dim() {
            return Err(NetworkError::BadShape(format!("directions {:?} vs inputs {:?}", dirs.dim(), x.dim())));
        }
        let n_layers = self.mlp.n_layers();
        let mut hidden = Vec::with_capacity(n_layers - 1);
        let mut hidden_dot = Vec::with_capacity(n_layers - 1);
        let mut z_dot_hidden = Vec::with_capacity(n_layers - 1);
        let mut z = self.mlp.affine(0, x);
        let mut zd = dirs.dot(&self.mlp.weight(0));
        for l in 1..n_layers {
            tanh_inplace(&mut z);
            let mut hd = zd.clone();
            Zip::from(&mut hd).and(&z).for_each(|d, &h| *d *= 1.0 - h * h);
            let next = self.mlp.affine(l, z.view());
            let next_d = hd.dot(&self.mlp.weight(l));
            hidden.push(z);
            hidden_dot.push(hd);
            z_dot_hidden.push(zd);
            z = next;
            zd = next_d;
        }
        let raw = z.column(0).to_owned();
        let raw_dot = zd.column(0).to_owned();
        let d = self.spatial();
        let envelope = self.envelope(x);
        let mut grad_env = Array2::zeros(x.dim());
        for (row, g) in x.rows().into_iter().zip(grad_env.rows_mut()) {
            self.wrapper.gradient(row, d, g);
        }
        let env_dot: Array1<f64> = Zip::from(grad_env.rows()).and(dirs.rows()).map_collect(|g, v| g.dot(&v));
        let output = &raw * &envelope;
        let tangent = &env_dot * &raw + &envelope * &raw_dot;
        Ok(JvpTape {
            input: x.to_owned(),
            dirs: dirs.to_owned(),
            hidden,
            hidden_dot,
            z_dot_hidden,
            raw,
            raw_dot,
            envelope,
            env_dot,
            output,
            tangent,
        })
    }

    pub fn field(&self) -> ModelField<'_> {
        ModelField { model: self }
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    input: Array2<f64>,
    hidden: Vec<Array2<f64>>,
    raw: Array1<f64>,
    envelope: Array1<f64>,
    pub output: Array1<f64>,
}

impl Tape {
    /// Accumulates `∂(Σ upstream_b u_b)/∂θ` into `grad`; returns the input
    /// gradient when `want_input` is set.
    pub fn backward(
        &self,
        model: &Model,
        upstream: &Array1<f64>,
        grad: &mut [f64],
        want_input: bool,
    ) -> Result<Option<Array2<f64>>, NetworkError> {
        let n = self.input.nrows();
        if upstream.len() != n || grad.len() != model.mlp.n_params() {
            return Err(NetworkError::BadShape(format!(
                "upstream {} / grad {} vs batch {n} / params {}",
                upstream.len(),
                grad.len(),
                model.mlp.n_params()
            )));
        }
        let mlp = &model.mlp;
        let n_layers = mlp.n_layers();
        let mut views = grad_views(&mlp.sizes, grad);
        let raw_bar = upstream * &self.envelope;
        let mut zbar = raw_bar.clone().insert_axis(Axis(1));
        for l in (0..n_layers).rev() {
            let h_prev = if l == 0 { self.input.view() } else { self.hidden[l - 1].view() };
            let (gw, gb) = &mut views[l];
            general_mat_mul(1.0, &h_prev.t(), &zbar, 1.0, gw);
            add_column_sums(gb, &zbar);
            if l == 0 && !want_input {
                break;
            }
            let mut hbar = zbar.dot(&mlp.weight(l).t());
            if l == 0 {
                let d = model.spatial();
                let mut env_grad = ndarray::Array1::zeros(self.input.ncols());
                for (b, mut row) in hbar.rows_mut().into_iter().enumerate() {
                    model.wrapper.gradient(self.input.row(b), d, env_grad.view_mut());
                    row.scaled_add(upstream[b] * self.raw[b], &env_grad);
                }
                return Ok(Some(hbar));
            }
            Zip::from(&mut hbar).and(&self.hidden[l - 1]).for_each(|g, &h| *g *= 1.0 - h * h);
            zbar = hbar;
        }
        Ok(None)
    }
}

/// Cached values of a tangent-carrying forward pass.
#[derive(Debug, Clone)]
pub struct JvpTape {
    input: Array2<f64>,
    dirs: Array2<f64>,
    hidden: Vec<Array2<f64>>,
    hidden_dot: Vec<Array2<f64>>,
    z_dot_hidden: Vec<Array2<f64>>,
    raw: Array1<f64>,
    raw_dot: Array1<f64>,
    envelope: Array1<f64>,
    env_dot: Array1<f64>,
    pub output: Array1<f64>,
    /// `∇u(x_b)·dir_b`
    pub tangent: Array1<f64>,
}

impl JvpTape {
    /// Accumulates `∂(Σ a_b u_b + c_b ∇u_b·dir_b)/∂θ` into `grad`.
    pub fn backward(&self, model: &Model, value_bar: &Array1<f64>, tangent_bar: &Array1<f64>, grad: &mut [f64]) -> Result<(), NetworkError> {
        let n = self.input.nrows();
        if value_bar.len() != n || tangent_bar.len() != n || grad.len() != model.mlp.n_params() {
            return Err(NetworkError::BadShape("adjoint lengths do not match the batch".into()));
        }
        let mlp = &model.mlp;
        let n_layers = mlp.n_layers();
        let mut views = grad_views(&mlp.sizes, grad);
        let raw_bar = value_bar * &self.envelope + tangent_bar * &self.env_dot;
        let raw_dot_bar = tangent_bar * &self.envelope;
        let mut zbar = raw_bar.insert_axis(Axis(1));
        let mut zdbar = raw_dot_bar.insert_axis(Axis(1));
        for l in (0..n_layers).rev() {
            let (h_prev, hd_prev) = if l == 0 {
                (self.input.view(), self.dirs.view())
            } else {
                (self.hidden[l - 1].view(), self.hidden_dot[l - 1].view())
            };
            let (gw, gb) = &mut views[l];
            general_mat_mul(1.0, &h_prev.t(), &zbar, 1.0, gw);
            general_mat_mul(1.0, &hd_prev.t(), &zdbar, 1.0, gw);
            add_column_sums(gb, &zbar);
            if l == 0 {
                break;
            }
            let w = mlp.weight(l);
            let mut hbar = zbar.dot(&w.t());
            let hdbar = zdbar.dot(&w.t());
            let h = &self.hidden[l - 1];
            let zd = &self.z_dot_hidden[l - 1];
            // ḣ = (1 − h²) ż
            let mut new_zdbar = hdbar.clone();
            Zip::from(&mut new_zdbar).and(h).for_each(|g, &hv| *g *= 1.0 - hv * hv);
            Zip::from(&mut hbar)
                .and(&hdbar)
                .and(zd)
                .and(h)
                .for_each(|g, &hdb, &zdv, &hv| *g = (*g - 2.0 * hv * hdb * zdv) * (1.0 - hv * hv));
            zbar = hbar;
            zdbar = new_zdbar;
        }
        Ok(())
    }

    pub fn raw_tangent(&self) -> &Array1<f64> {
        &self.raw_dot
    }

    pub fn raw(&self) -> &Array1<f64> {
        &self.raw
    }
}

/// Borrowing view of a model as an estimator [`Field`].
pub struct ModelField<'a> {
    model: &'a Model,
}

impl Field for ModelField<'_> {
    fn spatial_dim(&self) -> usize {
        self.model.spatial()
    }

    fn has_time(&self) -> bool {
        self.model.wrapper.has_time()
    }

    fn eval(&self, inputs: ArrayView2<'_, f64>) -> Array1<f64> {
        self.model.forward(inputs).expect("stencil width matches the model")
    }

    fn support(&self) -> Support {
        match self.model.wrapper {
            Wrapper::None => Support::Everywhere,
            Wrapper::SpatialBall => Support::UnitBall,
            Wrapper::SpacetimeBall => Support::UnitBallPositiveTime,
        }
    }

    fn directional_derivative(&self, inputs: ArrayView2<'_, f64>, dirs: ArrayView2<'_, f64>) -> Option<Array1<f64>> {
        self.model.jvp_tape(inputs, dirs).ok().map(|t| t.tangent)
    }
}
