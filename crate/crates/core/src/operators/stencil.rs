use ndarray::{Array1, Array2, ArrayView2};

use super::Field;

/// Region outside of which a field is identically zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Everywhere,
    /// `‖x‖ < 1`
    UnitBall,
    /// `‖x‖ < 1` and `t > 0` (time in the last column)
    UnitBallPositiveTime,
}

impl Support {
    pub fn contains(&self, row: &[f64], spatial: usize) -> bool {
        match self {
            Support::Everywhere => true,
            Support::UnitBall => row[..spatial].iter().map(|v| v * v).sum::<f64>() < 1.0,
            Support::UnitBallPositiveTime => {
                row[spatial] > 0.0 && row[..spatial].iter().map(|v| v * v).sum::<f64>() < 1.0
            }
        }
    }
}

/// Operator coefficients that can carry derivatives through a stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    Alpha = 0,
    Lambda = 1,
    Gamma = 2,
}

pub(crate) type Grad3 = [f64; 3];
pub(crate) const NO_GRAD: Grad3 = [0.0; 3];

/// A linear functional `owner ↦ Σ_j coeff_j u(inputs_j)` over a batch.
///
/// `coeff_grad[k]` holds `∂coeff_j/∂θ_k` for tracked coefficients, and
/// `input_grad_lambda` holds `∂inputs_j/∂λ` when the evaluation points move
/// with the tempering factor.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub n_owners: usize,
    pub inputs: Array2<f64>,
    pub owner: Vec<usize>,
    pub coeff: Vec<f64>,
    pub coeff_grad: [Option<Vec<f64>>; 3],
    pub input_grad_lambda: Option<Array2<f64>>,
}

impl Stencil {
    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    /// Σ over rows of `coeff · value`, grouped by owner.
    pub fn apply(&self, values: &Array1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.n_owners);
        for ((&o, &c), &v) in self.owner.iter().zip(&self.coeff).zip(values) {
            out[o] += c * v;
        }
        out
    }

    pub fn apply_field(&self, field: &dyn Field) -> Array1<f64> {
        if self.is_empty() {
            return Array1::zeros(self.n_owners);
        }
        self.apply(&field.eval(self.inputs.view()))
    }

    /// Derivative of the functional with respect to `which`, given field
    /// values and (for λ) the directional derivatives `∇u(p_j)·∂p_j/∂λ`.
    pub fn apply_coeff_derivative(
        &self,
        which: Coefficient,
        values: &Array1<f64>,
        moving_points: Option<&Array1<f64>>,
    ) -> Array1<f64> {
        let mut out = Array1::zeros(self.n_owners);
        if let Some(g) = &self.coeff_grad[which as usize] {
            for ((&o, &dc), &v) in self.owner.iter().zip(g).zip(values) {
                out[o] += dc * v;
            }
        }
        if which == Coefficient::Lambda {
            if let Some(dd) = moving_points {
                for ((&o, &c), &v) in self.owner.iter().zip(&self.coeff).zip(dd) {
                    out[o] += c * v;
                }
            }
        }
        out
    }
}

/// Accumulates stencil rows, dropping those outside the field support.
pub struct StencilBuilder {
    n_owners: usize,
    width: usize,
    spatial: usize,
    support: Support,
    inputs: Vec<f64>,
    owner: Vec<usize>,
    coeff: Vec<f64>,
    coeff_grad: [Option<Vec<f64>>; 3],
    input_grad: Option<Vec<f64>>,
    center_row: Vec<Option<usize>>,
    scratch: Vec<f64>,
}

impl StencilBuilder {
    pub fn new(n_owners: usize, width: usize, spatial: usize, support: Support) -> Self {
        Self {
            n_owners,
            width,
            spatial,
            support,
            inputs: Vec::new(),
            owner: Vec::new(),
            coeff: Vec::new(),
            coeff_grad: [None, None, None],
            input_grad: None,
            center_row: vec![None; n_owners],
            scratch: vec![0.0; width],
        }
    }

    pub fn track(mut self, which: Coefficient) -> Self {
        self.coeff_grad[which as usize] = Some(Vec::new());
        if which == Coefficient::Lambda {
            self.input_grad = Some(Vec::new());
        }
        self
    }

    pub fn tracks(&self, which: Coefficient) -> bool {
        self.coeff_grad[which as usize].is_some()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial
    }

    fn push_raw(&mut self, owner: usize, input: &[f64], coeff: f64, grad: Grad3, input_grad: Option<&[f64]>) -> usize {
        let idx = self.owner.len();
        self.inputs.extend_from_slice(input);
        self.owner.push(owner);
        self.coeff.push(coeff);
        for (k, slot) in self.coeff_grad.iter_mut().enumerate() {
            if let Some(v) = slot {
                v.push(grad[k]);
            }
        }
        if let Some(ig) = &mut self.input_grad {
            match input_grad {
                Some(g) => ig.extend_from_slice(g),
                None => ig.extend(std::iter::repeat_n(0.0, self.width)),
            }
        }
        idx
    }

    /// Adds to the coefficient of `u(center)` for `owner`.
    pub fn center(&mut self, owner: usize, center: &[f64], coeff: f64, grad: Grad3) {
        if !self.support.contains(center, self.spatial) {
            return;
        }
        match self.center_row[owner] {
            Some(idx) => {
                self.coeff[idx] += coeff;
                for (k, slot) in self.coeff_grad.iter_mut().enumerate() {
                    if let Some(v) = slot {
                        v[idx] += grad[k];
                    }
                }
            }
            None => {
                let idx = self.push_raw(owner, center, coeff, grad, None);
                self.center_row[owner] = Some(idx);
            }
        }
    }

    pub fn push(&mut self, owner: usize, input: &[f64], coeff: f64, grad: Grad3) {
        if self.support.contains(input, self.spatial) {
            self.push_raw(owner, input, coeff, grad, None);
        }
    }

    /// Adds `w·(2u(x) − u(x − r ξ) − u(x + r ξ))`. `dr_dlambda` is the
    /// derivative of the shift length with respect to λ, when it moves.
    #[allow(clippy::too_many_arguments)]
    pub fn second_difference(
        &mut self,
        owner: usize,
        center: &[f64],
        dir: &[f64],
        r: f64,
        w: f64,
        grad: Grad3,
        dr_dlambda: Option<f64>,
    ) {
        self.center(owner, center, 2.0 * w, grad.map(|g| 2.0 * g));
        let neg = grad.map(|g| -g);
        let d = self.spatial;
        for sign in [-1.0, 1.0] {
            let mut row = std::mem::take(&mut self.scratch);
            row.copy_from_slice(center);
            for (x, &xi) in row[..d].iter_mut().zip(dir) {
                *x += sign * r * xi;
            }
            if self.support.contains(&row, d) {
                match (dr_dlambda, self.input_grad.is_some()) {
                    (Some(drl), true) => {
                        let mut g = vec![0.0; self.width];
                        for (gi, &xi) in g[..d].iter_mut().zip(dir) {
                            *gi = sign * drl * xi;
                        }
                        self.push_raw(owner, &row, -w, neg, Some(&g));
                    }
                    _ => {
                        self.push_raw(owner, &row, -w, neg, None);
                    }
                }
            }
            self.scratch = row;
        }
    }

    pub fn build(self) -> Stencil {
        let rows = self.owner.len();
        let width = self.width;
        Stencil {
            n_owners: self.n_owners,
            inputs: Array2::from_shape_vec((rows, width), self.inputs).expect("row-major stencil inputs"),
            owner: self.owner,
            coeff: self.coeff,
            coeff_grad: self.coeff_grad,
            input_grad_lambda: self
                .input_grad
                .map(|g| Array2::from_shape_vec((rows, width), g).expect("row-major stencil gradients")),
        }
    }
}
