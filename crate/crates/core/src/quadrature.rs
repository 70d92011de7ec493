//! Gaussian quadrature rules for the singular radial integrals.
//!
//! Nodes come from the eigenvalues of the symmetric Jacobi matrix built from
//! the three-term recurrence of the orthogonal polynomials (Golub-Welsch).
//! Weights are the Christoffel numbers `μ0 / Σ_k p_k(x_i)²` evaluated with the
//! orthonormal recurrence, which keeps the very small Laguerre weights
//! accurate instead of reading them off squared eigenvector entries.

use thiserror::Error;

use crate::special::ln_abs_gamma;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("weight exponent {0} is not integrable (must be > -1)")]
    InvalidExponent(f64),
    #[error("rule needs at least one node")]
    ZeroNodes,
    #[error("degenerate rule: {0}")]
    DegenerateRule(String),
    #[error("tempering factor must be positive, got {0}")]
    LambdaNonPositive(f64),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    /// `(1-x)^a (1+x)^b` on `[-1, 1]`.
    Jacobi,
    /// `x^a e^{-x}` on `[0, ∞)`.
    GeneralizedLaguerre,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub n: usize,
    pub exp_a: f64,
    pub exp_b: Option<f64>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Zeroth moment of the weight function.
    pub fn total_mass(&self) -> f64 {
        zeroth_moment(self.kind, self.exp_a, self.exp_b.unwrap_or(0.0))
    }
}

fn zeroth_moment(kind: RuleKind, a: f64, b: f64) -> f64 {
    match kind {
        RuleKind::Jacobi => ((a + b + 1.0) * 2f64.ln() + ln_abs_gamma(a + 1.0)
            + ln_abs_gamma(b + 1.0)
            - ln_abs_gamma(a + b + 2.0))
        .exp(),
        RuleKind::GeneralizedLaguerre => ln_abs_gamma(a + 1.0).exp(),
    }
}

/// Monic recurrence coefficients: `π_{k+1} = (x - diag_k) π_k - offdiag_k π_{k-1}`.
/// `offdiag[0]` is unused and set to zero.
fn recurrence(kind: RuleKind, n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    match kind {
        RuleKind::Jacobi => {
            let ab = a + b;
            diag[0] = (b - a) / (ab + 2.0);
            for k in 1..n {
                let kf = k as f64;
                let s = 2.0 * kf + ab;
                diag[k] = (b * b - a * a) / (s * (s + 2.0));
                off[k] = if k == 1 {
                    4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
                } else {
                    4.0 * kf * (kf + a) * (kf + b) * (kf + ab) / (s * s * (s + 1.0) * (s - 1.0))
                };
            }
        }
        RuleKind::GeneralizedLaguerre => {
            for k in 0..n {
                let kf = k as f64;
                diag[k] = 2.0 * kf + a + 1.0;
                off[k] = kf * (kf + a);
            }
        }
    }
    (diag, off)
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// sub-diagonal `sqrt(sub[1..])` (implicit QL with Wilkinson shifts).
fn tridiagonal_eigenvalues(mut d: Vec<f64>, sub: &[f64]) -> Result<Vec<f64>, QuadratureError> {
    let n = d.len();
    let mut e = vec![0.0; n];
    for i in 0..n - 1 {
        e[i] = sub[i + 1].sqrt();
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(QuadratureError::DegenerateRule(format!(
                    "QL iteration did not converge for eigenvalue {l}"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(d)
}

/// `ln Σ_{k<n} p_k(x)²` for the orthonormal polynomials scaled so `p_0 = 1`,
/// carried in log form because Laguerre polynomials grow like `e^{x/2}`.
fn ln_christoffel_sum(x: f64, diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum = 1.0;
    let mut log_scale = 0.0;
    for k in 0..n - 1 {
        let next = ((x - diag[k]) * cur - off[k].sqrt() * prev) / off[k + 1].sqrt();
        prev = cur;
        cur = next;
        sum += cur * cur;
        if cur.abs() > 1e100 {
            prev *= 1e-100;
            cur *= 1e-100;
            sum *= 1e-200;
            log_scale += 200.0 * 10f64.ln();
        }
    }
    sum.ln() + log_scale
}

/// Builds an `n`-point Gauss rule for the given weight function.
///
/// For generalized Laguerre, nodes whose weight underflows `f64` (only for
/// `n` in the hundreds) are dropped, so `nodes.len()` can be smaller than `n`.
pub fn gauss_rule(
    kind: RuleKind,
    n: usize,
    exp_a: f64,
    exp_b: Option<f64>,
) -> Result<QuadratureRule, QuadratureError> {
    if n == 0 {
        return Err(QuadratureError::ZeroNodes);
    }
    if !(exp_a > -1.0) {
        return Err(QuadratureError::InvalidExponent(exp_a));
    }
    let b = match kind {
        RuleKind::Jacobi => {
            let b = exp_b.unwrap_or(0.0);
            if !(b > -1.0) {
                return Err(QuadratureError::InvalidExponent(b));
            }
            b
        }
        RuleKind::GeneralizedLaguerre => 0.0,
    };
    let (diag, off) = recurrence(kind, n, exp_a, b);
    let nodes = tridiagonal_eigenvalues(diag.clone(), &off)?;
    let mu0 = zeroth_moment(kind, exp_a, b);
    let ln_mu0 = mu0.ln();

    let mut out_nodes = Vec::with_capacity(n);
    let mut out_weights = Vec::with_capacity(n);
    for &x in &nodes {
        let w = (ln_mu0 - ln_christoffel_sum(x, &diag, &off)).exp();
        if !w.is_finite() {
            return Err(QuadratureError::DegenerateRule(format!("non-finite weight at node {x}")));
        }
        if w == 0.0 && kind == RuleKind::GeneralizedLaguerre {
            continue;
        }
        out_nodes.push(x);
        out_weights.push(w);
    }

    for pair in out_nodes.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(QuadratureError::DegenerateRule(format!(
                "nodes not strictly increasing near {}",
                pair[0]
            )));
        }
    }
    let in_support = out_nodes.iter().all(|&x| match kind {
        RuleKind::Jacobi => x > -1.0 && x < 1.0,
        RuleKind::GeneralizedLaguerre => x > 0.0,
    });
    if !in_support || out_weights.iter().any(|&w| !(w > 0.0)) {
        return Err(QuadratureError::DegenerateRule("node outside support or non-positive weight".into()));
    }

    Ok(QuadratureRule {
        kind,
        n,
        exp_a,
        exp_b: match kind {
            RuleKind::Jacobi => Some(b),
            RuleKind::GeneralizedLaguerre => None,
        },
        nodes: out_nodes,
        weights: out_weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialProvenance {
    /// `∫_0^{r0} g(r) r^{1-α} dr`
    JacobiBall,
    /// `∫_0^∞ g(r) r^{1-α} e^{-λr} dr`
    LaguerreHalfline,
    /// `∫_0^1 g(τ) τ^{-γ} dτ`
    JacobiTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialParams {
    /// `α` for the spatial rules, `γ` for the time rule.
    pub order: f64,
    pub lambda: Option<f64>,
    pub r0: Option<f64>,
}

/// A 1D rule on radii (or relative time lags) whose weights absorb the
/// singular factor and every change-of-variable Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialRule {
    pub provenance: RadialProvenance,
    pub params: RadialParams,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RadialRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&r, &w)| w * g(r))
            .sum()
    }

    /// Analytic value of the base integral with `g ≡ 1`.
    pub fn base_integral(&self) -> f64 {
        let p = self.params;
        match self.provenance {
            RadialProvenance::JacobiBall => {
                let r0 = p.r0.unwrap_or(2.0);
                r0.powf(2.0 - p.order) / (2.0 - p.order)
            }
            RadialProvenance::LaguerreHalfline => {
                let lambda = p.lambda.unwrap_or(1.0);
                (ln_abs_gamma(2.0 - p.order) - (2.0 - p.order) * lambda.ln()).exp()
            }
            RadialProvenance::JacobiTime => 1.0 / (1.0 - p.order),
        }
    }
}

fn check_open(name: &'static str, value: f64, lo: f64, hi: f64, range: &'static str) -> Result<(), QuadratureError> {
    if value > lo && value < hi {
        Ok(())
    } else {
        Err(QuadratureError::OutOfRange { name, value, range })
    }
}

/// Rule for `∫_0^{r0} g(r) r^{1-α} dr`.
pub fn radial_rule_ball(n: usize, alpha: f64, r0: f64) -> Result<RadialRule, QuadratureError> {
    check_open("alpha", alpha, 0.0, 2.0, "(0, 2)")?;
    check_open("r0", r0, 0.0, f64::INFINITY, "(0, inf)")?;
    let rule = gauss_rule(RuleKind::Jacobi, n, 0.0, Some(1.0 - alpha))?;
    let half = r0 / 2.0;
    let scale = half.powf(2.0 - alpha);
    Ok(RadialRule {
        provenance: RadialProvenance::JacobiBall,
        params: RadialParams {
            order: alpha,
            lambda: None,
            r0: Some(r0),
        },
        nodes: rule.nodes.iter().map(|&x| half * (x + 1.0)).collect(),
        weights: rule.weights.iter().map(|&w| w * scale).collect(),
    })
}

/// Rule for `∫_0^∞ g(r) r^{1-α} e^{-λr} dr`, via `s = λr` on the
/// generalized Laguerre weight `s^{1-α} e^{-s}`.
pub fn radial_rule_halfline(n: usize, alpha: f64, lambda: f64) -> Result<RadialRule, QuadratureError> {
    check_open("alpha", alpha, 0.0, 2.0, "(0, 2)")?;
    if !(lambda > 0.0) {
        return Err(QuadratureError::LambdaNonPositive(lambda));
    }
    let rule = gauss_rule(RuleKind::GeneralizedLaguerre, n, 1.0 - alpha, None)?;
    let scale = lambda.powf(alpha - 2.0);
    Ok(RadialRule {
        provenance: RadialProvenance::LaguerreHalfline,
        params: RadialParams {
            order: alpha,
            lambda: Some(lambda),
            r0: None,
        },
        nodes: rule.nodes.iter().map(|&s| s / lambda).collect(),
        weights: rule.weights.iter().map(|&w| w * scale).collect(),
    })
}

/// Rule for `∫_0^1 g(τ) τ^{-γ} dτ`.
pub fn radial_rule_time(n: usize, gamma: f64) -> Result<RadialRule, QuadratureError> {
    check_open("gamma", gamma, 0.0, 1.0, "(0, 1)")?;
    let rule = gauss_rule(RuleKind::Jacobi, n, 0.0, Some(-gamma))?;
    let scale = 0.5f64.powf(1.0 - gamma);
    Ok(RadialRule {
        provenance: RadialProvenance::JacobiTime,
        params: RadialParams {
            order: gamma,
            lambda: None,
            r0: None,
        },
        nodes: rule.nodes.iter().map(|&x| 0.5 * (x + 1.0)).collect(),
        weights: rule.weights.iter().map(|&w| w * scale).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn one_point_rules() {
        let r = gauss_rule(RuleKind::Jacobi, 1, 0.0, Some(0.0)).unwrap();
        assert!(r.nodes[0].abs() < 1e-15);
        assert_relative_eq!(r.weights[0], 2.0, max_relative = 1e-14);

        let r = gauss_rule(RuleKind::Jacobi, 1, 0.5, Some(0.0)).unwrap();
        assert_relative_eq!(r.nodes[0], -0.2, max_relative = 1e-13);
        assert_relative_eq!(r.weights[0], 4.0 * 2f64.sqrt() / 3.0, max_relative = 1e-13);

        let r = gauss_rule(RuleKind::GeneralizedLaguerre, 1, 0.5, None).unwrap();
        assert_relative_eq!(r.nodes[0], 1.5, max_relative = 1e-14);
        assert_relative_eq!(r.weights[0], PI.sqrt() / 2.0, max_relative = 1e-13);

        let r = gauss_rule(RuleKind::GeneralizedLaguerre, 1, 0.0, None).unwrap();
        assert_relative_eq!(r.nodes[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(r.weights[0], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            gauss_rule(RuleKind::Jacobi, 4, -1.0, Some(0.0)),
            Err(QuadratureError::InvalidExponent(-1.0))
        );
        assert_eq!(
            gauss_rule(RuleKind::Jacobi, 4, 0.0, Some(-1.5)),
            Err(QuadratureError::InvalidExponent(-1.5))
        );
        assert_eq!(gauss_rule(RuleKind::GeneralizedLaguerre, 0, 0.0, None), Err(QuadratureError::ZeroNodes));
        assert!(matches!(
            radial_rule_halfline(8, 0.5, 0.0),
            Err(QuadratureError::LambdaNonPositive(_))
        ));
        assert!(radial_rule_ball(8, 2.0, 1.0).is_err());
        assert!(radial_rule_time(8, 1.0).is_err());
    }

    #[test]
    fn legendre_five_point_nodes() {
        let r = gauss_rule(RuleKind::Jacobi, 5, 0.0, Some(0.0)).unwrap();
        let expected = [-0.906179845938664, -0.5384693101056831, 0.0, 0.5384693101056831, 0.906179845938664];
        for (x, e) in r.nodes.iter().zip(expected) {
            assert!((x - e).abs() < 1e-14);
        }
        assert_relative_eq!(r.weights[2], 128.0 / 225.0, max_relative = 1e-13);
    }

    #[test]
    fn a_plus_b_minus_one_recurrence() {
        // a + b = -1 makes the generic β_1 formula 0/0
        let r = gauss_rule(RuleKind::Jacobi, 6, -0.5, Some(-0.5)).unwrap();
        // Chebyshev first kind: nodes cos((2k-1)π/12), equal weights π/6
        for (i, &w) in r.weights.iter().enumerate() {
            assert_relative_eq!(w, PI / 6.0, max_relative = 1e-12);
            let k = 6 - i;
            assert!((r.nodes[i] - ((2 * k - 1) as f64 * PI / 12.0).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn radial_rule_examples() {
        let rule = radial_rule_ball(5, 1.5, 2.0).unwrap();
        assert_relative_eq!(rule.integrate(|_| 1.0), 2.0 * 2f64.sqrt(), max_relative = 1e-12);
        assert!(rule.nodes.iter().all(|&r| r > 0.0 && r < 2.0));

        let rule = radial_rule_ball(2, 1.0, 1.0).unwrap();
        assert_relative_eq!(rule.integrate(|r| r), 0.5, max_relative = 1e-13);

        let rule = radial_rule_ball(4, 0.5, 2.0).unwrap();
        assert_relative_eq!(rule.integrate(|r| r.powi(3)), 2f64.powf(4.5) / 4.5, max_relative = 1e-12);

        let rule = radial_rule_halfline(7, 1.0, 1.0).unwrap();
        assert_relative_eq!(rule.integrate(|_| 1.0), 1.0, max_relative = 1e-12);

        let rule = radial_rule_halfline(7, 0.5, 2.0).unwrap();
        assert_relative_eq!(rule.integrate(|_| 1.0), 0.313328534328875, max_relative = 1e-12);

        let rule = radial_rule_halfline(3, 0.5, 1.0).unwrap();
        assert_relative_eq!(rule.integrate(|r| r * r), 3.323350970447843, max_relative = 1e-12);

        let rule = radial_rule_time(3, 0.5).unwrap();
        assert_relative_eq!(rule.integrate(|_| 1.0), 2.0, max_relative = 1e-13);
        assert_relative_eq!(rule.integrate(|t| t), 2.0 / 3.0, max_relative = 1e-13);
        assert_eq!(rule.integrate(|_| 0.0), 0.0);
        assert!(rule.nodes.iter().all(|&t| t > 0.0 && t < 1.0));
    }

    #[test]
    fn base_integral_matches_rule() {
        let rules = [
            radial_rule_ball(9, 0.25, 2.0).unwrap(),
            radial_rule_halfline(9, 1.75, 0.5).unwrap(),
            radial_rule_time(9, 0.3).unwrap(),
        ];
        for rule in &rules {
            assert_relative_eq!(rule.integrate(|_| 1.0), rule.base_integral(), max_relative = 1e-10);
        }
    }

    #[test]
    fn large_laguerre_rule_stays_valid() {
        let rule = gauss_rule(RuleKind::GeneralizedLaguerre, 512, 0.5, None).unwrap();
        assert!(rule.nodes.len() <= 512 && rule.nodes.len() > 200);
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), rule.total_mass(), max_relative = 1e-11);
        assert_relative_eq!(rule.integrate(|x| x * x), 3.323350970447843, max_relative = 1e-10);
    }

    #[test]
    fn deterministic() {
        let a = gauss_rule(RuleKind::Jacobi, 33, 0.3, Some(-0.7)).unwrap();
        let b = gauss_rule(RuleKind::Jacobi, 33, 0.3, Some(-0.7)).unwrap();
        assert_eq!(a, b);
    }
}
