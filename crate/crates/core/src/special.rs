//! Gamma-function helpers and the normalising constants of the fractional
//! operators.
//!
//! Everything is evaluated through `ln|Γ|` so that dimensions in the
//! thousands do not overflow, and the sign of `Γ` at negative non-integer
//! arguments is tracked explicitly.

use std::f64::consts::PI;

use statrs::function::gamma as sg;

/// `ln|Γ(x)|` for any real `x` that is not a non-positive integer.
pub fn ln_abs_gamma(x: f64) -> f64 {
    if x >= 0.5 {
        sg::ln_gamma(x)
    } else {
        // Γ(x)Γ(1-x) = π / sin(πx)
        PI.ln() - (PI * x).sin().abs().ln() - sg::ln_gamma(1.0 - x)
    }
}

/// Sign of `Γ(x)`; `+1` for positive arguments, alternating on the negative
/// axis between consecutive poles.
pub fn gamma_sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        let k = (-x).floor() as i64;
        if k % 2 == 0 {
            -1.0
        } else {
            1.0
        }
    }
}

pub fn gamma(x: f64) -> f64 {
    gamma_sign(x) * ln_abs_gamma(x).exp()
}

/// Digamma `ψ(x)`, with reflection for `x < 0.5`.
pub fn digamma(x: f64) -> f64 {
    if x >= 0.5 {
        sg::digamma(x)
    } else {
        sg::digamma(1.0 - x) - PI / (PI * x).tan()
    }
}

/// `1/|Γ(-α)|`, the `α`-dependent factor shared by every tempered estimator.
/// Vanishes at `α = 1` where `Γ(-α)` has a pole.
pub fn inv_abs_gamma_neg(alpha: f64) -> f64 {
    if (alpha - alpha.round()).abs() < 1e-300 && alpha > 0.0 {
        return 0.0;
    }
    (-ln_abs_gamma(-alpha)).exp()
}

/// Derivative of `1/|Γ(-α)|` with respect to `α`.
pub fn inv_abs_gamma_neg_dalpha(alpha: f64) -> f64 {
    inv_abs_gamma_neg(alpha) * digamma(-alpha)
}

/// `ln |S^{d-1}|` with `|S^{d-1}| = 2π^{d/2}/Γ(d/2)`.
pub fn ln_sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2f64.ln() + h * PI.ln() - sg::ln_gamma(h)
}

pub fn sphere_area(d: usize) -> f64 {
    ln_sphere_area(d).exp()
}

/// `C_{d,α} = 2^α Γ((d+α)/2) / (π^{d/2} |Γ(-α/2)|)`.
pub fn frac_laplacian_constant(d: usize, alpha: f64) -> f64 {
    ln_frac_laplacian_constant(d, alpha).exp()
}

fn ln_frac_laplacian_constant(d: usize, alpha: f64) -> f64 {
    let h = d as f64 / 2.0;
    alpha * 2f64.ln() + sg::ln_gamma(h + alpha / 2.0) - h * PI.ln() - ln_abs_gamma(-alpha / 2.0)
}

/// `C_{d,α} · |S^{d-1}|`; the `π^{d/2}` factors cancel so this stays finite
/// for large `d`.
pub fn frac_laplacian_sphere_constant(d: usize, alpha: f64) -> f64 {
    (ln_frac_laplacian_constant(d, alpha) + ln_sphere_area(d)).exp()
}

/// `C_{d,α,λ} = Γ(d/2) / (2π^{d/2} |Γ(-α)|)`.
pub fn tempered_constant(d: usize, alpha: f64) -> f64 {
    let h = d as f64 / 2.0;
    (sg::ln_gamma(h) - 2f64.ln() - h * PI.ln()).exp() * inv_abs_gamma_neg(alpha)
}

/// `C_{d,α,λ} · |S^{d-1}| = 1/|Γ(-α)|`, independent of the dimension.
pub fn tempered_sphere_constant(alpha: f64) -> f64 {
    inv_abs_gamma_neg(alpha)
}
