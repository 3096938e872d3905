//! Exponential activation against Lebesgue measure on a hypercube `[a, b]^d`.
//!
//! `κ(θᵢ, θⱼ) = e^{bᵢ+bⱼ} ∏ᵣ (e^{b sᵣ} − e^{a sᵣ}) / sᵣ` with `sᵣ = wᵢᵣ + wⱼᵣ`.
//!
//! Each factor is evaluated as `L e^{(a+b)s/2} sinh(y)/y` with `L = b − a` and
//! `y = L s / 2`, which has no cancellation near `s = 0`. The product is
//! accumulated in log space so overflow can be attributed to a coordinate.

use crate::error::{Error, Result};

use super::{HiddenUnitParams, SINGULARITY_THRESHOLD};

/// Largest finite `ln(f64::MAX)`.
const LN_MAX: f64 = 709.782712893384;

/// `ln(sinh(y) / y)`, stable for all `y`.
fn ln_sinhc(y: f64) -> f64 {
    let ay = y.abs();
    if ay < 1e-4 {
        // sinh(y)/y = 1 + y²/6 + y⁴/120 + ...
        let y2 = y * y;
        (y2 / 6.0) - (y2 * y2) / 180.0
    } else if ay < 20.0 {
        (y.sinh() / y).ln()
    } else {
        ay - std::f64::consts::LN_2 - ay.ln() + (-(-2.0 * ay).exp()).ln_1p()
    }
}

/// `coth(y) − 1/y` (the Langevin function), the derivative of `ln(sinh(y)/y)`.
fn langevin(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        let y2 = y * y;
        y / 3.0 - y * y2 / 45.0 + 2.0 * y * y2 * y2 / 945.0
    } else {
        1.0 / y.tanh() - 1.0 / y
    }
}

/// `ln ∫ₐᵇ e^{s x} dx`.
fn ln_factor(s: f64, a: f64, b: f64) -> f64 {
    let len = b - a;
    let shift = 0.5 * (a + b) * s;
    if s.abs() < SINGULARITY_THRESHOLD {
        // limit branch: (b − a) e^{(a+b)s/2} (1 + O(s²))
        let y = 0.5 * len * s;
        len.ln() + shift + y * y / 6.0
    } else {
        len.ln() + shift + ln_sinhc(0.5 * len * s)
    }
}

fn check(ui: &HiddenUnitParams, uj: &HiddenUnitParams, a: f64, b: f64) -> Result<()> {
    ui.validate()?;
    uj.validate()?;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::invalid(format!("rectangle needs a < b, got [{a}, {b}]")));
    }
    if ui.w.len() != uj.w.len() {
        return Err(Error::invalid("weight vectors differ in length"));
    }
    Ok(())
}

fn ln_kernel(ui: &HiddenUnitParams, uj: &HiddenUnitParams, a: f64, b: f64) -> Result<f64> {
    check(ui, uj, a, b)?;
    let bias = ui.b + uj.b;
    let mut acc = bias;
    // the largest single contribution is blamed for an overflow; the bias is coordinate d
    let mut worst = (ui.w.len(), bias);
    for (r, (wi, wj)) in ui.w.iter().zip(&uj.w).enumerate() {
        let f = ln_factor(wi + wj, a, b);
        if f > worst.1 {
            worst = (r, f);
        }
        acc += f;
    }
    if acc > LN_MAX {
        return Err(Error::Range { coordinate: worst.0, detail: format!("log kernel value {acc} overflows") });
    }
    Ok(acc)
}

/// Closed-form exponential kernel on `[a, b]^d`, `d = wᵢ.len()`.
pub fn kernel_exp_rect(ui: &HiddenUnitParams, uj: &HiddenUnitParams, a: f64, b: f64) -> Result<f64> {
    Ok(ln_kernel(ui, uj, a, b)?.exp())
}

/// `(∂κ/∂wᵢ, ∂κ/∂bᵢ)`.
pub(crate) fn grad_first(
    ui: &HiddenUnitParams,
    uj: &HiddenUnitParams,
    a: f64,
    b: f64,
) -> Result<(Vec<f64>, f64)> {
    let k = ln_kernel(ui, uj, a, b)?.exp();
    let half_len = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let gw = ui
        .w
        .iter()
        .zip(&uj.w)
        .map(|(wi, wj)| k * (mid + half_len * langevin(half_len * (wi + wj))))
        .collect();
    Ok((gw, k))
}
