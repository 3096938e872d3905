//! ReLU activation against Lebesgue measure on an interval `[T₁, T₂]`.
//!
//! The integrand `(w₁τ + b₁)(w₂τ + b₂)` is active on an interval `(a₁, a₂)`
//! whose ends depend on the signs of `w₁` and `w₂`. A zero weight makes its
//! factor the constant `ReLU(bᵢ)`: the unit is either active everywhere
//! (`bᵢ > 0`) or nowhere.

use crate::error::{Error, Result};

/// Active interval `(a₁, a₂)`; empty when `a₂ ≤ a₁`.
fn active_interval(w1: f64, b1: f64, w2: f64, b2: f64, t1: f64, t2: f64) -> Option<(f64, f64)> {
    // A zero-weight unit either leaves the other factor's interval unchanged
    // or kills the integrand.
    if w1 == 0.0 || w2 == 0.0 {
        let (c, w, b) = if w1 == 0.0 { (b1, w2, b2) } else { (b2, w1, b1) };
        if c <= 0.0 {
            return None;
        }
        let (a1, a2) = if w > 0.0 {
            (t1.max(-b / w), t2)
        } else if w < 0.0 {
            (t1, t2.min(-b / w))
        } else if b > 0.0 {
            (t1, t2)
        } else {
            return None;
        };
        return (a2 > a1).then_some((a1, a2));
    }
    let r1 = -b1 / w1;
    let r2 = -b2 / w2;
    let (a1, a2) = match (w1 > 0.0, w2 > 0.0) {
        (true, true) => {
            let a1 = t1.max(r1).max(r2);
            (a1, a1.max(t2))
        }
        (false, true) => {
            let a1 = t1.max(r2);
            (a1, a1.max(t2.min(r1)))
        }
        (true, false) => {
            let a1 = t1.max(r1);
            (a1, a1.max(t2.min(r2)))
        }
        (false, false) => (t1, t1.max(t2.min(r1).min(r2))),
    };
    (a2 > a1).then_some((a1, a2))
}

fn check(w1: f64, b1: f64, w2: f64, b2: f64, t1: f64, t2: f64) -> Result<()> {
    if ![w1, b1, w2, b2].iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("ReLU interval kernel parameters must be finite"));
    }
    if !(t1.is_finite() && t2.is_finite() && t1 < t2) {
        return Err(Error::InvalidWindow(format!("interval needs T1 < T2, got [{t1}, {t2}]")));
    }
    Ok(())
}

/// `∫_{T₁}^{T₂} ReLU(w₁τ + b₁) ReLU(w₂τ + b₂) dτ`.
pub fn kernel_relu_interval(w1: f64, b1: f64, w2: f64, b2: f64, t1: f64, t2: f64) -> Result<f64> {
    check(w1, b1, w2, b2, t1, t2)?;
    let Some((a1, a2)) = active_interval(w1, b1, w2, b2, t1, t2) else {
        return Ok(0.0);
    };
    // cubic antiderivative in the shifted variable u = τ − a₁, where each
    // factor is wᵢu + cᵢ with cᵢ its value at a₁
    let h = a2 - a1;
    let c1 = w1 * a1 + b1;
    let c2 = w2 * a1 + b2;
    let v = w1 * w2 * h * h * h / 3.0 + (w1 * c2 + w2 * c1) * h * h / 2.0 + c1 * c2 * h;
    Ok(v.max(0.0))
}

/// `(∂κ/∂w₁, ∂κ/∂b₁)`. The ends of the active interval that move with the
/// parameters are roots of a factor, so only the interior term survives.
pub(crate) fn grad_first(w1: f64, b1: f64, w2: f64, b2: f64, t1: f64, t2: f64) -> Result<(f64, f64)> {
    check(w1, b1, w2, b2, t1, t2)?;
    let Some((a1, a2)) = active_interval(w1, b1, w2, b2, t1, t2) else {
        return Ok((0.0, 0.0));
    };
    let h = a2 - a1;
    let c2 = w2 * a1 + b2;
    // ∫₀ʰ (w₂u + c₂) du and ∫₀ʰ (a₁ + u)(w₂u + c₂) du
    let db = w2 * h * h / 2.0 + c2 * h;
    let dw = a1 * db + w2 * h * h * h / 3.0 + c2 * h * h / 2.0;
    Ok((dw, db))
}
