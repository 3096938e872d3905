//! Checks of the PGD convergence guarantees against a surrogate optimum.
//!
//! With `η = 1/β`:
//!
//! - for `ε₂ = 0`, `C(Mₜ₊₁) − C(M*) ≤ (3β‖M₁ − M*‖²_F + C(M₁) − C(M*)) / (t + 1)`;
//! - for `ε₂ > 0`, `‖Mₜ − M*‖²_F` decays at least like `exp(−t ε₂ / (2β))`.
//!
//! Iterates are indexed from 1, so `trace[0] = C(M₁)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// Smallest `bound − gap` over all iterations (negative when violated).
    pub min_slack: f64,
    /// First index `t` (into the trace) where the bound fails.
    pub first_violation: Option<usize>,
}

/// Sublinear bound at every iterate. `trace[t]` is `C(Mₜ₊₁)`.
pub fn sublinear_bound_check(trace: &[f64], m1: &DMatrix<f64>, m_star: &DMatrix<f64>, c_star: f64, beta: f64) -> BoundCheck {
    let head = 3.0 * beta * (m1 - m_star).norm_squared() + trace[0] - c_star;
    let mut check = BoundCheck { holds: true, min_slack: f64::INFINITY, first_violation: None };
    // trace[t] = C(M_{t+1}); the bound for C(M_{t+1}) has denominator t + 1
    for (t, &c) in trace.iter().enumerate().skip(1) {
        let slack = head / (t as f64 + 1.0) - (c - c_star);
        check.min_slack = check.min_slack.min(slack);
        if slack < 0.0 && check.first_violation.is_none() {
            check.holds = false;
            check.first_violation = Some(t);
        }
    }
    check
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    pub holds: bool,
    /// Start index from which the envelope holds.
    pub t0: Option<usize>,
    /// Fitted slope of `log dₜ` over the checked range.
    pub observed_slope: f64,
}

/// Looks for `t₀ ≤ t0_max` with `dₜ ≤ d_{t₀} exp(−(t − t₀) rate) (1 + rel_tol)`
/// for every `t ≥ t₀`, where `dₜ = ‖Mₜ − M*‖²_F`.
pub fn linear_rate_check(dist2: &[f64], rate: f64, t0_max: usize, rel_tol: f64) -> RateCheck {
    let n = dist2.len();
    let mut t0 = None;
    for s in 0..=t0_max.min(n.saturating_sub(1)) {
        let ds = dist2[s];
        let ok = (s..n).all(|t| dist2[t] <= ds * (-((t - s) as f64) * rate).exp() * (1.0 + rel_tol));
        if ok {
            t0 = Some(s);
            break;
        }
    }
    let slope = {
        let s = t0.unwrap_or(0);
        let pts: Vec<(f64, f64)> =
            (s..n).filter(|&t| dist2[t] > 0.0).map(|t| (t as f64, dist2[t].ln())).collect();
        if pts.len() < 2 {
            f64::NEG_INFINITY
        } else {
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            sxy / sxx
        }
    };
    RateCheck { holds: t0.is_some(), t0, observed_slope: slope }
}
