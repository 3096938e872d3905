//! Arc-cosine kernels: `σ(z) = Θ(z) zᵖ`, zero bias, identity warping.
//!
//! Under the standard Gaussian measure
//! `κ = ‖wᵢ‖ᵖ ‖wⱼ‖ᵖ Jₚ(γ) / 2π` with `γ` the angle between the weights and
//!
//! - `J₀(γ) = π − γ`
//! - `J₁(γ) = sin γ + (π − γ) cos γ`
//! - `J₂(γ) = 3 sin γ cos γ + (π − γ)(1 + 2 cos² γ)`.
//!
//! For the uniform measure on `S^{d−1}` the radial part factors out because
//! `σ` is absolutely p-homogeneous and `‖x‖` is independent of `x/‖x‖` for
//! Gaussian `x`, so the sphere kernel is the Gaussian one divided by the
//! chi-squared moment `E‖x‖^{2p} = 2ᵖ Γ(p + d/2) / Γ(d/2)`.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

use super::HiddenUnitParams;

pub(crate) fn check_order(p: u32) -> Result<()> {
    if p > 2 {
        return Err(Error::unsupported(format!("arc-cosine kernel of order {p} (supported: 0, 1, 2)")));
    }
    Ok(())
}

fn j_p(p: u32, gamma: f64) -> f64 {
    if gamma == PI {
        // disjoint supports; sin(π) is not exactly zero in floating point
        return 0.0;
    }
    let (s, c) = gamma.sin_cos();
    match p {
        0 => PI - gamma,
        1 => s + (PI - gamma) * c,
        _ => 3.0 * s * c + (PI - gamma) * (1.0 + 2.0 * c * c),
    }
}

struct Geometry {
    norm_i: f64,
    norm_j: f64,
    gamma: f64,
}

fn geometry(ui: &HiddenUnitParams, uj: &HiddenUnitParams, p: u32) -> Result<Option<Geometry>> {
    ui.validate()?;
    uj.validate()?;
    check_order(p)?;
    if ui.b != 0.0 || uj.b != 0.0 {
        return Err(Error::unsupported("arc-cosine kernels require zero bias"));
    }
    if ui.w.len() != uj.w.len() {
        return Err(Error::invalid("weight vectors differ in length"));
    }
    let norm_i = ui.norm();
    let norm_j = uj.norm();
    if norm_i == 0.0 || norm_j == 0.0 {
        return Ok(None);
    }
    let dot: f64 = ui.w.iter().zip(&uj.w).map(|(a, b)| a * b).sum();
    let cos = (dot / (norm_i * norm_j)).clamp(-1.0, 1.0);
    let gamma = if cos == -1.0 { PI } else { cos.acos() };
    Ok(Some(Geometry { norm_i, norm_j, gamma }))
}

/// Arc-cosine kernel of order `p` under the standard Gaussian measure.
///
/// A zero weight vector gives `σ(0) ≡ 0` and therefore a zero kernel value.
pub fn kernel_arccos_gauss(ui: &HiddenUnitParams, uj: &HiddenUnitParams, p: u32) -> Result<f64> {
    Ok(match geometry(ui, uj, p)? {
        None => 0.0,
        Some(g) => (g.norm_i * g.norm_j).powi(p as i32) * j_p(p, g.gamma) / (2.0 * PI),
    })
}

/// `Γ(d/2) / (2ᵖ Γ(p + d/2))`; equals `1/d` for `p = 1`.
pub fn sphere_factor(p: u32, d: usize) -> f64 {
    let h = d as f64 / 2.0;
    (ln_gamma(h) - p as f64 * std::f64::consts::LN_2 - ln_gamma(p as f64 + h)).exp()
}

/// Arc-cosine kernel of order `p` under the uniform probability measure on `S^{d−1}`.
pub fn kernel_arccos_sphere(ui: &HiddenUnitParams, uj: &HiddenUnitParams, p: u32, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::invalid("sphere kernel needs d >= 2"));
    }
    if ui.w.len() != d {
        return Err(Error::invalid(format!("weights have length {}, sphere dimension is {d}", ui.w.len())));
    }
    Ok(kernel_arccos_gauss(ui, uj, p)? * sphere_factor(p, d))
}

/// `∂κ/∂wᵢ = (‖wⱼ‖/2π)(sin γ ŵᵢ + (π − γ) ŵⱼ)` for `p = 1`. The bias
/// derivative is reported as zero; biases are pinned at zero for these kernels.
pub(crate) fn grad_first_gauss(ui: &HiddenUnitParams, uj: &HiddenUnitParams, p: u32) -> Result<(Vec<f64>, f64)> {
    if p != 1 {
        return Err(Error::unsupported(format!("hidden-layer gradients for arc-cosine order {p}")));
    }
    let Some(g) = geometry(ui, uj, p)? else {
        return Ok((vec![0.0; ui.w.len()], 0.0));
    };
    let c = g.norm_j / (2.0 * PI);
    let s = g.gamma.sin();
    let gw = ui
        .w
        .iter()
        .zip(&uj.w)
        .map(|(wi, wj)| c * (s * wi / g.norm_i + (PI - g.gamma) * wj / g.norm_j))
        .collect();
    Ok((gw, 0.0))
}
