//! Neural-network kernels `κ(θᵢ, θⱼ) = ∫ σ(wᵢᵀt(x) + bᵢ) σ(wⱼᵀt(x) + bⱼ) dμ(x)`.
//!
//! Closed forms are provided for three (activation, warping, measure) triples:
//!
//! | activation | measure | module |
//! |---|---|---|
//! | `exp` | Lebesgue on `[a, b]^d` (or an interval) | [`exp_rect`] |
//! | `Θ(z) zᵖ`, `p ∈ {0, 1, 2}` (ReLU for `p = 1`), zero bias | standard Gaussian, uniform sphere | [`arccos`] |
//! | ReLU | Lebesgue on `[T₁, T₂]` | [`relu_interval`] |
//!
//! Everything else goes through [`numeric::kernel_numeric`], which is also the
//! validation oracle for the closed forms.

pub mod arccos;
pub mod exp_rect;
pub mod numeric;
pub mod quadrature;
pub mod relu_interval;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use arccos::{kernel_arccos_gauss, kernel_arccos_sphere};
pub use exp_rect::kernel_exp_rect;
pub use numeric::{kernel_numeric, NumericBudget, NumericEstimate};
pub use relu_interval::kernel_relu_interval;

/// Threshold on `|wᵢᵣ + wⱼᵣ|` below which the exponential kernel switches to its
/// limiting form.
pub const SINGULARITY_THRESHOLD: f64 = 1e-8;

/// One row `θᵢ = (wᵢ, bᵢ)` of the hidden-layer parameter matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenUnitParams {
    pub w: Vec<f64>,
    pub b: f64,
}

impl HiddenUnitParams {
    pub fn new(w: Vec<f64>, b: f64) -> Self {
        HiddenUnitParams { w, b }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.w.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("weight coordinate {r} is not finite")));
        }
        if !self.b.is_finite() {
            return Err(Error::invalid("bias is not finite"));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn preactivation(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b
    }
}

/// Base measure `μ` of the kernel integral (and of the point process).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseMeasure {
    /// Lebesgue measure on the hypercube `[a, b]^d`.
    LebesgueRect { a: f64, b: f64, d: usize },
    /// Uniform probability measure on the unit sphere `S^{d-1} ⊂ ℝ^d`.
    UniformSphere { d: usize },
    /// Standard Gaussian probability measure on `ℝ^d`.
    IsotropicGaussian { d: usize },
    /// Lebesgue measure on `[t1, t2]`.
    LebesgueInterval { t1: f64, t2: f64 },
    /// Uniform probability measure over a finite sample set. Oracle only.
    Empirical { samples: Vec<Vec<f64>> },
}

impl BaseMeasure {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseMeasure::LebesgueRect { a, b, d } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::invalid(format!("rectangle needs a < b, got [{a}, {b}]")));
                }
                if d == 0 {
                    return Err(Error::invalid("rectangle dimension must be positive"));
                }
            }
            BaseMeasure::UniformSphere { d } => {
                if d < 2 {
                    return Err(Error::invalid("sphere needs ambient dimension d >= 2"));
                }
            }
            BaseMeasure::IsotropicGaussian { d } => {
                if d == 0 {
                    return Err(Error::invalid("Gaussian dimension must be positive"));
                }
            }
            BaseMeasure::LebesgueInterval { t1, t2 } => {
                if !(t1.is_finite() && t2.is_finite() && t1 < t2) {
                    return Err(Error::InvalidWindow(format!("interval needs T1 < T2, got [{t1}, {t2}]")));
                }
            }
            BaseMeasure::Empirical { ref samples } => {
                let d = samples.first().map(Vec::len).unwrap_or(0);
                if d == 0 || samples.iter().any(|s| s.len() != d) {
                    return Err(Error::invalid("empirical measure needs equal-length nonempty samples"));
                }
            }
        }
        Ok(())
    }

    /// Dimension of points in the support.
    pub fn dim(&self) -> usize {
        match self {
            BaseMeasure::LebesgueRect { d, .. }
            | BaseMeasure::UniformSphere { d }
            | BaseMeasure::IsotropicGaussian { d } => *d,
            BaseMeasure::LebesgueInterval { .. } => 1,
            BaseMeasure::Empirical { samples } => samples.first().map(Vec::len).unwrap_or(0),
        }
    }

    /// Total mass `μ(𝕏)`.
    pub fn total_mass(&self) -> f64 {
        match *self {
            BaseMeasure::LebesgueRect { a, b, d } => (b - a).powi(d as i32),
            BaseMeasure::LebesgueInterval { t1, t2 } => t2 - t1,
            BaseMeasure::UniformSphere { .. }
            | BaseMeasure::IsotropicGaussian { .. }
            | BaseMeasure::Empirical { .. } => 1.0,
        }
    }

    /// Draws one point from the normalised measure `μ / μ(𝕏)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            BaseMeasure::LebesgueRect { a, b, .. } => {
                for v in out.iter_mut() {
                    *v = a + (b - a) * rng.random::<f64>();
                }
            }
            BaseMeasure::LebesgueInterval { t1, t2 } => {
                out[0] = t1 + (t2 - t1) * rng.random::<f64>();
            }
            BaseMeasure::IsotropicGaussian { .. } => {
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            BaseMeasure::UniformSphere { .. } => loop {
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    out.iter_mut().for_each(|v| *v /= norm);
                    break;
                }
            },
            BaseMeasure::Empirical { ref samples } => {
                let k = rng.random_range(0..samples.len());
                out.copy_from_slice(&samples[k]);
            }
        }
    }

    /// Membership test with a small tolerance for points on the boundary.
    pub fn contains(&self, x: &[f64]) -> bool {
        const TOL: f64 = 1e-9;
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match *self {
            BaseMeasure::LebesgueRect { a, b, .. } => x.iter().all(|&v| v >= a - TOL && v <= b + TOL),
            BaseMeasure::LebesgueInterval { t1, t2 } => x[0] >= t1 - TOL && x[0] <= t2 + TOL,
            BaseMeasure::UniformSphere { .. } => {
                (x.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= 1e-6
            }
            BaseMeasure::IsotropicGaussian { .. } | BaseMeasure::Empirical { .. } => true,
        }
    }
}

/// User-supplied scalar activation. Only usable through the numeric oracle.
#[derive(Clone)]
pub struct CustomActivation {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl CustomActivation {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CustomActivation { name: name.into(), f: Arc::new(f) }
    }
}

impl fmt::Debug for CustomActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomActivation({})", self.name)
    }
}

impl PartialEq for CustomActivation {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.f, &other.f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActivationKind {
    Exp,
    Relu,
    /// `Θ(z) zᵖ`; `p = 1` is the ReLU and `p = 0` the Heaviside step.
    HeavisidePower { p: u32 },
    #[serde(skip)]
    Custom(CustomActivation),
}

impl ActivationKind {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            ActivationKind::Exp => z.exp(),
            ActivationKind::Relu => z.max(0.0),
            ActivationKind::HeavisidePower { p } => {
                if z > 0.0 {
                    z.powi(*p as i32)
                } else {
                    0.0
                }
            }
            ActivationKind::Custom(c) => (c.f)(z),
        }
    }

    /// Derivative `σ'(z)`, with the right-continuous convention at kinks.
    /// `None` for custom activations.
    #[inline]
    pub fn derivative(&self, z: f64) -> Option<f64> {
        match self {
            ActivationKind::Exp => Some(z.exp()),
            ActivationKind::Relu => Some(if z > 0.0 { 1.0 } else { 0.0 }),
            ActivationKind::HeavisidePower { p } => Some(match *p {
                0 => 0.0,
                p if z > 0.0 => p as f64 * z.powi(p as i32 - 1),
                _ => 0.0,
            }),
            ActivationKind::Custom(_) => None,
        }
    }

    /// Homogeneity degree when `σ(|a| z) = |a|ᵖ σ(z)`.
    pub fn homogeneity(&self) -> Option<u32> {
        match self {
            ActivationKind::Relu => Some(1),
            ActivationKind::HeavisidePower { p } => Some(*p),
            _ => None,
        }
    }
}

/// User-supplied warping `t: ℝᵈ → ℝᴰ`. Only usable through the numeric oracle.
#[derive(Clone)]
pub struct CustomWarping {
    pub name: String,
    pub out_dim: usize,
    pub f: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl fmt::Debug for CustomWarping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomWarping({}, D={})", self.name, self.out_dim)
    }
}

impl PartialEq for CustomWarping {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.f, &other.f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Warping {
    #[default]
    Identity,
    #[serde(skip)]
    Custom(CustomWarping),
}

impl Warping {
    pub fn custom(
        name: impl Into<String>,
        out_dim: usize,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Warping::Custom(CustomWarping { name: name.into(), out_dim, f: Arc::new(f) })
    }

    pub fn apply<'a>(&self, x: &'a [f64]) -> std::borrow::Cow<'a, [f64]> {
        match self {
            Warping::Identity => std::borrow::Cow::Borrowed(x),
            Warping::Custom(c) => std::borrow::Cow::Owned((c.f)(x)),
        }
    }

    pub fn out_dim(&self, in_dim: usize) -> usize {
        match self {
            Warping::Identity => in_dim,
            Warping::Custom(c) => c.out_dim,
        }
    }
}

/// Declarative kernel dispatch: which `(σ, t, μ)` triple a Gram matrix is built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub activation: ActivationKind,
    #[serde(default)]
    pub warping: Warping,
    pub measure: BaseMeasure,
}

impl KernelSpec {
    pub fn new(activation: ActivationKind, measure: BaseMeasure) -> Self {
        KernelSpec { activation, warping: Warping::Identity, measure }
    }

    /// Resolves the closed form for this triple, if one is implemented.
    pub fn closed_form(&self) -> Result<ClosedForm> {
        self.measure.validate()?;
        if !matches!(self.warping, Warping::Identity) {
            return Err(Error::unsupported("closed-form kernels require the identity warping"));
        }
        use ActivationKind as A;
        use BaseMeasure as M;
        match (&self.activation, &self.measure) {
            (A::Exp, &M::LebesgueRect { a, b, d }) => Ok(ClosedForm::ExpRect { a, b, d }),
            (A::Exp, &M::LebesgueInterval { t1, t2 }) => Ok(ClosedForm::ExpRect { a: t1, b: t2, d: 1 }),
            (A::Relu | A::HeavisidePower { p: 1 }, &M::LebesgueInterval { t1, t2 }) => {
                Ok(ClosedForm::ReluInterval { t1, t2 })
            }
            (act @ (A::Relu | A::HeavisidePower { .. }), &M::IsotropicGaussian { d }) => {
                let p = act.homogeneity().unwrap_or(1);
                arccos::check_order(p)?;
                Ok(ClosedForm::ArcCosGauss { p, d })
            }
            (act @ (A::Relu | A::HeavisidePower { .. }), &M::UniformSphere { d }) => {
                let p = act.homogeneity().unwrap_or(1);
                arccos::check_order(p)?;
                Ok(ClosedForm::ArcCosSphere { p, d })
            }
            (A::Custom(c), _) => Err(Error::unsupported(format!(
                "activation '{}' has no closed-form kernel; use the numeric oracle",
                c.name
            ))),
            (act, m) => Err(Error::unsupported(format!(
                "no closed-form kernel for activation {act:?} with measure {}",
                measure_name(m)
            ))),
        }
    }
}

pub(crate) fn measure_name(m: &BaseMeasure) -> &'static str {
    match m {
        BaseMeasure::LebesgueRect { .. } => "lebesgue_rect",
        BaseMeasure::UniformSphere { .. } => "uniform_sphere",
        BaseMeasure::IsotropicGaussian { .. } => "isotropic_gaussian",
        BaseMeasure::LebesgueInterval { .. } => "lebesgue_interval",
        BaseMeasure::Empirical { .. } => "empirical",
    }
}

/// A resolved closed-form kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClosedForm {
    ExpRect { a: f64, b: f64, d: usize },
    ArcCosGauss { p: u32, d: usize },
    ArcCosSphere { p: u32, d: usize },
    ReluInterval { t1: f64, t2: f64 },
}

impl ClosedForm {
    fn check_dim(&self, ui: &HiddenUnitParams, uj: &HiddenUnitParams) -> Result<()> {
        let d = match *self {
            ClosedForm::ExpRect { d, .. }
            | ClosedForm::ArcCosGauss { d, .. }
            | ClosedForm::ArcCosSphere { d, .. } => d,
            ClosedForm::ReluInterval { .. } => 1,
        };
        if ui.w.len() != d || uj.w.len() != d {
            return Err(Error::invalid(format!(
                "weight dimension {}/{} does not match measure dimension {d}",
                ui.w.len(),
                uj.w.len()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, ui: &HiddenUnitParams, uj: &HiddenUnitParams) -> Result<f64> {
        self.check_dim(ui, uj)?;
        match *self {
            ClosedForm::ExpRect { a, b, .. } => kernel_exp_rect(ui, uj, a, b),
            ClosedForm::ArcCosGauss { p, .. } => kernel_arccos_gauss(ui, uj, p),
            ClosedForm::ArcCosSphere { p, d } => kernel_arccos_sphere(ui, uj, p, d),
            ClosedForm::ReluInterval { t1, t2 } => {
                kernel_relu_interval(ui.w[0], ui.b, uj.w[0], uj.b, t1, t2)
            }
        }
    }

    /// Partial derivatives `(∂κ/∂wᵢ, ∂κ/∂bᵢ)` with respect to the first argument.
    pub fn grad_first(&self, ui: &HiddenUnitParams, uj: &HiddenUnitParams) -> Result<(Vec<f64>, f64)> {
        self.check_dim(ui, uj)?;
        match *self {
            ClosedForm::ExpRect { a, b, .. } => exp_rect::grad_first(ui, uj, a, b),
            ClosedForm::ArcCosGauss { p, .. } => arccos::grad_first_gauss(ui, uj, p),
            ClosedForm::ArcCosSphere { p, d } => {
                let (gw, gb) = arccos::grad_first_gauss(ui, uj, p)?;
                let s = arccos::sphere_factor(p, d);
                Ok((gw.into_iter().map(|g| g * s).collect(), gb * s))
            }
            ClosedForm::ReluInterval { t1, t2 } => {
                let (gw, gb) = relu_interval::grad_first(ui.w[0], ui.b, uj.w[0], uj.b, t1, t2)?;
                Ok((vec![gw], gb))
            }
        }
    }

    /// Whether the kernel depends on the biases (arc-cosine kernels require zero bias).
    pub fn uses_bias(&self) -> bool {
        matches!(self, ClosedForm::ExpRect { .. } | ClosedForm::ReluInterval { .. })
    }
}

/// How Gram entries are computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelMode {
    #[default]
    ClosedForm,
    /// Numeric oracle per entry; entry `(i, j)` uses a seed derived from the
    /// budget seed and `(i, j)` so results do not depend on evaluation order.
    Numeric(NumericBudget),
}

/// Symmetric PSD Gram matrix of a kernel over hidden-unit parameter rows.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix(DMatrix<f64>);

impl KernelMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("kernel matrix must be square"));
        }
        Ok(KernelMatrix(m))
    }

    pub fn identity(n: usize) -> Self {
        KernelMatrix(DMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn hadamard(&self, other: &KernelMatrix) -> Result<KernelMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::invalid(format!(
                "width mismatch in entrywise product: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(KernelMatrix(self.0.component_mul(&other.0)))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        SymmetricEigen::new(self.0.clone()).eigenvalues.min()
    }

    /// Largest `|Kᵢⱼ − Kⱼᵢ|` relative to the largest entry magnitude.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.0.amax().max(f64::MIN_POSITIVE);
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)]).abs());
            }
        }
        worst / scale
    }

    /// Checks symmetry (1e-12 relative) and PSD-ness (λ_min ≥ −1e-8·Tr K).
    pub fn check_invariants(&self) -> Result<()> {
        let asym = self.asymmetry();
        if asym > 1e-12 {
            return Err(Error::Numeric(format!("kernel matrix asymmetric (relative {asym:e})")));
        }
        let min = self.min_eigenvalue();
        let tol = -1e-8 * self.trace().abs();
        if min < tol {
            return Err(Error::Numeric(format!(
                "kernel matrix not PSD: min eigenvalue {min:e} < {tol:e}"
            )));
        }
        Ok(())
    }
}

/// Evaluates one kernel entry under a mode.
pub fn kernel_entry(
    spec: &KernelSpec,
    mode: &KernelMode,
    ui: &HiddenUnitParams,
    uj: &HiddenUnitParams,
    index: (usize, usize),
) -> Result<f64> {
    match mode {
        KernelMode::ClosedForm => spec.closed_form()?.eval(ui, uj),
        KernelMode::Numeric(budget) => {
            let budget = budget.for_entry(index.0, index.1);
            let est = kernel_numeric(&spec.activation, &spec.warping, &spec.measure, ui, uj, &budget)?;
            Ok(est.value)
        }
    }
}

/// Assembles the Gram matrix `K` with `Kᵢⱼ = κ(θᵢ, θⱼ)`.
///
/// Only the upper triangle is evaluated (in parallel) and mirrored.
pub fn gram_matrix(units: &[HiddenUnitParams], spec: &KernelSpec, mode: &KernelMode) -> Result<KernelMatrix> {
    for u in units {
        u.validate()?;
    }
    let n = units.len();
    let closed = match mode {
        KernelMode::ClosedForm => Some(spec.closed_form()?),
        KernelMode::Numeric(_) => None,
    };
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let v = match closed {
                Some(cf) => cf.eval(&units[i], &units[j]),
                None => kernel_entry(spec, mode, &units[i], &units[j], (i, j)),
            };
            v.map_err(|e| Error::GramEntry { i, j, source: Box::new(e) })
        })
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        let v = v?;
        k[(i, j)] = v;
        k[(j, i)] = v;
    }
    Ok(KernelMatrix(k))
}

/// Gradient of `Σᵢⱼ Cᵢⱼ κ(θᵢ, θⱼ)` with respect to every unit, for a symmetric
/// coefficient matrix `C`. Returns per-unit `(∂/∂wₖ, ∂/∂bₖ)`.
pub fn gram_contraction_grad(
    units: &[HiddenUnitParams],
    closed: &ClosedForm,
    coeff: &DMatrix<f64>,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let n = units.len();
    (0..n)
        .into_par_iter()
        .map(|k| {
            let dim = units[k].w.len();
            let mut gw = vec![0.0; dim];
            let mut gb = 0.0;
            for j in 0..n {
                let c = coeff[(k, j)];
                if c == 0.0 {
                    continue;
                }
                let (dw, db) = closed
                    .grad_first(&units[k], &units[j])
                    .map_err(|e| Error::GramEntry { i: k, j, source: Box::new(e) })?;
                for (g, d) in gw.iter_mut().zip(&dw) {
                    *g += 2.0 * c * d;
                }
                gb += 2.0 * c * db;
            }
            Ok((gw, gb))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(w: &[f64], b: f64) -> HiddenUnitParams {
        HiddenUnitParams::new(w.to_vec(), b)
    }

    #[test]
    fn single_zero_unit_exp_gram_is_one() {
        let spec = KernelSpec::new(ActivationKind::Exp, BaseMeasure::LebesgueRect { a: 0.0, b: 1.0, d: 3 });
        let k = gram_matrix(&[unit(&[0.0, 0.0, 0.0], 0.0)], &spec, &KernelMode::ClosedForm).unwrap();
        assert_eq!(k.matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn duplicated_rows_give_equal_block() {
        let spec = KernelSpec::new(ActivationKind::Exp, BaseMeasure::LebesgueRect { a: 0.0, b: 1.0, d: 2 });
        let u = unit(&[0.3, -1.2], 0.4);
        let k = gram_matrix(&[u.clone(), u], &spec, &KernelMode::ClosedForm).unwrap();
        let m = k.matrix();
        assert_eq!(m[(0, 0)], m[(0, 1)]);
        assert_eq!(m[(1, 0)], m[(1, 1)]);
        assert!(k.min_eigenvalue().abs() < 1e-12 * k.trace());
    }

    #[test]
    fn random_relu_sphere_gram_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let units: Vec<_> = (0..5)
            .map(|_| unit(&[rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)], 0.0))
            .collect();
        let spec = KernelSpec::new(ActivationKind::Relu, BaseMeasure::UniformSphere { d: 3 });
        let k = gram_matrix(&units, &spec, &KernelMode::ClosedForm).unwrap();
        k.check_invariants().unwrap();
        assert!(k.min_eigenvalue() >= -1e-8 * k.trace());
    }

    #[test]
    fn gram_errors_carry_entry_index() {
        let spec = KernelSpec::new(ActivationKind::Relu, BaseMeasure::IsotropicGaussian { d: 1 });
        let err = gram_matrix(&[unit(&[1.0], 0.0), unit(&[1.0], 0.5)], &spec, &KernelMode::ClosedForm)
            .unwrap_err();
        match err {
            Error::GramEntry { i: 0, j: 1, source } => assert!(matches!(*source, Error::Unsupported(_))),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn custom_activation_rejected_by_dispatch() {
        let spec = KernelSpec::new(
            ActivationKind::Custom(CustomActivation::new("one", |_| 1.0)),
            BaseMeasure::UniformSphere { d: 3 },
        );
        assert!(matches!(spec.closed_form(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn dispatch_table() {
        let cases = [
            (ActivationKind::Exp, BaseMeasure::LebesgueRect { a: 0.0, b: 2.0, d: 2 }, true),
            (ActivationKind::Exp, BaseMeasure::LebesgueInterval { t1: 0.0, t2: 1.0 }, true),
            (ActivationKind::Relu, BaseMeasure::LebesgueInterval { t1: 0.0, t2: 1.0 }, true),
            (ActivationKind::Relu, BaseMeasure::UniformSphere { d: 3 }, true),
            (ActivationKind::HeavisidePower { p: 0 }, BaseMeasure::IsotropicGaussian { d: 2 }, true),
            (ActivationKind::HeavisidePower { p: 5 }, BaseMeasure::IsotropicGaussian { d: 2 }, false),
            (ActivationKind::Relu, BaseMeasure::LebesgueRect { a: 0.0, b: 1.0, d: 2 }, false),
            (ActivationKind::Exp, BaseMeasure::UniformSphere { d: 3 }, false),
        ];
        for (act, m, ok) in cases {
            assert_eq!(KernelSpec::new(act.clone(), m.clone()).closed_form().is_ok(), ok, "{act:?} {m:?}");
        }
    }

    #[test]
    fn kernel_spec_serde_round_trip() {
        let spec = KernelSpec::new(ActivationKind::HeavisidePower { p: 2 }, BaseMeasure::UniformSphere { d: 3 });
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<KernelSpec>(&s).unwrap(), spec);
        assert!(serde_json::from_str::<KernelSpec>(
            r#"{"activation":{"kind":"exp"},"measure":{"kind":"uniform_sphere","d":3,"extra":1}}"#
        )
        .is_err());
    }
}
