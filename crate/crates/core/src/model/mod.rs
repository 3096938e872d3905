//! Intensity `λ(x) = α (ψᵀMψ + ε₁‖ψ‖²)`, its integral `Λ = α Tr((M + ε₁I)K)`,
//! and the entrywise product-space extension `ψ = ψ₁(y) ⊙ ψ₂(τ)`.

mod io;

pub use io::{FileHeader, ModelFile, MODEL_FORMAT};

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnk::{
    gram_matrix, ActivationKind, BaseMeasure, HiddenUnitParams, KernelMatrix, KernelMode, KernelSpec, Warping,
};
use crate::pointprocess::Domain;

/// `ψ(x) = σ(W t(x) + b)` with `W` of shape `n × D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HiddenLayer {
    pub activation: ActivationKind,
    #[serde(default)]
    pub warping: Warping,
    #[serde(with = "io::matrix_rows")]
    pub w: DMatrix<f64>,
    #[serde(with = "io::vector")]
    pub b: DVector<f64>,
}

impl HiddenLayer {
    pub fn new(activation: ActivationKind, w: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let h = HiddenLayer { activation, warping: Warping::Identity, w, b };
        h.validate()?;
        Ok(h)
    }

    /// Weights with i.i.d. `N(0, weight_std²)` entries and biases `N(0, bias_std²)`.
    pub fn random<R: Rng + ?Sized>(
        activation: ActivationKind,
        n: usize,
        in_dim: usize,
        weight_std: f64,
        bias_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let w = DMatrix::from_fn(n, in_dim, |_, _| weight_std * rng.sample::<f64, _>(StandardNormal));
        let b = DVector::from_fn(n, |_, _| bias_std * rng.sample::<f64, _>(StandardNormal));
        HiddenLayer::new(activation, w, b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.nrows() == 0 {
            return Err(Error::invalid("hidden layer needs at least one unit"));
        }
        if self.b.len() != self.w.nrows() {
            return Err(Error::invalid(format!("W has {} rows but b has {} entries", self.w.nrows(), self.b.len())));
        }
        if self.w.iter().chain(self.b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("hidden-layer parameters must be finite"));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.w.nrows()
    }

    /// Dimension `D` of the warped input.
    pub fn warped_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn unit(&self, i: usize) -> HiddenUnitParams {
        HiddenUnitParams::new(self.w.row(i).iter().copied().collect(), self.b[i])
    }

    pub fn units(&self) -> Vec<HiddenUnitParams> {
        (0..self.width()).map(|i| self.unit(i)).collect()
    }

    /// Pre-activations `W t(x) + b` written into `out`.
    pub fn preactivations(&self, x: &[f64], out: &mut [f64]) {
        let t = self.warping.apply(x);
        for (i, o) in out.iter_mut().enumerate() {
            let mut z = self.b[i];
            for (r, tr) in t.iter().enumerate() {
                z += self.w[(i, r)] * tr;
            }
            *o = z;
        }
    }

    pub fn features_into(&self, x: &[f64], out: &mut [f64]) {
        self.preactivations(x, out);
        for v in out.iter_mut() {
            *v = self.activation.eval(*v);
        }
    }
}

/// A hidden layer with the base measure its kernel integrates against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Factor {
    pub hidden: HiddenLayer,
    pub measure: BaseMeasure,
}

impl Factor {
    pub fn new(hidden: HiddenLayer, measure: BaseMeasure) -> Result<Self> {
        let f = Factor { hidden, measure };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        self.hidden.validate()?;
        self.measure.validate()?;
        let expected = self.hidden.warping.out_dim(self.measure.dim());
        if self.hidden.warped_dim() != expected {
            return Err(Error::invalid(format!(
                "W has {} columns but the warped input has dimension {expected}",
                self.hidden.warped_dim()
            )));
        }
        Ok(())
    }

    pub fn spec(&self) -> KernelSpec {
        KernelSpec {
            activation: self.hidden.activation.clone(),
            warping: self.hidden.warping.clone(),
            measure: self.measure.clone(),
        }
    }

    fn gram(&self, mode: &KernelMode) -> Result<KernelMatrix> {
        gram_matrix(&self.hidden.units(), &self.spec(), mode)
    }
}

/// Single feature map, or the entrywise product of a feature map on `𝕐` and one on `𝕋`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Structure {
    Single { factor: Factor },
    Product { space: Factor, time: Factor },
}

impl Structure {
    pub fn factors(&self) -> Vec<&Factor> {
        match self {
            Structure::Single { factor } => vec![factor],
            Structure::Product { space, time } => vec![space, time],
        }
    }

    fn factors_mut(&mut self) -> Vec<&mut Factor> {
        match self {
            Structure::Single { factor } => vec![factor],
            Structure::Product { space, time } => vec![space, time],
        }
    }

    pub fn width(&self) -> usize {
        self.factors()[0].hidden.width()
    }

    pub fn validate(&self) -> Result<()> {
        for f in self.factors() {
            f.validate()?;
        }
        if let Structure::Product { space, time } = self {
            if space.hidden.width() != time.hidden.width() {
                return Err(Error::invalid(format!(
                    "product factors have widths {} and {}",
                    space.hidden.width(),
                    time.hidden.width()
                )));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        match self {
            Structure::Single { factor } => Domain::Base(factor.measure.clone()),
            Structure::Product { space, time } => Domain::Product(space.measure.clone(), time.measure.clone()),
        }
    }
}

/// PSD readout `M`, jitter `ε₁` (so `VᵀV = M + ε₁I`) and scale `α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Readout {
    #[serde(with = "io::matrix_rows")]
    pub m: DMatrix<f64>,
    pub jitter: f64,
    pub alpha: f64,
}

impl Readout {
    pub fn new(m: DMatrix<f64>, jitter: f64, alpha: f64) -> Result<Self> {
        let r = Readout { m, jitter, alpha };
        r.validate()?;
        Ok(r)
    }

    /// `M = I − ε₁I`, so that `VᵀV = I`; needs `ε₁ ≤ 1`.
    pub fn identity(n: usize, jitter: f64, alpha: f64) -> Result<Self> {
        Readout::new(DMatrix::identity(n, n) * (1.0 - jitter), jitter, alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m.is_square() {
            return Err(Error::invalid("M must be square"));
        }
        if self.m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("M must be finite"));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::invalid(format!("jitter must be finite and nonnegative, got {}", self.jitter)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be finite and positive, got {}", self.alpha)));
        }
        Ok(())
    }

    /// `A = M + ε₁I`.
    pub fn effective(&self) -> DMatrix<f64> {
        let mut a = self.m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += self.jitter;
        }
        a
    }
}

/// Region over which the intensity measure is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Window {
    Full,
    /// Full spatial domain times `[t1, t2]` inside the temporal interval.
    TemporalSubinterval { t1: f64, t2: f64 },
}

#[derive(Clone, Debug)]
struct GramCache {
    factors: Vec<KernelMatrix>,
    full: KernelMatrix,
}

/// `λ(x) = α ψ(x)ᵀ(M + ε₁I)ψ(x)` over a single or product feature map.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityModel {
    structure: Structure,
    readout: Readout,
    #[serde(default)]
    kernel_mode: KernelMode,
    #[serde(skip)]
    gram: OnceLock<GramCache>,
}

impl Clone for IntensityModel {
    fn clone(&self) -> Self {
        IntensityModel {
            structure: self.structure.clone(),
            readout: self.readout.clone(),
            kernel_mode: self.kernel_mode.clone(),
            gram: self.gram.clone(),
        }
    }
}

impl PartialEq for IntensityModel {
    fn eq(&self, other: &Self) -> bool {
        self.structure == other.structure && self.readout == other.readout && self.kernel_mode == other.kernel_mode
    }
}

impl IntensityModel {
    pub fn new(structure: Structure, readout: Readout) -> Result<Self> {
        let m = IntensityModel { structure, readout, kernel_mode: KernelMode::ClosedForm, gram: OnceLock::new() };
        m.validate()?;
        Ok(m)
    }

    pub fn single(hidden: HiddenLayer, measure: BaseMeasure, readout: Readout) -> Result<Self> {
        IntensityModel::new(Structure::Single { factor: Factor::new(hidden, measure)? }, readout)
    }

    pub fn product(space: Factor, time: Factor, readout: Readout) -> Result<Self> {
        IntensityModel::new(Structure::Product { space, time }, readout)
    }

    /// Evaluates Gram entries with the numeric oracle instead of closed forms.
    pub fn with_kernel_mode(mut self, mode: KernelMode) -> Self {
        self.kernel_mode = mode;
        self.gram = OnceLock::new();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.structure.validate()?;
        self.readout.validate()?;
        let n = self.width();
        if self.readout.m.nrows() != n {
            return Err(Error::invalid(format!("M is {0}×{0} but the hidden layer has {n} units", self.readout.m.nrows())));
        }
        Ok(())
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn readout(&self) -> &Readout {
        &self.readout
    }

    pub fn kernel_mode(&self) -> &KernelMode {
        &self.kernel_mode
    }

    /// Mutable readout. The Gram cache does not depend on it.
    pub fn readout_mut(&mut self) -> &mut Readout {
        &mut self.readout
    }

    /// Mutable hidden layers (one per factor). Drops the cached Gram matrix.
    pub fn hidden_mut(&mut self) -> Vec<&mut HiddenLayer> {
        self.gram = OnceLock::new();
        self.structure.factors_mut().into_iter().map(|f| &mut f.hidden).collect()
    }

    pub fn width(&self) -> usize {
        self.structure.width()
    }

    pub fn domain(&self) -> Domain {
        self.structure.domain()
    }

    /// Point dimension (spatial followed by temporal coordinates for products).
    pub fn dim(&self) -> usize {
        self.domain().dim()
    }

    pub fn alpha(&self) -> f64 {
        self.readout.alpha
    }

    /// `ψ(x)` into `out` (length `n`).
    pub fn features_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!("point has dimension {}, model expects {}", x.len(), self.dim())));
        }
        match &self.structure {
            Structure::Single { factor } => factor.hidden.features_into(x, out),
            Structure::Product { space, time } => {
                let dy = space.measure.dim();
                space.hidden.features_into(&x[..dy], out);
                let mut tmp = vec![0.0; out.len()];
                time.hidden.features_into(&x[dy..], &mut tmp);
                out.iter_mut().zip(&tmp).for_each(|(o, t)| *o *= t);
            }
        }
        Ok(())
    }

    pub fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.width());
        self.features_into(x, out.as_mut_slice())?;
        Ok(out)
    }

    /// Features of every row of `points` (row-major, `dim` columns) as an `N × n` matrix.
    pub fn features_batch(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if d == 0 || points.len() % d != 0 {
            return Err(Error::invalid(format!("point buffer of length {} is not a multiple of {d}", points.len())));
        }
        let n = self.width();
        let rows: Vec<Vec<f64>> = points
            .par_chunks(d)
            .map(|x| {
                let mut out = vec![0.0; n];
                self.features_into(x, &mut out).map(|_| out)
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
    }

    /// `ψᵀ(M + ε₁I)ψ` without forming `ψψᵀ`.
    pub fn quadratic_form(&self, psi: &[f64]) -> f64 {
        let m = &self.readout.m;
        let n = psi.len();
        let mut q = 0.0;
        for j in 0..n {
            let mut col = 0.0;
            for i in 0..n {
                col += m[(i, j)] * psi[i];
            }
            q += psi[j] * col;
        }
        let norm2: f64 = psi.iter().map(|v| v * v).sum();
        // ψᵀMψ can round slightly below zero for PSD M
        (q + self.readout.jitter * norm2).max(0.0)
    }

    pub fn intensity(&self, x: &[f64]) -> Result<f64> {
        let mut psi = vec![0.0; self.width()];
        self.features_into(x, &mut psi)?;
        Ok(self.readout.alpha * self.quadratic_form(&psi))
    }

    pub fn intensity_batch(&self, points: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if d == 0 || points.len() % d != 0 {
            return Err(Error::invalid(format!("point buffer of length {} is not a multiple of {d}", points.len())));
        }
        points.par_chunks(d).map(|x| self.intensity(x)).collect()
    }

    fn cache(&self) -> Result<&GramCache> {
        if let Some(c) = self.gram.get() {
            return Ok(c);
        }
        let factors = self
            .structure
            .factors()
            .into_iter()
            .map(|f| f.gram(&self.kernel_mode))
            .collect::<Result<Vec<_>>>()?;
        let full = match factors.as_slice() {
            [k] => k.clone(),
            [k1, k2] => k1.hadamard(k2)?,
            _ => unreachable!("one or two factors"),
        };
        Ok(self.gram.get_or_init(|| GramCache { factors, full }))
    }

    /// Gram matrix `K` (`K₁ ⊙ K₂` for products), cached until the hidden layer changes.
    pub fn gram(&self) -> Result<&KernelMatrix> {
        Ok(&self.cache()?.full)
    }

    /// Per-factor Gram matrices.
    pub fn factor_grams(&self) -> Result<&[KernelMatrix]> {
        Ok(&self.cache()?.factors)
    }

    /// `K₁ ⊙ K₂`; the plain Gram matrix for single-factor models.
    pub fn product_gram(&self) -> Result<&KernelMatrix> {
        self.gram()
    }

    /// `α Tr((M + ε₁I) K)`.
    pub fn integrated_intensity(&self) -> Result<f64> {
        Ok(self.integrated_with(self.gram()?))
    }

    fn integrated_with(&self, k: &KernelMatrix) -> f64 {
        self.readout.alpha * self.readout.effective().component_mul(k.matrix()).sum()
    }

    /// Intensity measure of a window.
    ///
    /// A temporal sub-window re-evaluates the interval kernel on `[t1, t2]`.
    /// It applies to the time factor of a product model, or to a single-factor
    /// model whose measure is itself an interval.
    pub fn expected_count(&self, window: &Window) -> Result<f64> {
        let (t1, t2) = match *window {
            Window::Full => return self.integrated_intensity(),
            Window::TemporalSubinterval { t1, t2 } => (t1, t2),
        };
        let factor = match &self.structure {
            Structure::Product { time, .. } => time,
            Structure::Single { factor } => factor,
        };
        let BaseMeasure::LebesgueInterval { t1: lo, t2: hi } = factor.measure else {
            return Err(Error::InvalidWindow(format!(
                "temporal sub-windows need an interval measure, found {}",
                crate::nnk::measure_name(&factor.measure)
            )));
        };
        if !(t1 < t2 && t1 >= lo && t2 <= hi) {
            return Err(Error::InvalidWindow(format!("[{t1}, {t2}] is not a sub-interval of [{lo}, {hi}]")));
        }
        if t1 == lo && t2 == hi {
            return self.integrated_intensity();
        }
        let sub = Factor { hidden: factor.hidden.clone(), measure: BaseMeasure::LebesgueInterval { t1, t2 } };
        let k_sub = sub.gram(&self.kernel_mode)?;
        let k = match &self.structure {
            Structure::Product { .. } => self.factor_grams()?[0].hadamard(&k_sub)?,
            Structure::Single { .. } => k_sub,
        };
        Ok(self.integrated_with(&k))
    }

    /// Copy with `α` multiplied by `c`; `λ` and `Λ` scale by `c` exactly.
    pub fn with_alpha_scaled(&self, c: f64) -> Result<Self> {
        let mut m = self.clone();
        m.readout.alpha *= c;
        m.readout.validate()?;
        Ok(m)
    }

    pub fn with_readout(&self, readout: Readout) -> Result<Self> {
        let mut m = self.clone();
        m.readout = readout;
        m.validate()?;
        Ok(m)
    }

    /// Total base measure `μ(𝕏)` of the domain.
    pub fn total_mass(&self) -> f64 {
        self.domain().total_mass()
    }

    /// Rescales every hidden unit so that `Kᵢᵢ = μ(𝕏)/n`, hence `Tr K = μ(𝕏)`
    /// and `Λ = α μ(𝕏)` when `M + ε₁I = I`. Each factor of a product takes an
    /// equal share. Exponential units shift their bias; `p`-homogeneous units
    /// (`p ≥ 1`) scale `(w, b)`.
    pub fn normalize_features(&mut self) -> Result<()> {
        let n = self.width() as f64;
        let mode = self.kernel_mode.clone();
        let nf = self.structure.factors().len() as f64;
        let target = (self.total_mass() / n).powf(1.0 / nf);
        for f in self.structure.factors_mut() {
            let diag = f.gram(&mode)?.matrix().diagonal();
            for i in 0..f.hidden.width() {
                let d = diag[i];
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::Numeric(format!("unit {i} has kernel diagonal {d}; cannot normalise")));
                }
                match f.hidden.activation.clone() {
                    ActivationKind::Exp => f.hidden.b[i] += 0.5 * (target / d).ln(),
                    act => match act.homogeneity() {
                        Some(p) if p >= 1 => {
                            let c = (target / d).powf(0.5 / p as f64);
                            f.hidden.w.row_mut(i).scale_mut(c);
                            f.hidden.b[i] *= c;
                        }
                        _ => return Err(Error::unsupported(format!("feature normalisation for {act:?}"))),
                    },
                }
            }
        }
        self.gram = OnceLock::new();
        Ok(())
    }
}

/// `α = N / μ(𝕏)`, or 1 without events.
pub fn alpha_heuristic(n_events: usize, total_mass: f64) -> f64 {
    if n_events == 0 || !(total_mass > 0.0) {
        1.0
    } else {
        n_events as f64 / total_mass
    }
}

#[cfg(test)]
mod tests;
