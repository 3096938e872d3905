//! Negative log likelihood in `M`, its gradient and the MAP objective.
//!
//! With `A = M + ε₁I`, `qᵢ = ψᵢᵀAψᵢ` and `N' = max(N, 1)`:
//!
//! - `NLL(M) = α Tr(AK) − Σᵢ log(α qᵢ)`
//! - `C(M) = NLL(M)/N' + (ε₂/2)‖M‖²_F`
//! - `∇C(M) = (α/N')K − (1/N') Σᵢ ψᵢψᵢᵀ/qᵢ + ε₂M`.
//!
//! Event terms are accumulated over fixed chunks of rows, evaluated in
//! parallel and summed in chunk order, so results do not depend on the
//! thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::IntensityModel;
use crate::pointprocess::{poisson_nll, EventSet, NllValue};

const CHUNK: usize = 2048;

/// Event features and kernel for a frozen hidden layer.
#[derive(Clone, Debug)]
pub struct Problem {
    /// `N × n`, one row per event.
    pub psi: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub alpha: f64,
    pub jitter: f64,
    pub eps2: f64,
}

/// Per-chunk event sums.
struct Partial {
    log_q: f64,
    /// `Σ ψψᵀ/q`, when requested.
    outer: Option<DMatrix<f64>>,
    singular: Option<usize>,
}

impl Problem {
    pub fn new(events: &EventSet, model: &IntensityModel, eps2: f64) -> Result<Self> {
        let psi = model.features_batch(events.points())?;
        let k = model.gram()?.matrix().clone();
        Ok(Problem { psi, k, alpha: model.alpha(), jitter: model.readout().jitter, eps2 })
    }

    pub fn n_events(&self) -> usize {
        self.psi.nrows()
    }

    pub fn width(&self) -> usize {
        self.k.nrows()
    }

    fn scale(&self) -> f64 {
        1.0 / self.n_events().max(1) as f64
    }

    pub fn effective(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += self.jitter;
        }
        a
    }

    /// `qᵢ = ψᵢᵀAψᵢ` for every event.
    pub fn quadratic_forms(&self, a: &DMatrix<f64>) -> DVector<f64> {
        let pa = &self.psi * a;
        DVector::from_iterator(self.n_events(), (0..self.n_events()).map(|i| self.psi.row(i).dot(&pa.row(i))))
    }

    fn chunks(&self, a: &DMatrix<f64>, with_outer: bool) -> Vec<Partial> {
        let n_ev = self.n_events();
        let starts: Vec<usize> = (0..n_ev).step_by(CHUNK).collect();
        starts
            .par_iter()
            .map(|&s| {
                let len = CHUNK.min(n_ev - s);
                let rows = self.psi.rows(s, len);
                let pa = rows * a;
                let mut log_q = 0.0;
                let mut singular = None;
                let mut scaled = rows.clone_owned();
                for r in 0..len {
                    let q = rows.row(r).dot(&pa.row(r));
                    if !(q > 0.0) {
                        singular.get_or_insert(s + r);
                        continue;
                    }
                    log_q += q.ln();
                    if with_outer {
                        scaled.row_mut(r).scale_mut(1.0 / q);
                    }
                }
                let outer = with_outer.then(|| rows.transpose() * scaled);
                Partial { log_q, outer, singular }
            })
            .collect()
    }

    /// `(NLL, first singular event)`; NLL is `+∞` when some `qᵢ ≤ 0`.
    pub fn nll(&self, m: &DMatrix<f64>) -> (f64, Option<usize>) {
        let a = self.effective(m);
        let parts = self.chunks(&a, false);
        if let Some(i) = parts.iter().find_map(|p| p.singular) {
            return (f64::INFINITY, Some(i));
        }
        let log_q: f64 = parts.iter().map(|p| p.log_q).sum();
        let n = self.n_events() as f64;
        (self.alpha * a.component_mul(&self.k).sum() - log_q - n * self.alpha.ln(), None)
    }

    /// `C(M)`.
    pub fn objective(&self, m: &DMatrix<f64>) -> f64 {
        self.nll(m).0 * self.scale() + 0.5 * self.eps2 * m.norm_squared()
    }

    /// `(C(M), ∇C(M))`.
    pub fn value_and_grad(&self, m: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let a = self.effective(m);
        let parts = self.chunks(&a, true);
        if let Some(index) = parts.iter().find_map(|p| p.singular) {
            return Err(Error::SingularEvent { index });
        }
        let n = self.width();
        let mut outer = DMatrix::zeros(n, n);
        let mut log_q = 0.0;
        for p in parts {
            log_q += p.log_q;
            outer += p.outer.expect("requested");
        }
        let s = self.scale();
        let n_ev = self.n_events() as f64;
        let nll = self.alpha * a.component_mul(&self.k).sum() - log_q - n_ev * self.alpha.ln();
        let value = nll * s + 0.5 * self.eps2 * m.norm_squared();
        let mut g = &self.k * (self.alpha * s) - outer * s + m * self.eps2;
        // exact symmetry
        let gt = g.transpose();
        g += gt;
        g *= 0.5;
        Ok((value, g))
    }
}

/// Negative log likelihood of `events` under `model` (see [`NllValue`]).
pub fn nll(events: &EventSet, model: &IntensityModel) -> Result<NllValue> {
    let psi = model.features_batch(events.points())?;
    let alpha = model.alpha();
    let intensities: Vec<f64> = (0..psi.nrows())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = psi.row(i).iter().copied().collect();
            alpha * model.quadratic_form(&row)
        })
        .collect();
    Ok(poisson_nll(model.integrated_intensity()?, &intensities, alpha.ln()))
}

/// `∇C(M)` at the model's current readout.
pub fn grad_m(events: &EventSet, model: &IntensityModel, eps2: f64) -> Result<DMatrix<f64>> {
    let p = Problem::new(events, model, eps2)?;
    Ok(p.value_and_grad(&model.readout().m)?.1)
}

/// `C(M) = NLL/N + (ε₂/2)‖M‖²_F`, with `N` replaced by 1 for empty event sets.
pub fn map_objective(events: &EventSet, model: &IntensityModel, eps2: f64) -> Result<f64> {
    let v = nll(events, model)?;
    let m = &model.readout().m;
    Ok(v.total / events.len().max(1) as f64 + 0.5 * eps2 * m.norm_squared())
}
