//! Numeric oracle for arbitrary `(σ, t, μ)` triples.
//!
//! One-dimensional Lebesgue measures are integrated by adaptive Gauss–Kronrod
//! quadrature. Everything else is Monte Carlo against the normalised measure,
//! scaled by the total mass. Samples are drawn in fixed-size batches, batch `k`
//! using ChaCha8 stream `k` of the budget seed, so the estimate is identical
//! whatever the number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::quadrature::integrate_pieces;
use super::{ActivationKind, BaseMeasure, HiddenUnitParams, Warping};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericBudget {
    /// Hard cap on Monte Carlo samples.
    pub max_samples: u64,
    /// Samples always drawn before the stopping rule is consulted.
    pub min_samples: u64,
    /// Samples per batch (one RNG stream each).
    pub batch: u64,
    /// Stop once `stderr ≤ target_rel_stderr · |estimate|`.
    pub target_rel_stderr: f64,
    pub seed: u64,
    pub quad_abs_tol: f64,
    pub quad_rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for NumericBudget {
    fn default() -> Self {
        NumericBudget {
            max_samples: 1_000_000,
            min_samples: 100_000,
            batch: 50_000,
            target_rel_stderr: 1e-3,
            seed: 0,
            quad_abs_tol: 1e-13,
            quad_rel_tol: 1e-13,
            max_subdivisions: 2000,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl NumericBudget {
    /// A budget with exactly `samples` Monte Carlo draws.
    pub fn fixed_samples(samples: u64, seed: u64) -> Self {
        NumericBudget { max_samples: samples, min_samples: samples, seed, ..Default::default() }
    }

    /// Copy with a seed derived from `(seed, i, j)`.
    pub fn for_entry(&self, i: usize, j: usize) -> Self {
        let s = splitmix64(splitmix64(self.seed ^ splitmix64(i as u64)) ^ (j as u64));
        NumericBudget { seed: s, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_samples == 0 || self.batch == 0 {
            return Err(Error::invalid("numeric budget needs positive max_samples and batch"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NumericEstimate {
    pub value: f64,
    pub stderr: f64,
    pub converged: bool,
    /// Monte Carlo samples drawn; 0 for quadrature.
    pub samples: u64,
}

/// Running mean and sum of squared deviations (Welford), mergeable.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Monte Carlo mean of `f(x)` with `x` drawn by `sample` (a point of length
/// `dim` per call), in deterministic batches: batch `k` uses ChaCha8 stream `k`
/// of the budget seed, and batches are merged in index order.
pub(crate) fn mc_moments<S, F>(dim: usize, sample: S, budget: &NumericBudget, f: F) -> Result<(Moments, bool)>
where
    S: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
    F: Fn(&[f64]) -> f64 + Sync,
{
    budget.validate()?;
    let n_batches = budget.max_samples.div_ceil(budget.batch);
    let min_batches = budget.min_samples.div_ceil(budget.batch).clamp(1, n_batches);
    let run_batch = |k: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
        rng.set_stream(k);
        let size = budget.batch.min(budget.max_samples - k * budget.batch);
        let mut x = vec![0.0; dim];
        let mut m = Moments::default();
        for _ in 0..size {
            sample(&mut rng, &mut x);
            m.push(f(&x));
        }
        m
    };
    let target = |m: &Moments| m.stderr() <= budget.target_rel_stderr * m.mean.abs();
    let mut acc = (0..min_batches)
        .into_par_iter()
        .map(run_batch)
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    let mut next = min_batches;
    // further batches in rayon-sized rounds, merged in batch order
    let round = rayon::current_num_threads().max(1) as u64;
    while next < n_batches && !target(&acc) {
        let end = (next + round).min(n_batches);
        for m in (next..end).into_par_iter().map(run_batch).collect::<Vec<_>>() {
            acc = acc.merge(m);
            next += 1;
            if target(&acc) {
                break;
            }
        }
    }
    let converged = target(&acc);
    Ok((acc, converged))
}

fn interval_of(measure: &BaseMeasure) -> Option<(f64, f64)> {
    match *measure {
        BaseMeasure::LebesgueInterval { t1, t2 } => Some((t1, t2)),
        BaseMeasure::LebesgueRect { a, b, d: 1 } => Some((a, b)),
        _ => None,
    }
}

/// Numeric estimate of `∫ σ(wᵢᵀt(x) + bᵢ) σ(wⱼᵀt(x) + bⱼ) dμ(x)`.
///
/// Monte Carlo results are deterministic given `budget.seed` (the stopping
/// rule is checked at batch boundaries only, so round size does not change
/// which batches are merged).
pub fn kernel_numeric(
    act: &ActivationKind,
    warping: &Warping,
    measure: &BaseMeasure,
    ui: &HiddenUnitParams,
    uj: &HiddenUnitParams,
    budget: &NumericBudget,
) -> Result<NumericEstimate> {
    ui.validate()?;
    uj.validate()?;
    measure.validate()?;
    let out_dim = warping.out_dim(measure.dim());
    if ui.w.len() != out_dim || uj.w.len() != out_dim {
        return Err(Error::invalid(format!(
            "weights have length {}/{}, warped dimension is {out_dim}",
            ui.w.len(),
            uj.w.len()
        )));
    }
    let integrand = |x: &[f64]| {
        let t = warping.apply(x);
        act.eval(ui.preactivation(&t)) * act.eval(uj.preactivation(&t))
    };

    if let Some((a, b)) = interval_of(measure) {
        // kinks of piecewise activations sit where a preactivation crosses zero
        let breaks: Vec<f64> = match warping {
            Warping::Identity => [ui, uj].iter().filter(|u| u.w[0] != 0.0).map(|u| -u.b / u.w[0]).collect(),
            Warping::Custom(_) => Vec::new(),
        };
        let q = integrate_pieces(
            |x| integrand(std::slice::from_ref(&x)),
            a,
            b,
            &breaks,
            budget.quad_abs_tol,
            budget.quad_rel_tol,
            budget.max_subdivisions,
        );
        if !q.value.is_finite() {
            return Err(Error::Numeric("quadrature produced a non-finite value".into()));
        }
        return Ok(NumericEstimate { value: q.value, stderr: q.error, converged: q.converged, samples: 0 });
    }

    if let BaseMeasure::Empirical { samples } = measure {
        let mut m = Moments::default();
        for s in samples {
            m.push(integrand(s));
        }
        return Ok(NumericEstimate { value: m.mean, stderr: m.stderr(), converged: true, samples: m.n });
    }

    let mass = measure.total_mass();
    let (m, converged) = mc_moments(measure.dim(), |rng, x| measure.sample(rng, x), budget, integrand)?;
    if !m.mean.is_finite() {
        return Err(Error::Numeric("Monte Carlo produced a non-finite value".into()));
    }
    Ok(NumericEstimate { value: mass * m.mean, stderr: mass * m.stderr(), converged, samples: m.n })
}
