//! Dominated thinning sampler and lattice scans.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nnk::BaseMeasure;

use super::{Domain, EventSet, Intensity};

/// Lattice points per dimension used for automatic dominating bounds.
pub const LATTICE_RESOLUTION: usize = 256;
/// Multiplier applied to the lattice maximum.
pub const LATTICE_SAFETY: f64 = 1.05;

/// Draws one realisation of a PPP with intensity `λ ≤ λ_max` on `domain`.
///
/// `N_hom ~ Poisson(λ_max μ(𝕏))` candidates are drawn from the normalised
/// measure and each is kept with probability `λ(x)/λ_max`. Any candidate
/// with `λ(x) > λ_max` aborts with a domination error.
pub fn sample_ppp(lambda: &dyn Intensity, lambda_max: f64, domain: &Domain, seed: u64) -> Result<EventSet> {
    domain.validate()?;
    if lambda.dim() != domain.dim() {
        return Err(Error::invalid(format!("intensity has dimension {}, domain {}", lambda.dim(), domain.dim())));
    }
    if !(lambda_max.is_finite() && lambda_max >= 0.0) {
        return Err(Error::invalid(format!("dominating bound must be finite and nonnegative, got {lambda_max}")));
    }
    let mean = lambda_max * domain.total_mass();
    if mean == 0.0 {
        return Ok(EventSet::empty(domain.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_hom = Poisson::new(mean).map_err(|e| Error::Numeric(format!("Poisson mean {mean}: {e}")))?.sample(&mut rng) as usize;
    let d = domain.dim();
    let mut candidates = vec![0.0; n_hom * d];
    let mut uniforms = Vec::with_capacity(n_hom);
    for x in candidates.chunks_mut(d) {
        domain.sample(&mut rng, x);
        uniforms.push(rng.random::<f64>());
    }
    let values: Vec<f64> = candidates.par_chunks(d).map(|x| lambda.value(x)).collect::<Result<_>>()?;
    let mut points = Vec::new();
    for (i, (x, (&v, &u))) in candidates.chunks(d).zip(values.iter().zip(&uniforms)).enumerate() {
        if !(v >= 0.0) {
            return Err(Error::Numeric(format!("intensity {v} at candidate {i}")));
        }
        if v > lambda_max {
            return Err(Error::DominationViolation { value: v, bound: lambda_max, point: x.to_vec() });
        }
        if u * lambda_max < v {
            points.extend_from_slice(x);
        }
    }
    EventSet::new(points, domain.clone())
}

/// A regular lattice over a domain. Rectangles and intervals use `res` points
/// per axis including both ends; the circle uses `res` equally spaced angles;
/// the 2-sphere uses a `res × res` longitude/latitude grid (longitude in
/// `[−π, π)`, latitude in `[−π/2, π/2]`); products take the Cartesian product.
#[derive(Clone, Debug)]
pub struct Lattice {
    factors: Vec<(BaseMeasure, Vec<usize>)>,
}

fn axis(lo: f64, hi: f64, res: usize, k: usize) -> f64 {
    if res == 1 {
        0.5 * (lo + hi)
    } else {
        lo + (hi - lo) * k as f64 / (res - 1) as f64
    }
}

fn measure_shape(m: &BaseMeasure, res: usize) -> Result<Vec<usize>> {
    Ok(match *m {
        BaseMeasure::LebesgueRect { d, .. } => vec![res; d],
        BaseMeasure::LebesgueInterval { .. } => vec![res],
        BaseMeasure::UniformSphere { d: 2 } => vec![res],
        BaseMeasure::UniformSphere { d: 3 } => vec![res, res],
        BaseMeasure::Empirical { ref samples } => vec![samples.len()],
        _ => {
            return Err(Error::unsupported(format!(
                "no lattice for measure {}",
                crate::nnk::measure_name(m)
            )))
        }
    })
}

impl Lattice {
    pub fn new(domain: &Domain, res: usize) -> Result<Self> {
        if res == 0 {
            return Err(Error::invalid("lattice resolution must be positive"));
        }
        let measures = match domain {
            Domain::Base(m) => vec![m.clone()],
            Domain::Product(a, b) => vec![a.clone(), b.clone()],
        };
        let factors = measures
            .into_iter()
            .map(|m| measure_shape(&m, res).map(|s| (m, s)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Lattice { factors })
    }

    /// Lattice axes, outermost first; points are enumerated row-major.
    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().flat_map(|(_, s)| s.iter().copied()).collect()
    }

    /// Number of lattice points, or `None` on overflow.
    pub fn checked_len(&self) -> Option<usize> {
        self.shape().into_iter().try_fold(1usize, |acc, s| acc.checked_mul(s))
    }

    pub fn len(&self) -> usize {
        self.checked_len().unwrap_or(usize::MAX)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|(m, _)| m.dim()).sum()
    }

    /// Writes point `k` into `out`.
    pub fn point(&self, mut k: usize, out: &mut [f64]) {
        // peel indices from the innermost axis outwards
        let mut offset = out.len();
        for (m, shape) in self.factors.iter().rev() {
            let mut idx = vec![0; shape.len()];
            for (i, &s) in shape.iter().enumerate().rev() {
                idx[i] = k % s;
                k /= s;
            }
            let d = m.dim();
            offset -= d;
            let x = &mut out[offset..offset + d];
            match *m {
                BaseMeasure::LebesgueRect { a, b, .. } => {
                    for (xr, &i) in x.iter_mut().zip(&idx) {
                        *xr = axis(a, b, shape[0], i);
                    }
                }
                BaseMeasure::LebesgueInterval { t1, t2 } => x[0] = axis(t1, t2, shape[0], idx[0]),
                BaseMeasure::UniformSphere { d: 2 } => {
                    let th = 2.0 * PI * idx[0] as f64 / shape[0] as f64;
                    x[0] = th.cos();
                    x[1] = th.sin();
                }
                BaseMeasure::UniformSphere { .. } => {
                    let lon = -PI + 2.0 * PI * idx[0] as f64 / shape[0] as f64;
                    let lat = axis(-0.5 * PI, 0.5 * PI, shape[1], idx[1]);
                    x[0] = lat.cos() * lon.cos();
                    x[1] = lat.cos() * lon.sin();
                    x[2] = lat.sin();
                }
                BaseMeasure::Empirical { ref samples } => x.copy_from_slice(&samples[idx[0]]),
                BaseMeasure::IsotropicGaussian { .. } => unreachable!("rejected in Lattice::new"),
            }
        }
    }

    /// Evaluates `λ` at every lattice point, in order.
    pub fn evaluate(&self, lambda: &dyn Intensity) -> Result<Vec<f64>> {
        let d = self.dim();
        (0..self.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; d],
                |x, k| {
                    self.point(k, x);
                    lambda.value(x)
                },
            )
            .collect()
    }

    /// Maximum of `λ` over the lattice.
    pub fn max(&self, lambda: &dyn Intensity) -> Result<f64> {
        let d = self.dim();
        (0..self.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; d],
                |x, k| {
                    self.point(k, x);
                    lambda.value(x)
                },
            )
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    }
}

/// `1.05 ×` the maximum of `λ` over a lattice with `res` points per axis.
pub fn lattice_bound(lambda: &dyn Intensity, domain: &Domain, res: usize) -> Result<f64> {
    Ok(LATTICE_SAFETY * Lattice::new(domain, res)?.max(lambda)?)
}
