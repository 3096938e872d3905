//! Test NLL, count error, RMSE against a ground truth, and Monte Carlo `Λ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IntensityModel;
use crate::nnk::numeric::mc_moments;
use crate::nnk::NumericBudget;

use super::{Domain, EventSet, Intensity, IntensityMeasure};

/// Poisson negative log likelihood `Λ − Σ log λ(xᵢ)` (the `log N!` constant is
/// dropped). `raw` adds back `N log α`, i.e. it is the objective written
/// with `Tr((M + ε₁I) K̃(xᵢ))` inside the logarithm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NllValue {
    pub total: f64,
    /// `total / max(N, 1)`.
    pub per_event: f64,
    pub raw: f64,
    pub integrated: f64,
    pub n_events: usize,
    /// First event with zero intensity, which makes the NLL infinite.
    pub zero_intensity_event: Option<usize>,
}

/// Assembles an [`NllValue`] from `Λ` and the intensities at the events.
/// Logarithms are summed in event order.
pub fn poisson_nll(integrated: f64, intensities: &[f64], log_alpha: f64) -> NllValue {
    let n = intensities.len();
    let zero = intensities.iter().position(|&v| !(v > 0.0));
    let total = match zero {
        Some(_) => f64::INFINITY,
        None => integrated - intensities.iter().map(|v| v.ln()).sum::<f64>(),
    };
    NllValue {
        total,
        per_event: total / n.max(1) as f64,
        raw: total + n as f64 * log_alpha,
        integrated,
        n_events: n,
        zero_intensity_event: zero,
    }
}

/// NLL of a test realisation under `λ_test`.
pub fn test_nll(events: &EventSet, lambda: &dyn IntensityMeasure) -> Result<NllValue> {
    if events.dim() != lambda.dim() {
        return Err(Error::invalid(format!("events have dimension {}, intensity {}", events.dim(), lambda.dim())));
    }
    let values: Vec<f64> = events.points().par_chunks(events.dim()).map(|x| lambda.value(x)).collect::<Result<_>>()?;
    Ok(poisson_nll(lambda.integrated()?, &values, lambda.log_scale()))
}

/// `|Λ_test − N_test| / N_test` with `Λ_test` the rescaled model's integral.
pub fn count_percent_error(fit: &IntensityModel, test: &EventSet, p: f64) -> Result<f64> {
    let n = test.len();
    if n == 0 {
        return Err(Error::UndefinedMetric("count percent error needs at least one test event".into()));
    }
    let lambda_test = super::rescale_for_test(fit, p)?.integrated_intensity()?;
    Ok((lambda_test - n as f64).abs() / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseEstimate {
    pub value: f64,
    /// Jackknife standard error.
    pub stderr: f64,
    pub samples: usize,
}

/// `√((1/P) Σ (λ_fit(zᵢ) − λ_GT(zᵢ))²)` over `P` points drawn from the
/// normalised domain measure.
pub fn rmse(fit: &dyn Intensity, truth: &dyn Intensity, domain: &Domain, samples: usize, seed: u64) -> Result<RmseEstimate> {
    let d = domain.dim();
    if fit.dim() != d || truth.dim() != d {
        return Err(Error::invalid("intensities and domain differ in dimension"));
    }
    if samples < 2 {
        return Err(Error::invalid("RMSE needs at least two samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; samples * d];
    for x in z.chunks_mut(d) {
        domain.sample(&mut rng, x);
    }
    let sq: Vec<f64> = z
        .par_chunks(d)
        .map(|x| Ok((fit.value(x)? - truth.value(x)?).powi(2)))
        .collect::<Result<_>>()?;
    let p = samples as f64;
    let sum: f64 = sq.iter().sum();
    let value = (sum / p).sqrt();
    // leave-one-out RMSEs
    let loo: Vec<f64> = sq.iter().map(|e| ((sum - e).max(0.0) / (p - 1.0)).sqrt()).collect();
    let mean = loo.iter().sum::<f64>() / p;
    let var = (p - 1.0) / p * loo.iter().map(|r| (r - mean).powi(2)).sum::<f64>();
    Ok(RmseEstimate { value, stderr: var.sqrt(), samples })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
}

/// Monte Carlo estimate of `∫ λ dμ` from exactly `samples` draws.
pub fn mc_integrate(lambda: &dyn Intensity, domain: &Domain, samples: u64, seed: u64) -> Result<McEstimate> {
    domain.validate()?;
    if lambda.dim() != domain.dim() {
        return Err(Error::invalid("intensity and domain differ in dimension"));
    }
    let budget = NumericBudget::fixed_samples(samples, seed);
    let (m, _) = mc_moments(
        domain.dim(),
        |rng, x| domain.sample(rng, x),
        &budget,
        |x| lambda.value(x).unwrap_or(f64::NAN),
    )?;
    if !m.mean.is_finite() {
        return Err(Error::Numeric("intensity evaluation failed during Monte Carlo integration".into()));
    }
    let mass = domain.total_mass();
    Ok(McEstimate { value: mass * m.mean, stderr: mass * m.stderr(), samples: m.n })
}
