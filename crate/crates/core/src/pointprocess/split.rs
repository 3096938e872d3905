//! Independent thinning into retained and removed sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::IntensityModel;

use super::{EventSet, Intensity, IntensityMeasure};

/// Default retention probability.
pub const DEFAULT_P: f64 = 0.8;

#[derive(Clone, Debug, PartialEq)]
pub struct ThinningSplit {
    pub retained: EventSet,
    pub removed: EventSet,
    pub p: f64,
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("retention probability must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// Keeps each event independently with probability `p`. Retained points
/// form a PPP with intensity `pλ`, removed points one with `(1 − p)λ`,
/// and the two are independent.
pub fn split(events: &EventSet, p: f64, seed: u64) -> Result<ThinningSplit> {
    check_p(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut keep, mut drop) = (Vec::new(), Vec::new());
    for i in 0..events.len() {
        if rng.random::<f64>() < p {
            keep.push(i);
        } else {
            drop.push(i);
        }
    }
    Ok(ThinningSplit { retained: events.select(&keep), removed: events.select(&drop), p })
}

/// `x ↦ c λ(x)`.
#[derive(Clone, Debug)]
pub struct Scaled<I> {
    pub inner: I,
    pub factor: f64,
}

impl<I: Intensity> Intensity for Scaled<I> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.factor * self.inner.value(x)?)
    }
}

impl<I: IntensityMeasure> IntensityMeasure for Scaled<I> {
    fn integrated(&self) -> Result<f64> {
        Ok(self.factor * self.inner.integrated()?)
    }

    fn log_scale(&self) -> f64 {
        self.inner.log_scale() + self.factor.ln()
    }
}

/// Intensity for the removed set given a fit on the retained set:
/// `λ_{1−p} = ((1 − p)/p) λ_p`. For models only `α` changes.
pub fn rescale_for_test(fit: &IntensityModel, p: f64) -> Result<IntensityModel> {
    check_p(p)?;
    fit.with_alpha_scaled((1.0 - p) / p)
}
