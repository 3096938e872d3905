//! Domains, event sets, simulation, thinning, metrics and the synthetic "R" intensity.

mod csvio;
mod metrics;
mod rbench;
mod sampler;
mod split;

pub use csvio::{lonlat_to_unit, read_events_csv, unit_to_lonlat, write_events_csv, CoordinateStyle};
pub use metrics::{
    count_percent_error, mc_integrate, poisson_nll, rmse, test_nll, McEstimate, NllValue, RmseEstimate,
};
pub use rbench::{
    synthetic_r_intensity, RGeometry, SyntheticR, R_BENCHMARK_INTEGRAL, R_BENCHMARK_SCALE, R_LAMBDA_MAX, R_UNIT_INTEGRAL,
};
pub use sampler::{lattice_bound, sample_ppp, Lattice, LATTICE_RESOLUTION, LATTICE_SAFETY};
pub use split::{rescale_for_test, split, Scaled, ThinningSplit, DEFAULT_P};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IntensityModel;
use crate::nnk::BaseMeasure;

/// Observation domain: a base measure, or the product `𝕐 × 𝕋` of two.
/// Product points are stored as spatial coordinates followed by temporal ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Base(BaseMeasure),
    Product(BaseMeasure, BaseMeasure),
}

impl Domain {
    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Base(m) => m.validate(),
            Domain::Product(a, b) => {
                a.validate()?;
                b.validate()
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Base(m) => m.dim(),
            Domain::Product(a, b) => a.dim() + b.dim(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Domain::Base(m) => m.total_mass(),
            Domain::Product(a, b) => a.total_mass() * b.total_mass(),
        }
    }

    /// One draw from the normalised measure.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Domain::Base(m) => m.sample(rng, out),
            Domain::Product(a, b) => {
                let (y, t) = out.split_at_mut(a.dim());
                a.sample(rng, y);
                b.sample(rng, t);
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Base(m) => m.contains(x),
            Domain::Product(a, b) => x.len() == self.dim() && a.contains(&x[..a.dim()]) && b.contains(&x[a.dim()..]),
        }
    }
}

/// Points `{xᵢ}` in a domain, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EventSet {
    points: Vec<f64>,
    domain: Domain,
}

impl EventSet {
    /// Checks that every point lies in the domain.
    pub fn new(points: Vec<f64>, domain: Domain) -> Result<Self> {
        domain.validate()?;
        let d = domain.dim();
        if points.len() % d != 0 {
            return Err(Error::invalid(format!("{} coordinates do not form {d}-dimensional points", points.len())));
        }
        if let Some(i) = points.chunks(d).position(|x| !domain.contains(x)) {
            return Err(Error::invalid(format!("event {i} lies outside the domain")));
        }
        Ok(EventSet { points, domain })
    }

    pub fn empty(domain: Domain) -> Self {
        EventSet { points: Vec::new(), domain }
    }

    pub fn from_rows(rows: &[Vec<f64>], domain: Domain) -> Result<Self> {
        EventSet::new(rows.iter().flatten().copied().collect(), domain)
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Row-major coordinates.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> std::slice::Chunks<'_, f64> {
        self.points.chunks(self.dim())
    }

    /// Events with indices in `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> EventSet {
        let mut points = Vec::with_capacity(idx.len() * self.dim());
        for &i in idx {
            points.extend_from_slice(self.point(i));
        }
        EventSet { points, domain: self.domain.clone() }
    }
}

/// An evaluable intensity `λ(x) ≥ 0`.
pub trait Intensity: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<f64>;
}

/// An intensity whose integral over its domain is known.
pub trait IntensityMeasure: Intensity {
    /// `Λ = ∫ λ dμ` over the full domain.
    fn integrated(&self) -> Result<f64>;

    /// `log α` for scaled-feature models; the raw objective drops `N log α`.
    fn log_scale(&self) -> f64 {
        0.0
    }
}

impl Intensity for IntensityModel {
    fn dim(&self) -> usize {
        IntensityModel::dim(self)
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.intensity(x)
    }
}

impl IntensityMeasure for IntensityModel {
    fn integrated(&self) -> Result<f64> {
        self.integrated_intensity()
    }

    fn log_scale(&self) -> f64 {
        self.alpha().ln()
    }
}

/// `λ ≡ c` on a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Homogeneous {
    pub rate: f64,
    pub domain: Domain,
}

impl Homogeneous {
    pub fn new(rate: f64, domain: Domain) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::invalid(format!("rate must be finite and nonnegative, got {rate}")));
        }
        domain.validate()?;
        Ok(Homogeneous { rate, domain })
    }

    /// Maximum-likelihood homogeneous fit `λ ≡ N / μ(𝕏)`.
    pub fn mle(events: &EventSet) -> Self {
        Homogeneous { rate: events.len() as f64 / events.domain().total_mass(), domain: events.domain().clone() }
    }
}

impl Intensity for Homogeneous {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn value(&self, _x: &[f64]) -> Result<f64> {
        Ok(self.rate)
    }
}

impl IntensityMeasure for Homogeneous {
    fn integrated(&self) -> Result<f64> {
        Ok(self.rate * self.domain.total_mass())
    }
}

/// Wraps a closure as an [`Intensity`].
pub struct FnIntensity<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnIntensity<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnIntensity { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Intensity for FnIntensity<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok((self.f)(x))
    }
}
