//! Synthetic intensity `λ(x) = 0.5 exp(5 − 3 d(x, ℛ))` around a letter "R".
//!
//! The default `ℛ` is five segments inside `[0.2, 0.8]²`:
//!
//! | from | to |
//! |---|---|
//! | (0.30, 0.20) | (0.30, 0.80) |
//! | (0.30, 0.80) | (0.65, 0.80) |
//! | (0.65, 0.80) | (0.65, 0.50) |
//! | (0.65, 0.50) | (0.30, 0.50) |
//! | (0.45, 0.50) | (0.70, 0.20) |
//!
//! [`SyntheticR::benchmark`] scales geometry and window by
//! [`R_BENCHMARK_SCALE`], which makes the letter about 2 × 3.2 units in a
//! `[0, 5.35]²` window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnk::BaseMeasure;

use super::{Domain, Intensity};

/// `0.5 e⁵`, the intensity on `ℛ`.
pub const R_LAMBDA_MAX: f64 = 0.5 * 148.413_159_102_576_6;

/// Side length of the benchmark window (and scale of the geometry).
pub const R_BENCHMARK_SCALE: f64 = 5.35;

/// `Λ` of the default geometry on the unit square (Monte Carlo, 10⁷ samples).
pub const R_UNIT_INTEGRAL: f64 = 49.971;
/// `Λ` of the benchmark configuration (Monte Carlo, 10⁷ samples).
pub const R_BENCHMARK_INTEGRAL: f64 = 487.48;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RGeometry {
    pub segments: Vec<[[f64; 2]; 2]>,
}

impl Default for RGeometry {
    fn default() -> Self {
        RGeometry {
            segments: vec![
                [[0.30, 0.20], [0.30, 0.80]],
                [[0.30, 0.80], [0.65, 0.80]],
                [[0.65, 0.80], [0.65, 0.50]],
                [[0.65, 0.50], [0.30, 0.50]],
                [[0.45, 0.50], [0.70, 0.20]],
            ],
        }
    }
}

impl RGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("R geometry needs at least one segment"));
        }
        if self.segments.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("R geometry coordinates must be finite"));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> RGeometry {
        RGeometry { segments: self.segments.iter().map(|seg| seg.map(|p| p.map(|v| v * s))).collect() }
    }

    /// Shortest Euclidean distance from `x` to the union of segments.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.segments
            .iter()
            .map(|[a, b]| {
                let ab = [b[0] - a[0], b[1] - a[1]];
                let ax = [x[0] - a[0], x[1] - a[1]];
                let len2 = ab[0] * ab[0] + ab[1] * ab[1];
                let t = if len2 > 0.0 { ((ax[0] * ab[0] + ax[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let dx = ax[0] - t * ab[0];
                let dy = ax[1] - t * ab[1];
                (dx * dx + dy * dy).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Ground-truth intensity around `ℛ` on a square window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticR {
    pub geometry: RGeometry,
    /// Side length `s` of the window `[0, s]²`.
    pub side: f64,
}

impl SyntheticR {
    /// Default geometry and window scaled by [`R_BENCHMARK_SCALE`].
    pub fn benchmark() -> Self {
        SyntheticR { geometry: RGeometry::default().scaled(R_BENCHMARK_SCALE), side: R_BENCHMARK_SCALE }
    }

    pub fn domain(&self) -> Domain {
        Domain::Base(BaseMeasure::LebesgueRect { a: 0.0, b: self.side, d: 2 })
    }

    /// Upper bound of the intensity (attained on `ℛ`).
    pub fn lambda_max(&self) -> f64 {
        R_LAMBDA_MAX
    }
}

impl Intensity for SyntheticR {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(0.5 * (5.0 - 3.0 * self.geometry.distance(x)).exp())
    }
}

/// Ground truth for `geometry` on the unit square.
pub fn synthetic_r_intensity(geometry: RGeometry) -> Result<SyntheticR> {
    geometry.validate()?;
    Ok(SyntheticR { geometry, side: 1.0 })
}
