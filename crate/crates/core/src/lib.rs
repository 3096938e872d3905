//! Poisson point process intensities parameterised as the squared norm of a
//! two-layer network.
//!
//! The intensity is `λ(x) = α ‖V ψ(x)‖²` with `ψ(x) = σ(W t(x) + b)` and
//! `VᵀV = M + ε₁ I` for a PSD matrix `M`. Writing the intensity as a trace
//! against the Gram matrix of a neural-network kernel gives the integrated
//! intensity `Λ = α Tr((M + ε₁ I) K)` in closed form whenever the kernel has
//! one, and makes the negative log likelihood convex in `M`.
//!
//! Module map:
//!
//! - [`nnk`]: closed-form neural-network kernels, a numeric oracle, Gram assembly.
//! - [`model`]: feature maps, intensity, integrated intensity, product spaces, model files.
//! - [`fit`]: negative log likelihood, its gradient, PSD projection, PGD, hidden-layer training.
//! - [`pointprocess`]: domains, event sets, simulation, thinning, metrics, the synthetic "R" intensity.

pub mod error;
pub mod fit;
pub mod model;
pub mod nnk;
pub mod pointprocess;

pub use error::{Error, Result};
pub use fit::{FitConfig, FitReport, HiddenTraining, StepSize};
pub use model::{Factor, HiddenLayer, IntensityModel, Readout, Structure, Window};
pub use nnk::{ActivationKind, BaseMeasure, HiddenUnitParams, KernelMatrix, KernelSpec, Warping};
pub use pointprocess::{Domain, EventSet, Intensity, IntensityMeasure};

/// Version string written into every output file header.
pub const TOOL_VERSION: &str = concat!("sqnn-ppp ", env!("CARGO_PKG_VERSION"));
