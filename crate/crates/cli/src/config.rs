//! Run configuration: one TOML file per run, parsed strictly.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use sqnn_ppp::{ActivationKind, BaseMeasure, Domain, FitConfig};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub data: Option<DataSection>,
    pub model: Option<ModelSection>,
    pub fit: Option<FitConfig>,
    pub eval: Option<EvalSection>,
    pub simulate: Option<SimulateSection>,
    pub grid: Option<GridSection>,
    pub bench: Option<BenchSection>,
}

/// Training events. The domain is taken from the model.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub events: PathBuf,
    /// Fit on the retained part of a thinning split with this `p`; the
    /// removed part is written next to the model as `test_events.csv`.
    pub split_p: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// One exponential unit with zero weights and bias: `λ(x) = exp(c + vᵀx)` once trained.
    LogLinear,
}

/// Either a saved model (`path`) or a description of a fresh one.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub path: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub activation: Option<ActivationKind>,
    pub measure: Option<BaseMeasure>,
    pub width: Option<usize>,
    #[serde(default = "one")]
    pub weight_std: f64,
    #[serde(default)]
    pub bias_std: f64,
    /// Second (temporal) factor of a product model; shares the width.
    pub time: Option<FactorSection>,
    /// Defaults to `N / μ(𝕏)` after feature normalisation.
    pub alpha: Option<f64>,
    #[serde(default = "yes")]
    pub normalize: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSection {
    pub activation: ActivationKind,
    pub measure: BaseMeasure,
    #[serde(default = "one")]
    pub weight_std: f64,
    #[serde(default)]
    pub bias_std: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub model: PathBuf,
    pub events: PathBuf,
    /// Retention probability the model was fitted with. When set, the model
    /// is rescaled by `(1 − p)/p` for the test events and by `1/p` for RMSE.
    pub p: Option<f64>,
    #[serde(default = "mc_default")]
    pub mc_samples: u64,
    pub truth: Option<Truth>,
    #[serde(default = "rmse_default")]
    pub rmse_samples: usize,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Truth {
    RBenchmark,
    Model { path: PathBuf },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub source: Source,
    /// Dominating rate; defaults to a lattice scan of the intensity.
    pub lambda_max: Option<f64>,
    #[serde(default = "lattice_default")]
    pub lattice_resolution: usize,
    #[serde(default)]
    pub coordinates: Coordinates,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    Homogeneous { rate: f64, domain: Domain },
    Model { path: PathBuf },
    RBenchmark,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    #[default]
    Cartesian,
    LonLat,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub model: PathBuf,
    /// Points per lattice axis.
    pub resolution: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub sizes: Vec<usize>,
    #[serde(default = "bench_width")]
    pub width: usize,
    #[serde(default = "bench_steps")]
    pub steps: usize,
    #[serde(default = "bench_repeats")]
    pub repeats: usize,
    #[serde(default = "bench_dim")]
    pub dim: usize,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn mc_default() -> u64 {
    1_000_000
}
fn rmse_default() -> usize {
    100_000
}
fn lattice_default() -> usize {
    sqnn_ppp::pointprocess::LATTICE_RESOLUTION
}
fn bench_width() -> usize {
    100
}
fn bench_steps() -> usize {
    5
}
fn bench_repeats() -> usize {
    3
}
fn bench_dim() -> usize {
    2
}

/// A parsed config with its hash and the directory relative paths resolve against.
pub struct Loaded {
    pub config: RunConfig,
    pub hash: String,
    pub base: PathBuf,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Resolves `p` and checks it exists.
    pub fn input(&self, p: &Path, field: &str) -> Result<PathBuf, String> {
        let r = self.resolve(p);
        if r.exists() {
            Ok(r)
        } else {
            Err(format!("{field}: file '{}' does not exist", r.display()))
        }
    }
}

pub fn load(path: &Path) -> Result<Loaded, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config '{}': {e}", path.display()))?;
    let config: RunConfig =
        toml::from_str(&text).map_err(|e| format!("config '{}': {e}", path.display()))?;
    let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, hash, base })
}
