//! Fitting: NLL and its gradient in `M`, PSD projection, projected gradient
//! descent, convergence-bound checks and hidden-layer training.

mod bounds;
mod hidden;
mod objective;
mod pgd;
mod project;

pub use bounds::{linear_rate_check, sublinear_bound_check, BoundCheck, RateCheck};
pub use hidden::{hidden_gradients, train_hidden, HiddenGradient};
pub use objective::{grad_m, map_objective, nll, Problem};
pub use pgd::{lipschitz_beta, pgd_fit, pgd_on_problem, PgdOutcome};
pub use project::{project_diagonal, project_psd, EIG_TOL};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IntensityModel;
use crate::pointprocess::NllValue;

/// Step-size rule for PGD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSize {
    /// `η = 1/β` with `β = ε₂ + 1/ε₁²`. The objective is then non-increasing.
    Lipschitz,
    /// `η = 1/β` with `β = ε₂ + N/ε₁²`, a more conservative constant.
    LipschitzPerEvent,
    /// Armijo backtracking on the projected step, starting from `initial`
    /// and multiplying by `shrink` on failure; a successful step lets the next
    /// one start from `η / shrink`.
    Backtracking {
        #[serde(default = "default_initial")]
        initial: f64,
        #[serde(default = "default_shrink")]
        shrink: f64,
    },
    Fixed { eta: f64 },
}

fn default_initial() -> f64 {
    1.0
}
fn default_shrink() -> f64 {
    0.5
}

/// Hidden-layer treatment during fitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HiddenTraining {
    Frozen,
    /// AdamW on `(W, b)` (decoupled weight decay), one full-batch step per
    /// epoch followed by `pgd_steps_per_epoch` PGD steps on `M`.
    Train {
        epochs: usize,
        learning_rate: f64,
        #[serde(default = "default_pgd_steps")]
        pgd_steps_per_epoch: usize,
        #[serde(default = "default_weight_decay")]
        weight_decay: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        adam_eps: f64,
        /// Multiplies the learning rate after every epoch.
        #[serde(default = "default_lr_decay")]
        lr_decay: f64,
        /// Biases are never trained for kernels that require zero bias.
        #[serde(default = "default_true")]
        train_bias: bool,
    },
}

fn default_pgd_steps() -> usize {
    1
}
fn default_weight_decay() -> f64 {
    0.01
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_lr_decay() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

impl HiddenTraining {
    /// AdamW with PyTorch defaults.
    pub fn adamw(epochs: usize, learning_rate: f64, pgd_steps_per_epoch: usize) -> Self {
        HiddenTraining::Train {
            epochs,
            learning_rate,
            pgd_steps_per_epoch,
            weight_decay: default_weight_decay(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            lr_decay: 1.0,
            train_bias: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Jitter `ε₁ > 0`; overrides the model's readout jitter.
    pub eps1: f64,
    /// Ridge weight `ε₂ ≥ 0`.
    #[serde(default)]
    pub eps2: f64,
    /// PGD steps (for frozen hidden layers).
    pub steps: usize,
    #[serde(default = "default_step_size")]
    pub step_size: StepSize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub hidden: HiddenTraining,
    /// Constrain `M` to be diagonal (mixture of squared features).
    #[serde(default)]
    pub diagonal: bool,
    /// Convergence threshold on the projected-gradient norm `‖Mₜ − Mₜ₊₁‖_F / η`.
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    /// Stop as soon as the threshold is met.
    #[serde(default)]
    pub stop_on_convergence: bool,
    /// Keep every iterate `Mₜ` in the report (for bound checks).
    #[serde(default)]
    pub record_iterates: bool,
}

fn default_step_size() -> StepSize {
    StepSize::Lipschitz
}
fn default_hidden() -> HiddenTraining {
    HiddenTraining::Frozen
}
fn default_grad_tol() -> f64 {
    1e-6
}

impl FitConfig {
    pub fn new(eps1: f64, eps2: f64, steps: usize) -> Self {
        FitConfig {
            eps1,
            eps2,
            steps,
            step_size: StepSize::Lipschitz,
            seed: 0,
            hidden: HiddenTraining::Frozen,
            diagonal: false,
            grad_tol: default_grad_tol(),
            stop_on_convergence: false,
            record_iterates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps1.is_finite() && self.eps1 > 0.0) {
            return Err(Error::invalid(format!("eps1 must be positive for PGD, got {}", self.eps1)));
        }
        if !(self.eps2.is_finite() && self.eps2 >= 0.0) {
            return Err(Error::invalid(format!("eps2 must be nonnegative, got {}", self.eps2)));
        }
        match self.step_size {
            StepSize::Fixed { eta } if !(eta.is_finite() && eta > 0.0) => {
                return Err(Error::invalid(format!("fixed step size must be positive, got {eta}")))
            }
            StepSize::Backtracking { initial, shrink }
                if !(initial.is_finite() && initial > 0.0 && shrink > 0.0 && shrink < 1.0) =>
            {
                return Err(Error::invalid("backtracking needs initial > 0 and 0 < shrink < 1"))
            }
            _ => {}
        }
        if let HiddenTraining::Train { learning_rate, beta1, beta2, lr_decay, weight_decay, .. } = self.hidden {
            let ok = learning_rate.is_finite()
                && learning_rate >= 0.0
                && (0.0..1.0).contains(&beta1)
                && (0.0..1.0).contains(&beta2)
                && lr_decay > 0.0
                && weight_decay >= 0.0;
            if !ok {
                return Err(Error::invalid("AdamW settings out of range"));
            }
        }
        Ok(())
    }
}

/// Per-epoch record of hidden-layer training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective: f64,
    pub hidden_grad_norm: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `C(Mₜ)` for `t = 0, 1, …` (initial value first).
    pub objective_trace: Vec<f64>,
    /// Projected-gradient norms `‖Mₜ − Mₜ₊₁‖_F / ηₜ`.
    pub gradient_norms: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    pub final_objective: f64,
    pub nll: NllValue,
    pub beta: f64,
    pub converged: bool,
    pub steps_taken: usize,
    pub feature_seconds: f64,
    pub optimise_seconds: f64,
    pub wall_clock_seconds: f64,
    #[serde(skip)]
    pub iterates: Vec<DMatrix<f64>>,
    pub model: IntensityModel,
}

impl FitReport {
    /// Mean wall-clock time per PGD step.
    pub fn seconds_per_step(&self) -> f64 {
        self.optimise_seconds / self.steps_taken.max(1) as f64
    }
}

#[cfg(test)]
mod tests;
