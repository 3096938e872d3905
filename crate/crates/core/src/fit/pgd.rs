//! Projected gradient descent on `M` with the hidden layer frozen.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::IntensityModel;
use crate::pointprocess::EventSet;

use super::objective::{nll, Problem};
use super::project::{project_diagonal, project_psd};
use super::{FitConfig, FitReport, StepSize};

/// Slack allowed in the monotonicity and Armijo tests, relative to `max(1, |C|)`.
const MONOTONE_TOL: f64 = 1e-12;

/// `β` of the Lipschitz step-size modes.
pub fn lipschitz_beta(mode: &StepSize, eps1: f64, eps2: f64, n_events: usize) -> Option<f64> {
    match mode {
        StepSize::Lipschitz => Some(eps2 + 1.0 / (eps1 * eps1)),
        StepSize::LipschitzPerEvent => Some(eps2 + n_events.max(1) as f64 / (eps1 * eps1)),
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub struct PgdOutcome {
    pub m: DMatrix<f64>,
    pub objective_trace: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub iterates: Vec<DMatrix<f64>>,
    pub converged: bool,
    pub steps_taken: usize,
    pub beta: f64,
    /// Step size the next call should start from (backtracking only).
    pub next_eta: f64,
}

fn project(m: &DMatrix<f64>, diagonal: bool) -> Result<DMatrix<f64>> {
    if diagonal {
        project_diagonal(m)
    } else {
        project_psd(m)
    }
}

/// Runs `steps` PGD iterations from `m0` (projected first).
///
/// `eta_start` seeds the backtracking step; other modes ignore it.
pub fn pgd_on_problem(
    problem: &Problem,
    m0: &DMatrix<f64>,
    cfg: &FitConfig,
    steps: usize,
    eta_start: Option<f64>,
) -> Result<PgdOutcome> {
    let beta = lipschitz_beta(&cfg.step_size, cfg.eps1, cfg.eps2, problem.n_events()).unwrap_or(f64::NAN);
    let mut m = project(m0, cfg.diagonal)?;
    let (mut c, mut g) = problem.value_and_grad(&m)?;
    if !c.is_finite() {
        return Err(Error::Numeric(format!("initial objective is {c}")));
    }
    let mut out = PgdOutcome {
        m: DMatrix::zeros(0, 0),
        objective_trace: vec![c],
        gradient_norms: Vec::with_capacity(steps),
        step_sizes: Vec::with_capacity(steps),
        iterates: Vec::new(),
        converged: false,
        steps_taken: 0,
        beta,
        next_eta: f64::NAN,
    };
    if cfg.record_iterates {
        out.iterates.push(m.clone());
    }
    let mut eta_bt = match cfg.step_size {
        StepSize::Backtracking { initial, .. } => eta_start.unwrap_or(initial),
        _ => f64::NAN,
    };
    for t in 0..steps {
        let (m_new, c_new, eta, g_new) = match cfg.step_size {
            StepSize::Lipschitz | StepSize::LipschitzPerEvent | StepSize::Fixed { .. } => {
                let eta = match cfg.step_size {
                    StepSize::Fixed { eta } => eta,
                    _ => 1.0 / beta,
                };
                let m_new = project(&(&m - &g * eta), cfg.diagonal)?;
                let (c_new, g_new) = problem.value_and_grad(&m_new)?;
                (m_new, c_new, eta, Some(g_new))
            }
            StepSize::Backtracking { shrink, .. } => {
                let mut eta = eta_bt;
                loop {
                    let m_new = project(&(&m - &g * eta), cfg.diagonal)?;
                    let d = &m_new - &m;
                    let c_new = problem.objective(&m_new);
                    let model = c + g.dot(&d) + d.norm_squared() / (2.0 * eta);
                    if c_new <= model + MONOTONE_TOL * c.abs().max(1.0) {
                        eta_bt = eta / shrink;
                        break (m_new, c_new, eta, None);
                    }
                    eta *= shrink;
                    if eta < 1e-30 {
                        return Err(Error::Numeric(format!("backtracking step size underflow at step {t}")));
                    }
                }
            }
        };
        if !c_new.is_finite() {
            return Err(Error::Numeric(format!("objective became {c_new} at step {t}")));
        }
        if matches!(cfg.step_size, StepSize::Lipschitz | StepSize::LipschitzPerEvent)
            && c_new > c + MONOTONE_TOL * c.abs().max(1.0)
        {
            return Err(Error::ContractViolation(format!(
                "objective increased from {c} to {c_new} at step {t} with eta = 1/beta"
            )));
        }
        let pg = (&m_new - &m).norm() / eta;
        m = m_new;
        g = match g_new {
            Some(g_new) => g_new,
            None => problem.value_and_grad(&m)?.1,
        };
        c = c_new;
        out.objective_trace.push(c);
        out.gradient_norms.push(pg);
        out.step_sizes.push(eta);
        out.steps_taken += 1;
        if cfg.record_iterates {
            out.iterates.push(m.clone());
        }
        if pg <= cfg.grad_tol {
            out.converged = true;
            if cfg.stop_on_convergence {
                break;
            }
        } else {
            out.converged = false;
        }
    }
    out.m = m;
    out.next_eta = eta_bt;
    Ok(out)
}

/// Fits `M` by PGD with the hidden layer frozen. The model's jitter is set to `cfg.eps1`.
pub fn pgd_fit(events: &EventSet, model: &IntensityModel, cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut model = model.clone();
    model.readout_mut().jitter = cfg.eps1;
    model.validate()?;
    let problem = Problem::new(events, &model, cfg.eps2)?;
    let feature_seconds = start.elapsed().as_secs_f64();
    let t_opt = Instant::now();
    let out = pgd_on_problem(&problem, &model.readout().m, cfg, cfg.steps, None)?;
    let optimise_seconds = t_opt.elapsed().as_secs_f64();
    model.readout_mut().m = out.m;
    let nll = nll(events, &model)?;
    Ok(FitReport {
        final_objective: *out.objective_trace.last().expect("initial value recorded"),
        objective_trace: out.objective_trace,
        gradient_norms: out.gradient_norms,
        step_sizes: out.step_sizes,
        epochs: Vec::new(),
        nll,
        beta: out.beta,
        converged: out.converged,
        steps_taken: out.steps_taken,
        feature_seconds,
        optimise_seconds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        iterates: out.iterates,
        model,
    })
}
