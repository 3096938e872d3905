//! Gradients of the MAP objective with respect to the hidden layer, and
//! joint training of `(W, b)` and `M`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::IntensityModel;
use crate::nnk::{gram_contraction_grad, ClosedForm, KernelMode};
use crate::pointprocess::EventSet;

use super::objective::{nll, Problem};
use super::pgd::{lipschitz_beta, pgd_fit, pgd_on_problem};
use super::{EpochRecord, FitConfig, FitReport, HiddenTraining};

const CHUNK: usize = 2048;

/// `∂C/∂W` and `∂C/∂b` for every factor (one entry for single models, space then time for products).
#[derive(Clone, Debug)]
pub struct HiddenGradient {
    pub objective: f64,
    pub w: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
}

impl HiddenGradient {
    pub fn norm(&self) -> f64 {
        let s: f64 = self.w.iter().map(|w| w.norm_squared()).sum::<f64>()
            + self.b.iter().map(|b| b.norm_squared()).sum::<f64>();
        s.sqrt()
    }
}

fn closed_forms(model: &IntensityModel) -> Result<Vec<ClosedForm>> {
    if !matches!(model.kernel_mode(), KernelMode::ClosedForm) {
        return Err(Error::unsupported("hidden-layer gradients need closed-form kernels"));
    }
    model.structure().factors().iter().map(|f| f.spec().closed_form()).collect()
}

/// Gradient of `C(M) = NLL/N' + (ε₂/2)‖M‖²_F` in the hidden-layer parameters at the model's readout.
pub fn hidden_gradients(events: &EventSet, model: &IntensityModel, eps2: f64) -> Result<HiddenGradient> {
    let closed = closed_forms(model)?;
    let factors = model.structure().factors();
    let n = model.width();
    let n_ev = events.len();
    let s = 1.0 / n_ev.max(1) as f64;
    let alpha = model.alpha();
    let a = model.readout().effective();

    // integral term
    let grams = model.factor_grams()?;
    let base = &a * (alpha * s);
    let mut gw: Vec<DMatrix<f64>> = Vec::with_capacity(factors.len());
    let mut gb: Vec<DVector<f64>> = Vec::with_capacity(factors.len());
    for (f, factor) in factors.iter().enumerate() {
        let coeff = match grams.len() {
            1 => base.clone(),
            _ => base.component_mul(grams[1 - f].matrix()),
        };
        let g = gram_contraction_grad(&factor.hidden.units(), &closed[f], &coeff)?;
        let dim = factor.hidden.warped_dim();
        gw.push(DMatrix::from_fn(n, dim, |k, r| g[k].0[r]));
        gb.push(DVector::from_fn(n, |k, _| g[k].1));
    }

    // event term
    let dims: Vec<usize> = factors.iter().map(|f| f.measure.dim()).collect();
    let offsets: Vec<usize> = dims.iter().scan(0, |o, d| {
        let s = *o;
        *o += d;
        Some(s)
    }).collect();
    for factor in &factors {
        if factor.hidden.activation.derivative(0.0).is_none() {
            return Err(Error::unsupported(format!(
                "activation {:?} has no derivative",
                factor.hidden.activation
            )));
        }
    }
    let starts: Vec<usize> = (0..n_ev).step_by(CHUNK).collect();
    let partials: Vec<Result<(f64, Vec<DMatrix<f64>>, Vec<DVector<f64>>)>> = starts
        .par_iter()
        .map(|&start| {
            let mut log_q = 0.0;
            let mut pw: Vec<DMatrix<f64>> = factors.iter().map(|f| DMatrix::zeros(n, f.hidden.warped_dim())).collect();
            let mut pb: Vec<DVector<f64>> = factors.iter().map(|_| DVector::zeros(n)).collect();
            let mut z = vec![vec![0.0; n]; factors.len()];
            let mut act = vec![vec![0.0; n]; factors.len()];
            for i in start..(start + CHUNK).min(n_ev) {
                let x = events.point(i);
                for (f, factor) in factors.iter().enumerate() {
                    let xf = &x[offsets[f]..offsets[f] + dims[f]];
                    factor.hidden.preactivations(xf, &mut z[f]);
                    for k in 0..n {
                        act[f][k] = factor.hidden.activation.eval(z[f][k]);
                    }
                }
                let psi = DVector::from_fn(n, |k, _| act.iter().map(|v| v[k]).product::<f64>());
                let ap = &a * &psi;
                let q = psi.dot(&ap);
                if !(q > 0.0) {
                    return Err(Error::SingularEvent { index: i });
                }
                log_q += q.ln();
                for (f, factor) in factors.iter().enumerate() {
                    let xf = &x[offsets[f]..offsets[f] + dims[f]];
                    let t = factor.hidden.warping.apply(xf);
                    for k in 0..n {
                        let others: f64 = (0..factors.len()).filter(|&g| g != f).map(|g| act[g][k]).product();
                        let d = factor.hidden.activation.derivative(z[f][k]).unwrap_or(0.0);
                        let gz = -2.0 * s * ap[k] / q * d * others;
                        if gz == 0.0 {
                            continue;
                        }
                        for (r, tr) in t.iter().enumerate() {
                            pw[f][(k, r)] += gz * tr;
                        }
                        pb[f][k] += gz;
                    }
                }
            }
            Ok((log_q, pw, pb))
        })
        .collect();
    let mut log_q = 0.0;
    for p in partials {
        let (lq, pw, pb) = p?;
        log_q += lq;
        for f in 0..factors.len() {
            gw[f] += &pw[f];
            gb[f] += &pb[f];
        }
    }
    let integral = alpha * a.component_mul(model.gram()?.matrix()).sum();
    let nll = integral - log_q - n_ev as f64 * alpha.ln();
    let objective = nll * s + 0.5 * eps2 * model.readout().m.norm_squared();
    Ok(HiddenGradient { objective, w: gw, b: gb })
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Adam { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// Trains `(W, b)` with AdamW interleaved with PGD on `M`.
///
/// With `HiddenTraining::Frozen` this is [`pgd_fit`].
pub fn train_hidden(events: &EventSet, model: &IntensityModel, cfg: &FitConfig) -> Result<FitReport> {
    let (epochs, lr0, pgd_steps, wd, b1, b2, eps, decay, train_bias) = match cfg.hidden {
        HiddenTraining::Frozen => return pgd_fit(events, model, cfg),
        HiddenTraining::Train {
            epochs,
            learning_rate,
            pgd_steps_per_epoch,
            weight_decay,
            beta1,
            beta2,
            adam_eps,
            lr_decay,
            train_bias,
        } => (epochs, learning_rate, pgd_steps_per_epoch, weight_decay, beta1, beta2, adam_eps, lr_decay, train_bias),
    };
    cfg.validate()?;
    let start = Instant::now();
    let mut model = model.clone();
    model.readout_mut().jitter = cfg.eps1;
    model.validate()?;
    let closed = closed_forms(&model)?;
    let bias_mask: Vec<bool> = closed.iter().map(|c| train_bias && c.uses_bias()).collect();
    let sizes: Vec<usize> = model.structure().factors().iter().map(|f| f.hidden.w.len() + f.hidden.b.len()).collect();
    let mut adam: Vec<Adam> = sizes.iter().map(|&l| Adam::new(l)).collect();

    let mut lr = lr0;
    let mut eta = None;
    let mut report_trace = Vec::new();
    let mut grad_norms = Vec::new();
    let mut step_sizes = Vec::new();
    let mut records = Vec::with_capacity(epochs);
    let mut converged = false;
    let mut steps_taken = 0;
    let mut feature_seconds = 0.0;
    let mut optimise_seconds = 0.0;
    let beta = lipschitz_beta(&cfg.step_size, cfg.eps1, cfg.eps2, events.len()).unwrap_or(f64::NAN);

    for epoch in 0..epochs {
        let t_opt = Instant::now();
        let g = hidden_gradients(events, &model, cfg.eps2)?;
        let gnorm = g.norm();
        if !gnorm.is_finite() {
            return Err(Error::NonFiniteGradient { epoch, detail: format!("hidden-layer gradient norm is {gnorm}") });
        }
        for (f, layer) in model.hidden_mut().into_iter().enumerate() {
            let st = &mut adam[f];
            st.t += 1;
            let bc1 = 1.0 - b1.powi(st.t);
            let bc2 = 1.0 - b2.powi(st.t);
            let nw = layer.w.len();
            let params = layer.w.iter_mut().chain(layer.b.iter_mut());
            let grads = g.w[f].iter().chain(g.b[f].iter());
            for (idx, (p, &gr)) in params.zip(grads).enumerate() {
                if idx >= nw && !bias_mask[f] {
                    continue;
                }
                *p -= lr * wd * *p;
                st.m[idx] = b1 * st.m[idx] + (1.0 - b1) * gr;
                st.v[idx] = b2 * st.v[idx] + (1.0 - b2) * gr * gr;
                let mh = st.m[idx] / bc1;
                let vh = st.v[idx] / bc2;
                *p -= lr * mh / (vh.sqrt() + eps);
            }
        }
        optimise_seconds += t_opt.elapsed().as_secs_f64();

        let t_feat = Instant::now();
        let problem = Problem::new(events, &model, cfg.eps2)?;
        feature_seconds += t_feat.elapsed().as_secs_f64();
        let t_opt = Instant::now();
        let out = pgd_on_problem(&problem, &model.readout().m, cfg, pgd_steps, eta)?;
        optimise_seconds += t_opt.elapsed().as_secs_f64();
        eta = Some(out.next_eta).filter(|e| e.is_finite());
        model.readout_mut().m = out.m;
        if report_trace.is_empty() {
            report_trace.push(out.objective_trace[0]);
        }
        let objective = *out.objective_trace.last().expect("initial value recorded");
        report_trace.push(objective);
        grad_norms.extend(out.gradient_norms);
        step_sizes.extend(out.step_sizes);
        steps_taken += out.steps_taken;
        converged = out.converged;
        records.push(EpochRecord { epoch, objective, hidden_grad_norm: gnorm, learning_rate: lr });
        lr *= decay;
    }
    let nll = nll(events, &model)?;
    let final_objective = match report_trace.last() {
        Some(&c) => c,
        None => Problem::new(events, &model, cfg.eps2)?.objective(&model.readout().m),
    };
    if report_trace.is_empty() {
        report_trace.push(final_objective);
    }
    Ok(FitReport {
        objective_trace: report_trace,
        gradient_norms: grad_norms,
        step_sizes,
        epochs: records,
        final_objective,
        nll,
        beta,
        converged,
        steps_taken,
        feature_seconds,
        optimise_seconds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        iterates: Vec::new(),
        model,
    })
}
