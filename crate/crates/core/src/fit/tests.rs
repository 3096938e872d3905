use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::model::{Factor, HiddenLayer, Readout};
use crate::nnk::{kernel_entry, ActivationKind, BaseMeasure, KernelMode};
use crate::pointprocess::{sample_ppp, Domain, EventSet, FnIntensity};

fn rect(d: usize) -> BaseMeasure {
    BaseMeasure::LebesgueRect { a: 0.0, b: 1.0, d }
}

fn random_psd(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let v = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&v * v.transpose()) * (scale / n as f64)
}

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let v = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&v + v.transpose()) * 0.5
}

fn exp_model(n: usize, d: usize, rng: &mut ChaCha8Rng) -> IntensityModel {
    let hidden = HiddenLayer::random(ActivationKind::Exp, n, d, 1.0, 0.5, rng).unwrap();
    let m = random_psd(n, 1.0, rng);
    IntensityModel::single(hidden, rect(d), Readout::new(m, 0.1, 2.0).unwrap()).unwrap()
}

fn uniform_events(n_ev: usize, d: usize, rng: &mut ChaCha8Rng) -> EventSet {
    let pts: Vec<f64> = (0..n_ev * d).map(|_| rng.random::<f64>()).collect();
    EventSet::new(pts, Domain::Base(rect(d))).unwrap()
}

fn setup(seed: u64, n: usize, n_ev: usize) -> (IntensityModel, EventSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = exp_model(n, 2, &mut rng);
    let events = uniform_events(n_ev, 2, &mut rng);
    (model, events)
}

#[test]
fn nll_unit_feature_is_trace_of_gram() {
    let hidden = HiddenLayer::new(ActivationKind::Exp, DMatrix::zeros(1, 1), DVector::zeros(1)).unwrap();
    let model = IntensityModel::single(hidden, rect(1), Readout::identity(1, 0.1, 1.0).unwrap()).unwrap();
    let events = EventSet::new(vec![0.3], Domain::Base(rect(1))).unwrap();
    let v = nll(&events, &model).unwrap();
    assert!((v.total - model.gram().unwrap().trace()).abs() < 1e-15);
    assert!((v.total - 1.0).abs() < 1e-15);
}

#[test]
fn nll_without_events_is_integral() {
    let (model, _) = setup(1, 3, 0);
    let events = EventSet::empty(model.domain());
    let v = nll(&events, &model).unwrap();
    assert_eq!(v.total, model.integrated_intensity().unwrap());
    assert_eq!(v.n_events, 0);
}

#[test]
fn nll_matches_literal_likelihood() {
    let (model, events) = setup(2, 3, 50);
    let units = model.structure().factors()[0].hidden.units();
    let spec = model.structure().factors()[0].spec();
    let a = model.readout().effective();
    let alpha = model.alpha();
    let mut lambda_total = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            lambda_total += alpha * a[(i, j)] * kernel_entry(&spec, &KernelMode::ClosedForm, &units[i], &units[j], (i, j)).unwrap();
        }
    }
    let mut log_lik = -lambda_total;
    for x in events.iter() {
        let psi: Vec<f64> = units.iter().map(|u| u.preactivation(x).exp()).collect();
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                q += psi[i] * a[(i, j)] * psi[j];
            }
        }
        log_lik += (alpha * q).ln();
    }
    let v = nll(&events, &model).unwrap();
    assert!((v.total + log_lik).abs() <= 1e-10 * log_lik.abs().max(1.0), "{} vs {}", v.total, -log_lik);
    let p = Problem::new(&events, &model, 0.0).unwrap();
    assert!((p.nll(&model.readout().m).0 - v.total).abs() <= 1e-10 * v.total.abs());
    assert!((v.raw - (v.total + 50.0 * alpha.ln())).abs() < 1e-12 * v.raw.abs().max(1.0));
}

#[test]
fn zero_intensity_event_gives_infinite_nll() {
    let hidden = HiddenLayer::new(ActivationKind::Relu, DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, -0.5)).unwrap();
    let measure = BaseMeasure::LebesgueInterval { t1: 0.0, t2: 1.0 };
    let model = IntensityModel::single(hidden, measure.clone(), Readout::identity(1, 0.1, 1.0).unwrap()).unwrap();
    let events = EventSet::new(vec![0.9, 0.2], Domain::Base(measure)).unwrap();
    let v = nll(&events, &model).unwrap();
    assert_eq!(v.total, f64::INFINITY);
    assert_eq!(v.zero_intensity_event, Some(1));
    let p = Problem::new(&events, &model, 0.0).unwrap();
    assert!(matches!(p.value_and_grad(&model.readout().m), Err(Error::SingularEvent { index: 1 })));
}

fn fd_check(model: &IntensityModel, events: &EventSet, eps2: f64, rng: &mut ChaCha8Rng) {
    let p = Problem::new(events, model, eps2).unwrap();
    let m = model.readout().m.clone();
    let (_, g) = p.value_and_grad(&m).unwrap();
    let h = 1e-6;
    for _ in 0..5 {
        let e = random_symmetric(m.nrows(), rng);
        let fd = (p.objective(&(&m + &e * h)) - p.objective(&(&m - &e * h))) / (2.0 * h);
        let an = g.dot(&e);
        let scale = an.abs().max(g.norm() * e.norm()).max(1e-8);
        assert!((fd - an).abs() <= 1e-5 * scale, "fd {fd} vs analytic {an}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10 {
        let (model, events) = setup(100 + seed, 3, 20);
        fd_check(&model, &events, 0.0, &mut rng);
        fd_check(&model, &events, 0.3, &mut rng);
    }
}

#[test]
fn gradient_without_events_is_alpha_k() {
    let (model, _) = setup(4, 3, 0);
    let events = EventSet::empty(model.domain());
    let g = grad_m(&events, &model, 0.0).unwrap();
    let k = model.gram().unwrap().matrix() * model.alpha();
    assert!((g - k).amax() < 1e-14);
}

#[test]
fn ridge_adds_eps2_m() {
    let (model, events) = setup(5, 4, 30);
    let g0 = grad_m(&events, &model, 0.0).unwrap();
    let g1 = grad_m(&events, &model, 0.25).unwrap();
    let diff = g1 - g0 - &model.readout().m * 0.25;
    assert!(diff.amax() < 1e-12);
}

#[test]
fn map_objective_is_nll_per_event_plus_ridge() {
    let (model, events) = setup(6, 3, 40);
    let v = nll(&events, &model).unwrap();
    assert_eq!(map_objective(&events, &model, 0.0).unwrap(), v.total / 40.0);
    let c = map_objective(&events, &model, 0.5).unwrap();
    let direct = v.total / 40.0 + 0.25 * model.readout().m.iter().map(|x| x * x).sum::<f64>();
    assert!((c - direct).abs() < 1e-12 * direct.abs().max(1.0));
    let zero = model.with_readout(Readout::new(DMatrix::zeros(3, 3), 0.1, 2.0).unwrap()).unwrap();
    let v0 = nll(&events, &zero).unwrap();
    assert_eq!(map_objective(&events, &zero, 0.5).unwrap(), v0.total / 40.0);
    let p = Problem::new(&events, &model, 0.5).unwrap();
    assert!((p.objective(&model.readout().m) - c).abs() < 1e-12 * c.abs().max(1.0));
}

#[test]
fn projection_examples() {
    let d = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
    let p = project_psd(&d).unwrap();
    assert!((p - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = random_psd(5, 1.0, &mut rng);
    assert!((project_psd(&s).unwrap() - &s).amax() < 1e-10);
    assert!(project_psd(&DMatrix::from_element(2, 2, f64::NAN)).is_err());
    assert!(project_psd(&DMatrix::zeros(2, 3)).is_err());
}

#[test]
fn projection_is_variationally_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let s = random_symmetric(6, &mut rng);
        let p = project_psd(&s).unwrap();
        let r = &s - &p;
        for _ in 0..200 {
            let q = random_psd(6, 3.0, &mut rng);
            assert!(r.dot(&(&q - &p)) <= 1e-8);
        }
    }
}

#[test]
fn diagonal_projection_clamps() {
    let s = DMatrix::from_row_slice(2, 2, &[-1.0, 3.0, 1.0, 2.0]);
    let p = project_diagonal(&s).unwrap();
    assert_eq!(p, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_idempotent_and_psd(seed in 0u64..10_000, n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_symmetric(n, &mut rng);
        let p = project_psd(&s).unwrap();
        prop_assert_eq!(project_psd(&p).unwrap(), p.clone());
        let min = p.clone().symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-12 * p.amax().max(1.0));
        prop_assert_eq!(p.transpose(), p);
    }

    #[test]
    fn objective_convex_on_segments(seed in 0u64..10_000, theta in prop::sample::select(vec![0.25, 0.5, 0.75])) {
        let (model, events) = setup(seed, 3, 25);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let p = Problem::new(&events, &model, 0.05).unwrap();
        let ma = random_psd(3, 2.0, &mut rng);
        let mb = random_psd(3, 2.0, &mut rng);
        let mid = &ma * theta + &mb * (1.0 - theta);
        let lhs = p.objective(&mid);
        let rhs = theta * p.objective(&ma) + (1.0 - theta) * p.objective(&mb);
        prop_assert!(lhs <= rhs + 1e-10);
    }

    #[test]
    fn gradient_symmetric(seed in 0u64..10_000) {
        let (model, events) = setup(seed, 4, 15);
        let g = grad_m(&events, &model, 0.1).unwrap();
        prop_assert_eq!(g.transpose(), g);
    }
}

#[test]
fn lipschitz_trace_is_monotone() {
    let (model, events) = setup(9, 5, 80);
    let cfg = FitConfig::new(0.1, 0.0, 200);
    let r = pgd_fit(&events, &model, &cfg).unwrap();
    assert_eq!(r.objective_trace.len(), 201);
    for w in r.objective_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
    }
    assert!((r.beta - 100.0).abs() < 1e-12);
    assert!(r.final_objective < r.objective_trace[0]);
    let p = Problem::new(&events, &r.model, 0.0).unwrap();
    assert!((p.objective(&r.model.readout().m) - r.final_objective).abs() < 1e-12 * r.final_objective.abs().max(1.0));
}

#[test]
fn fixed_point_trace_is_constant() {
    // with no events the gradient is αK ⪰ 0, so M = 0 is optimal
    let (model, _) = setup(10, 3, 0);
    let events = EventSet::empty(model.domain());
    let model = model.with_readout(Readout::new(DMatrix::zeros(3, 3), 0.1, 2.0).unwrap()).unwrap();
    let r = pgd_fit(&events, &model, &FitConfig::new(0.1, 0.0, 20)).unwrap();
    assert!(r.objective_trace.iter().all(|&c| c == r.objective_trace[0]));
    assert_eq!(r.model.readout().m, DMatrix::zeros(3, 3));
}

#[test]
fn per_event_beta_and_backtracking() {
    let (model, events) = setup(11, 4, 40);
    let mut cfg = FitConfig::new(0.1, 0.01, 50);
    cfg.step_size = StepSize::LipschitzPerEvent;
    let r = pgd_fit(&events, &model, &cfg).unwrap();
    assert!((r.beta - (0.01 + 40.0 / 0.01)).abs() < 1e-9);
    cfg.step_size = StepSize::Backtracking { initial: 1.0, shrink: 0.5 };
    let b = pgd_fit(&events, &model, &cfg).unwrap();
    for w in b.objective_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
    }
    cfg.step_size = StepSize::Lipschitz;
    let l = pgd_fit(&events, &model, &cfg).unwrap();
    assert!(b.final_objective <= l.final_objective + 1e-9);
}

#[test]
fn diagonal_fit_stays_diagonal() {
    let (model, events) = setup(12, 4, 40);
    let mut cfg = FitConfig::new(0.1, 0.0, 50);
    cfg.diagonal = true;
    let r = pgd_fit(&events, &model, &cfg).unwrap();
    let m = &r.model.readout().m;
    for i in 0..4 {
        assert!(m[(i, i)] >= 0.0);
        for j in 0..4 {
            if i != j {
                assert_eq!(m[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn config_validation() {
    assert!(FitConfig::new(0.0, 0.0, 1).validate().is_err());
    assert!(FitConfig::new(0.1, -1.0, 1).validate().is_err());
    let mut cfg = FitConfig::new(0.1, 0.0, 1);
    cfg.step_size = StepSize::Fixed { eta: 0.0 };
    assert!(cfg.validate().is_err());
    cfg.step_size = StepSize::Backtracking { initial: 1.0, shrink: 1.5 };
    assert!(cfg.validate().is_err());
    let toml_like = r#"{"eps1":0.1,"steps":5,"step_size":{"kind":"fixed","eta":0.01}}"#;
    let c: FitConfig = serde_json::from_str(toml_like).unwrap();
    assert_eq!(c.step_size, StepSize::Fixed { eta: 0.01 });
    assert_eq!(c.hidden, HiddenTraining::Frozen);
    assert!(serde_json::from_str::<FitConfig>(r#"{"eps1":0.1,"steps":5,"bogus":1}"#).is_err());
}

#[test]
fn convergence_bounds_hold_against_long_run() {
    let (model, events) = setup(13, 4, 60);
    let mut cfg = FitConfig::new(0.1, 0.0, 1000);
    cfg.record_iterates = true;
    let long = pgd_fit(&events, &model, &cfg).unwrap();
    let m_star = long.model.readout().m.clone();
    let c_star = long.final_objective;
    cfg.steps = 100;
    let short = pgd_fit(&events, &model, &cfg).unwrap();
    let check = sublinear_bound_check(&short.objective_trace, &short.iterates[0], &m_star, c_star, short.beta);
    assert!(check.holds, "{check:?}");

    cfg.eps2 = 0.01;
    cfg.steps = 3000;
    let long = pgd_fit(&events, &model, &cfg).unwrap();
    let m_star = long.model.readout().m.clone();
    let d: Vec<f64> = long.iterates[..300].iter().map(|m| (m - &m_star).norm_squared()).collect();
    let rate = cfg.eps2 / (2.0 * long.beta);
    let rc = linear_rate_check(&d, rate, 100, 1e-9);
    assert!(rc.holds, "{rc:?}");
}

#[test]
fn bound_checks_detect_violations() {
    let m = DMatrix::zeros(1, 1);
    let bad = sublinear_bound_check(&[1.0, 0.9, 0.8], &m, &m, 0.0, 0.0);
    assert!(!bad.holds);
    assert_eq!(bad.first_violation, Some(1));
    let good = sublinear_bound_check(&[1.0, 0.4, 0.2], &m, &m, 0.0, 0.0);
    assert!(good.holds);
    let d: Vec<f64> = (0..50).map(|t| (-0.2 * t as f64).exp()).collect();
    let rc = linear_rate_check(&d, 0.1, 0, 0.0);
    assert_eq!(rc.t0, Some(0));
    assert!((rc.observed_slope + 0.2).abs() < 1e-9);
    assert!(!linear_rate_check(&d, 0.3, 10, 0.0).holds);
}

fn hidden_fd(model: &IntensityModel, events: &EventSet, check_bias: bool) {
    let g = hidden_gradients(events, model, 0.1).unwrap();
    let c0 = Problem::new(events, model, 0.1).unwrap().objective(&model.readout().m);
    assert!((g.objective - c0).abs() <= 1e-10 * c0.abs().max(1.0));
    let h = 1e-6;
    let n_f = model.structure().factors().len();
    for f in 0..n_f {
        let (rows, cols) = g.w[f].shape();
        let mut coords: Vec<(usize, Option<usize>)> = Vec::new();
        for k in 0..rows {
            for r in 0..cols {
                coords.push((k, Some(r)));
            }
            if check_bias {
                coords.push((k, None));
            }
        }
        for (k, r) in coords {
            let eval = |delta: f64| {
                let mut m2 = model.clone();
                let layer = m2.hidden_mut().into_iter().nth(f).unwrap();
                match r {
                    Some(r) => layer.w[(k, r)] += delta,
                    None => layer.b[k] += delta,
                }
                Problem::new(events, &m2, 0.1).unwrap().objective(&m2.readout().m)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = match r {
                Some(r) => g.w[f][(k, r)],
                None => g.b[f][k],
            };
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-2), "factor {f} unit {k} coord {r:?}: fd {fd} vs {an}");
        }
    }
}

#[test]
fn hidden_gradients_match_finite_differences_exp() {
    let (model, events) = setup(14, 3, 30);
    hidden_fd(&model, &events, true);
}

#[test]
fn hidden_gradients_match_finite_differences_relu_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let space = HiddenLayer::random(ActivationKind::Exp, 3, 2, 0.7, 0.3, &mut rng).unwrap();
    let time = HiddenLayer::random(ActivationKind::Relu, 3, 1, 1.0, 1.0, &mut rng).unwrap();
    let interval = BaseMeasure::LebesgueInterval { t1: 0.0, t2: 2.0 };
    let model = IntensityModel::product(
        Factor::new(space, rect(2)).unwrap(),
        Factor::new(time, interval.clone()).unwrap(),
        Readout::new(random_psd(3, 1.0, &mut rng), 0.2, 1.5).unwrap(),
    )
    .unwrap();
    let domain = Domain::Product(rect(2), interval);
    let pts: Vec<f64> = (0..25).flat_map(|_| [rng.random::<f64>(), rng.random::<f64>(), 2.0 * rng.random::<f64>()]).collect();
    let events = EventSet::new(pts, domain).unwrap();
    // points where some time unit is inactive are fine: the ReLU is differentiable off the kink
    hidden_fd(&model, &events, true);
}

#[test]
fn hidden_gradients_match_finite_differences_arccos_sphere() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut hidden = HiddenLayer::random(ActivationKind::Relu, 4, 3, 1.0, 0.0, &mut rng).unwrap();
    hidden.b.fill(0.0);
    let sphere = BaseMeasure::UniformSphere { d: 3 };
    let model = IntensityModel::single(hidden, sphere.clone(), Readout::new(random_psd(4, 1.0, &mut rng), 0.5, 3.0).unwrap()).unwrap();
    let mut pts = Vec::new();
    while pts.len() < 20 * 3 {
        let mut x = [0.0; 3];
        sphere.sample(&mut rng, &mut x);
        if model.intensity(&x).unwrap() > 0.0 {
            pts.extend_from_slice(&x);
        }
    }
    let events = EventSet::new(pts, Domain::Base(sphere)).unwrap();
    hidden_fd(&model, &events, false);
}

fn train_cfg(epochs: usize, lr: f64, pgd: usize) -> FitConfig {
    let mut cfg = FitConfig::new(0.1, 0.0, 10);
    cfg.hidden = HiddenTraining::adamw(epochs, lr, pgd);
    cfg
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let (model, events) = setup(17, 3, 30);
    let r = train_hidden(&events, &model, &train_cfg(5, 0.0, 0)).unwrap();
    let before = &model.structure().factors()[0].hidden;
    let after = &r.model.structure().factors()[0].hidden;
    assert_eq!(before.w, after.w);
    assert_eq!(before.b, after.b);
    assert!(r.epochs.iter().all(|e| e.objective == r.epochs[0].objective));
}

#[test]
fn frozen_training_is_pgd_fit() {
    let (model, events) = setup(18, 3, 30);
    let cfg = FitConfig::new(0.1, 0.01, 30);
    let a = train_hidden(&events, &model, &cfg).unwrap();
    let b = pgd_fit(&events, &model, &cfg).unwrap();
    assert_eq!(a.objective_trace, b.objective_trace);
    assert_eq!(a.model, b.model);
}

#[test]
fn training_improves_on_alpha_heuristic_init() {
    let truth = FnIntensity::new(1, |x: &[f64]| 40.0 * (1.5 * x[0]).exp());
    let domain = Domain::Base(rect(1));
    let events = sample_ppp(&truth, 40.0 * 1.5f64.exp(), &domain, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let hidden = HiddenLayer::random(ActivationKind::Exp, 4, 1, 0.5, 0.1, &mut rng).unwrap();
    let mut model = IntensityModel::single(hidden, rect(1), Readout::identity(4, 0.1, 1.0).unwrap()).unwrap();
    model.normalize_features().unwrap();
    let alpha = crate::model::alpha_heuristic(events.len(), 1.0);
    let model = model.with_alpha_scaled(alpha).unwrap();
    let init = nll(&events, &model).unwrap();
    let r = train_hidden(&events, &model, &train_cfg(100, 0.02, 5)).unwrap();
    assert!(r.nll.total <= init.total, "{} > {}", r.nll.total, init.total);
    assert_eq!(r.epochs.len(), 100);
}

#[test]
fn training_rejects_numeric_kernels() {
    let (model, events) = setup(20, 2, 10);
    let model = model.with_kernel_mode(KernelMode::Numeric(Default::default()));
    assert!(matches!(train_hidden(&events, &model, &train_cfg(1, 0.1, 1)), Err(Error::Unsupported(_))));
}
