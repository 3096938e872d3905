use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::pointprocess::{mc_integrate, Domain};

fn rect(d: usize) -> BaseMeasure {
    BaseMeasure::LebesgueRect { a: 0.0, b: 1.0, d }
}

fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let v = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&v * v.transpose()) / n as f64
}

fn layer(act: ActivationKind, w: &[f64], rows: usize, b: &[f64]) -> HiddenLayer {
    let cols = w.len() / rows;
    HiddenLayer::new(act, DMatrix::from_row_slice(rows, cols, w), DVector::from_column_slice(b)).unwrap()
}

fn exp_model(seed: u64, n: usize) -> IntensityModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = HiddenLayer::random(ActivationKind::Exp, n, 2, 1.0, 0.5, &mut rng).unwrap();
    IntensityModel::single(hidden, rect(2), Readout::new(random_psd(n, &mut rng), 0.1, 3.0).unwrap()).unwrap()
}

fn relu_product(seed: u64, n: usize) -> IntensityModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut space = HiddenLayer::random(ActivationKind::Relu, n, 3, 1.0, 0.0, &mut rng).unwrap();
    space.b.fill(0.0);
    let time = HiddenLayer::random(ActivationKind::Relu, n, 1, 1.0, 1.0, &mut rng).unwrap();
    IntensityModel::product(
        Factor::new(space, BaseMeasure::UniformSphere { d: 3 }).unwrap(),
        Factor::new(time, BaseMeasure::LebesgueInterval { t1: -1.0, t2: 2.0 }).unwrap(),
        Readout::new(random_psd(n, &mut rng), 0.2, 5.0).unwrap(),
    )
    .unwrap()
}

#[test]
fn feature_examples() {
    let exp = IntensityModel::single(
        layer(ActivationKind::Exp, &[0.0; 6], 3, &[0.0; 3]),
        rect(2),
        Readout::identity(3, 0.1, 1.0).unwrap(),
    )
    .unwrap();
    assert_eq!(exp.features(&[0.3, 0.7]).unwrap(), DVector::from_element(3, 1.0));
    let relu = IntensityModel::single(
        layer(ActivationKind::Relu, &[0.0; 6], 3, &[0.0; 3]),
        rect(2),
        Readout::identity(3, 0.1, 1.0).unwrap(),
    )
    .unwrap();
    assert_eq!(relu.features(&[0.3, 0.7]).unwrap(), DVector::zeros(3));
    let m = IntensityModel::single(
        layer(ActivationKind::Exp, &[1.0, 0.0], 1, &[0.0]),
        BaseMeasure::LebesgueRect { a: 0.0, b: 10.0, d: 2 },
        Readout::identity(1, 0.1, 1.0).unwrap(),
    )
    .unwrap();
    assert!((m.features(&[2f64.ln(), 5.0]).unwrap()[0] - 2.0).abs() < 1e-15);
    assert!(matches!(m.features(&[1.0]), Err(Error::InvalidInput(_))));
}

#[test]
fn intensity_examples() {
    let model = exp_model(1, 4);
    let x = [0.2, 0.9];
    let psi = model.features(&x).unwrap();
    let unit = model.with_readout(Readout::identity(4, 0.1, 2.5).unwrap()).unwrap();
    assert!((unit.intensity(&x).unwrap() - 2.5 * psi.norm_squared()).abs() < 1e-12 * psi.norm_squared());
    let zero = model.with_readout(Readout::new(DMatrix::zeros(4, 4), 0.0, 2.5).unwrap()).unwrap();
    assert_eq!(zero.intensity(&x).unwrap(), 0.0);

    // α Tr((M + ε₁I) ψψᵀ)
    let a = model.readout().effective();
    let outer = &psi * psi.transpose();
    let naive = model.alpha() * (a * outer).trace();
    let v = model.intensity(&x).unwrap();
    assert!((v - naive).abs() <= 1e-10 * naive);
}

#[test]
fn integral_examples() {
    let model = exp_model(2, 3);
    let unit = model.with_readout(Readout::identity(3, 0.1, 2.0).unwrap()).unwrap();
    assert!((unit.integrated_intensity().unwrap() - 2.0 * unit.gram().unwrap().trace()).abs() < 1e-12);
    let single = IntensityModel::single(
        layer(ActivationKind::Exp, &[0.0, 0.0, 0.0], 1, &[0.0]),
        rect(3),
        Readout::new(DMatrix::from_element(1, 1, 1.4), 0.1, 2.0).unwrap(),
    )
    .unwrap();
    assert!((single.integrated_intensity().unwrap() - 2.0 * 1.5).abs() < 1e-14);
}

#[test]
fn integral_matches_monte_carlo() {
    let model = exp_model(3, 4);
    let lam = model.integrated_intensity().unwrap();
    let mc = mc_integrate(&model, &model.domain(), 1_000_000, 11).unwrap();
    assert!((lam - mc.value).abs() <= 3.0 * mc.stderr, "{lam} vs {} ± {}", mc.value, mc.stderr);
}

#[test]
fn product_gram_examples() {
    let base = exp_model(4, 3);
    let Structure::Single { factor } = base.structure().clone() else { unreachable!() };
    let ones = Factor::new(layer(ActivationKind::Exp, &[0.0, 0.0, 0.0], 3, &[0.0; 3]), rect(1))
        .unwrap();
    let prod = IntensityModel::product(factor, ones, base.readout().clone()).unwrap();
    assert!((prod.product_gram().unwrap().matrix() - base.gram().unwrap().matrix()).amax() < 1e-14);
    for x in [[0.1, 0.2], [0.9, 0.4]] {
        let px = [x[0], x[1], 0.7];
        assert!((prod.intensity(&px).unwrap() - base.intensity(&x).unwrap()).abs() <= 1e-12 * base.intensity(&x).unwrap());
    }
    let k = KernelMatrix::identity(3);
    assert_eq!(k.hadamard(&KernelMatrix::identity(3)).unwrap(), KernelMatrix::identity(3));
    assert!(k.hadamard(&KernelMatrix::identity(2)).is_err());

    let m = relu_product(5, 5);
    let kp = m.product_gram().unwrap();
    assert!(kp.min_eigenvalue() >= -1e-12 * kp.matrix().amax());
}

#[test]
fn product_width_mismatch_rejected() {
    let a = Factor::new(layer(ActivationKind::Exp, &[0.0, 0.0], 2, &[0.0, 0.0]), rect(1)).unwrap();
    let b = Factor::new(layer(ActivationKind::Exp, &[0.0], 1, &[0.0]), rect(1)).unwrap();
    assert!(IntensityModel::product(a, b, Readout::identity(2, 0.1, 1.0).unwrap()).is_err());
}

#[test]
fn product_integral_matches_monte_carlo() {
    let m = relu_product(6, 4);
    let lam = m.integrated_intensity().unwrap();
    let mc = mc_integrate(&m, &m.domain(), 1_000_000, 12).unwrap();
    assert!((lam - mc.value).abs() <= 3.0 * mc.stderr, "{lam} vs {} ± {}", mc.value, mc.stderr);
}

#[test]
fn expected_count_windows() {
    let m = relu_product(7, 4);
    let full = m.integrated_intensity().unwrap();
    assert_eq!(m.expected_count(&Window::Full).unwrap(), full);
    assert_eq!(m.expected_count(&Window::TemporalSubinterval { t1: -1.0, t2: 2.0 }).unwrap(), full);
    assert!(matches!(m.expected_count(&Window::TemporalSubinterval { t1: 0.0, t2: 3.0 }), Err(Error::InvalidWindow(_))));
    assert!(matches!(exp_model(1, 2).expected_count(&Window::TemporalSubinterval { t1: 0.0, t2: 0.5 }), Err(Error::InvalidWindow(_))));

    let half = m.expected_count(&Window::TemporalSubinterval { t1: 0.5, t2: 2.0 }).unwrap();
    // restrict MC to the half window by zeroing the intensity outside it
    let domain = Domain::Product(BaseMeasure::UniformSphere { d: 3 }, BaseMeasure::LebesgueInterval { t1: 0.5, t2: 2.0 });
    let mc = mc_integrate(&m, &domain, 1_000_000, 13).unwrap();
    assert!((half - mc.value).abs() <= 3.0 * mc.stderr, "{half} vs {} ± {}", mc.value, mc.stderr);
    assert!(half < full);
}

#[test]
fn hidden_mutation_drops_gram() {
    let mut m = exp_model(8, 3);
    let k0 = m.gram().unwrap().clone();
    for h in m.hidden_mut() {
        h.b.add_scalar_mut(0.3);
    }
    let k1 = m.gram().unwrap().clone();
    assert!((k1.matrix() - k0.matrix() * 0.6f64.exp()).amax() < 1e-12 * k1.matrix().amax());
}

#[test]
fn normalised_features_give_unit_trace() {
    let mut m = exp_model(9, 5);
    m.normalize_features().unwrap();
    let k = m.gram().unwrap();
    for i in 0..5 {
        assert!((k.matrix()[(i, i)] - 0.2).abs() < 1e-12);
    }
    let mut p = relu_product(10, 4);
    p.normalize_features().unwrap();
    let tr = p.gram().unwrap().trace();
    assert!((tr - 3.0).abs() < 1e-10, "{tr} {:?}", p.gram().unwrap().matrix().diagonal());
}

#[test]
fn alpha_heuristic_values() {
    assert_eq!(alpha_heuristic(0, 2.0), 1.0);
    assert_eq!(alpha_heuristic(50, 2.0), 25.0);
}

#[test]
fn model_file_roundtrip() {
    let m = relu_product(11, 3);
    let file = ModelFile::new(m.clone(), "abc", 42);
    let text = file.to_json().unwrap();
    let back = ModelFile::from_json(&text).unwrap();
    assert_eq!(back.model, m);
    assert_eq!(back.header.seed, 42);
    assert_eq!(back.model.integrated_intensity().unwrap(), m.integrated_intensity().unwrap());
    let wrong = text.replace(MODEL_FORMAT, "something-else");
    assert!(ModelFile::from_json(&wrong).is_err());
    let bad = text.replace("\"alpha\"", "\"alpah\"");
    assert!(ModelFile::from_json(&bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn intensity_nonnegative_and_trace_consistent(seed in 0u64..100_000, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let m = exp_model(seed, 3);
        let v = m.intensity(&[x, y]).unwrap();
        prop_assert!(v >= 0.0);
        let psi = m.features(&[x, y]).unwrap();
        let naive = m.alpha() * (m.readout().effective() * (&psi * psi.transpose())).trace();
        prop_assert!((v - naive).abs() <= 1e-10 * naive.abs().max(1e-300));
    }

    #[test]
    fn relu_intensity_nonnegative(seed in 0u64..100_000, t in -1.0f64..2.0) {
        let m = relu_product(seed, 3);
        prop_assert!(m.intensity(&[0.0, 0.6, 0.8, t]).unwrap() >= 0.0);
    }

    #[test]
    fn integral_additive_in_m(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = exp_model(seed, 3);
        let m1 = random_psd(3, &mut rng);
        let m2 = random_psd(3, &mut rng);
        let lam = |m: DMatrix<f64>| base.with_readout(Readout::new(m, 0.0, 1.7).unwrap()).unwrap().integrated_intensity().unwrap();
        let sum = lam(&m1 + &m2);
        prop_assert!((sum - lam(m1) - lam(m2)).abs() <= 1e-12 * sum.abs());
    }

    #[test]
    fn alpha_scaling_exact(seed in 0u64..100_000, c in 0.01f64..100.0) {
        let m = exp_model(seed, 3);
        let s = m.with_alpha_scaled(c).unwrap();
        let x = [0.4, 0.5];
        let mr = m.intensity(&x).unwrap() * c;
        prop_assert!((s.intensity(&x).unwrap() - mr).abs() <= 4.0 * f64::EPSILON * mr);
        let ml = m.integrated_intensity().unwrap() * c;
        prop_assert!((s.integrated_intensity().unwrap() - ml).abs() <= 4.0 * f64::EPSILON * ml);
    }
}
