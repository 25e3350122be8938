use ergwalk_core::step::{exponential_moment_estimate, top_lyapunov_estimate};
use ergwalk_core::stats::ks_two_sample;
use ergwalk_core::{GroupElement, LeftFactor, RadialMeasure, SeedKey, StepDistribution};
use proptest::prelude::*;

fn entries_close(a: &GroupElement, b: &GroupElement, tol: f64) -> bool {
    a.entries().iter().zip(b.entries().iter()).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #[test]
    fn kak_recomposes(t in 0.0f64..6.0, a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let g = GroupElement::rotation(a)
            .compose(&GroupElement::diag_flow(t)).unwrap()
            .compose(&GroupElement::rotation(b)).unwrap();
        let k = g.kak_decompose();
        prop_assert!(k.t >= 0.0);
        prop_assert!((k.t - t).abs() < 1e-9);
        let scale = g.operator_norm();
        prop_assert!(entries_close(&k.recompose(), &g, 1e-12 * scale.max(1.0)));
    }

    #[test]
    fn inverse_and_norm(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let g = GroupElement::shear(a)
            .compose(&GroupElement::rotation(b)).unwrap()
            .compose(&GroupElement::diag_flow(c)).unwrap();
        let id = g.compose(&g.inverse()).unwrap();
        prop_assert!(entries_close(&id, &GroupElement::identity(), 1e-9));
        prop_assert!((g.det() - 1.0).abs() < 1e-12);
        prop_assert!((g.operator_norm() - g.inverse().operator_norm()).abs() < 1e-9 * g.operator_norm());
    }
}

#[test]
fn diag_flow_norm_is_exponential() {
    for i in 0..=200 {
        let t = i as f64 * 0.1;
        let n = GroupElement::diag_flow(t).operator_norm();
        assert!((n - t.exp()).abs() <= 1e-12 * t.exp(), "t={t}");
    }
}

#[test]
fn uniform_exponential_moment_matches_closed_form() {
    // E e^{t/2} for t ~ U(0,1) is 2(√e − 1).
    let dist = StepDistribution::bi_invariant(RadialMeasure::uniform(0.0, 1.0));
    let exact = 2.0 * (0.5f64.exp() - 1.0);
    let est = exponential_moment_estimate(&dist, 0.5, 100_000, SeedKey::new(3)).unwrap();
    assert!(!est.likely_infinite);
    assert!((est.estimate.value - exact).abs() < 4.0 * est.estimate.sigma() + 1e-12);
}

#[test]
fn heavy_tail_is_flagged() {
    let dist = StepDistribution::bi_invariant(RadialMeasure::from_params("exponential_tail", &[1.0, f64::INFINITY]).unwrap());
    let est = exponential_moment_estimate(&dist, 2.0, 100_000, SeedKey::new(4)).unwrap();
    assert!(est.likely_infinite, "{est:?}");
}

#[test]
fn lyapunov_exponent_of_bi_invariant_atom() {
    // For k′ a_t k with Haar angles the exponent is log cosh t.
    for t in [0.5, 1.0, 2.0] {
        let dist = StepDistribution::bi_invariant(RadialMeasure::atom(t));
        let est = top_lyapunov_estimate(&dist, 4000, 64, SeedKey::new(5)).unwrap();
        let exact = f64::cosh(t).ln();
        assert!((est.value - exact).abs() < 4.0 * est.sigma() + 2e-3, "t={t}: {est:?} vs {exact}");
    }
}

#[test]
fn bi_invariant_steps_are_right_k_invariant() {
    // g·k_φ has the same law as g: compare the first column norms.
    let dist = StepDistribution::bi_invariant(RadialMeasure::atom(1.0));
    let mut r1 = SeedKey::new(6).rng();
    let mut r2 = SeedKey::new(7).rng();
    let k = GroupElement::rotation(0.9);
    let a: Vec<f64> = (0..20_000).map(|_| {
        let g = dist.sample_step(&mut r1);
        let v = g.apply([1.0, 0.0]);
        v[0].hypot(v[1])
    }).collect();
    let b: Vec<f64> = (0..20_000).map(|_| {
        let g = dist.sample_step(&mut r2).compose(&k).unwrap();
        let v = g.apply([1.0, 0.0]);
        v[0].hypot(v[1])
    }).collect();
    assert!(ks_two_sample(&a, &b).p_value > 1e-3);
    // A fixed right factor breaks the invariance.
    let fixed = StepDistribution::new(RadialMeasure::atom(1.0), LeftFactor::Fixed { angles: vec![0.0] }, 0.5).unwrap();
    let mut r3 = SeedKey::new(8).rng();
    let c: Vec<f64> = (0..20_000).map(|_| {
        let v = fixed.sample_step(&mut r3).apply([1.0, 0.0]);
        v[0].hypot(v[1])
    }).collect();
    assert!(ks_two_sample(&a, &c).p_value < 1e-6 || !fixed.is_bi_invariant());
}
