use ergwalk_core::drift::{
    apply_markov, compose_v, contraction_scan, find_contraction_horizon, spanning_lattices,
    verify_drift, DriftFunction, FitMode, HorizonBudget,
};
use ergwalk_core::torus::LatticePoint;
use ergwalk_core::{GroupElement, LeftFactor, Point, RadialMeasure, SeedKey, StepDistribution};

/// Shortest nonzero vector by brute force over small coefficients.
fn brute_systole(b1: [f64; 2], b2: [f64; 2]) -> f64 {
    let mut best = f64::INFINITY;
    for i in -30i32..=30 {
        for j in -30i32..=30 {
            if (i, j) != (0, 0) {
                let v = [i as f64 * b1[0] + j as f64 * b2[0], i as f64 * b1[1] + j as f64 * b2[1]];
                best = best.min(v[0].hypot(v[1]));
            }
        }
    }
    best
}

#[test]
fn one_step_average_matches_angle_quadrature() {
    // Bi-invariant atom: π f(x) = (1/2π) ∫ f(a_t k_θ x) dθ.
    let t = 1.0;
    let dist = StepDistribution::bi_invariant(RadialMeasure::atom(t));
    let x0 = LatticePoint::from_shape(0.2, 1.7, 0.4).unwrap().reduce().unwrap();
    let (b1, b2) = x0.vectors();
    let n = 4096;
    let mut q = 0.0;
    for i in 0..n {
        let th = (i as f64 + 0.5) / n as f64 * std::f64::consts::TAU;
        let g = GroupElement::diag_flow(t).compose(&GroupElement::rotation(th)).unwrap();
        let s = brute_systole(g.apply(b1), g.apply(b2));
        q += s.powf(-0.5).max(1.0);
    }
    q /= n as f64;
    let f = DriftFunction::systole_power(0.5).unwrap();
    let fv = |p: &Point| f.value(p);
    let est = apply_markov(&fv, &dist, &Point::Lattice(x0), 1, 40_000, SeedKey::new(11)).unwrap();
    assert!(
        (est.estimate.value - q).abs() < 4.0 * est.estimate.sigma() + 1e-9,
        "mc {} vs quadrature {q}",
        est.estimate.value
    );
}

#[test]
fn drift_contracts_for_atom_two_and_not_for_rotations() {
    let f = DriftFunction::systole_power(0.5).unwrap();
    let points = spanning_lattices(1e-6, 120, SeedKey::new(3)).unwrap();
    let dist = StepDistribution::bi_invariant(RadialMeasure::atom(2.0));
    let est = verify_drift(&f, &dist, &points, 1, 1000, SeedKey::new(4)).unwrap();
    eprintln!("{est:?}");
    assert!(est.f_range.0 < 2.0 && est.f_range.1 > 500.0);
    assert!(est.holds);
    let rot = StepDistribution::bi_invariant(RadialMeasure::atom(0.0));
    let est = verify_drift(&f, &rot, &points, 1, 100, SeedKey::new(4)).unwrap();
    eprintln!("{est:?}");
    assert!(!est.holds);
    assert!((est.alpha_hat - 1.0).abs() < 1e-6);
}

#[test]
fn constant_function_reports_beta_only() {
    let points = spanning_lattices(1e-3, 100, SeedKey::new(5)).unwrap();
    let dist = StepDistribution::bi_invariant(RadialMeasure::atom(1.0));
    let est = verify_drift(&DriftFunction::Constant, &dist, &points, 1, 100, SeedKey::new(6)).unwrap();
    assert_eq!(est.mode, FitMode::BetaOnly);
    assert_eq!(est.beta_hat, 1.0);
    assert!(!est.holds);
}

#[test]
fn single_band_is_ill_conditioned() {
    let points: Vec<Point> = (0..100)
        .map(|i| Point::Lattice(LatticePoint::from_shape(0.0, 1.0 + 0.001 * i as f64, 0.0).unwrap()))
        .collect();
    let dist = StepDistribution::bi_invariant(RadialMeasure::atom(1.0));
    let f = DriftFunction::systole_power(0.5).unwrap();
    assert!(verify_drift(&f, &dist, &points, 1, 100, SeedKey::new(7)).is_err());
}

#[test]
fn composed_v_follows_the_contraction_chain() {
    let f = DriftFunction::systole_power(0.5).unwrap();
    let dist = StepDistribution::bi_invariant(RadialMeasure::atom(2.0));
    let points = spanning_lattices(1e-6, 120, SeedKey::new(8)).unwrap();
    let budget = HorizonBudget { points: &points, n_inner: 1000, t0: 0.5, excursion_samples: 20_000 };
    let h = find_contraction_horizon(&f, &dist, 0.9, 4, &budget, SeedKey::new(9)).unwrap();
    let m = h.m.unwrap();
    let alpha = h.estimate.as_ref().unwrap().alpha_upper();
    let v = compose_v(&f, &dist, m, alpha, 0.5).unwrap();
    let est = verify_drift(&v, &dist, &points, 1, 1000, SeedKey::new(10)).unwrap();
    eprintln!("m={m} alpha={alpha} {est:?}");
    assert!(est.alpha_hat <= v.promised_factor() + 2.0 * est.ci);
    assert!(est.holds);
}

#[test]
fn small_steps_need_longer_horizons() {
    let f = DriftFunction::systole_power(0.5).unwrap();
    let dist = StepDistribution::new(RadialMeasure::uniform(0.0, 0.1), LeftFactor::Haar, 0.5).unwrap();
    let points = spanning_lattices(1e-4, 100, SeedKey::new(12)).unwrap();
    let budget = HorizonBudget { points: &points, n_inner: 100, t0: 0.5, excursion_samples: 5_000 };
    let r = contraction_scan(&f, &dist, 0.5, 3, &budget, SeedKey::new(13)).unwrap();
    assert!(r.m.is_none());
    for w in r.rows.windows(2) {
        assert!(w[1].short_excursion <= w[0].short_excursion);
    }
    assert!(find_contraction_horizon(&f, &dist, 0.5, 3, &budget, SeedKey::new(13)).is_err());
}
