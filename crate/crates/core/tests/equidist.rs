use ergwalk_core::drift::{recurrence_statistic, DriftFunction, RECURRENCE_GRID};
use ergwalk_core::equidist::{
    bootstrap_reference, dictionary_distance, ensemble_modes, pathwise_checkpoints,
    pathwise_empirical, reference_means, run_walk, torus_escape, ObservableDictionary,
};
use ergwalk_core::{RadialMeasure, SeedKey, Space, StepDistribution};

fn atom_one() -> StepDistribution {
    StepDistribution::bi_invariant(RadialMeasure::atom(1.0))
}

#[test]
fn torus_path_equidistributes() {
    let dict = ObservableDictionary::standard();
    let refm = reference_means(&Space::torus(), &dict, 200_000, SeedKey::new(1)).unwrap();
    let path = run_walk(&atom_one(), &Space::torus().base_point(), 200_000, SeedKey::new(2)).unwrap();
    let report = pathwise_checkpoints(&dict, &path, &refm, 1024);
    assert!(report.final_distance < 0.02, "{report:?}");
    assert!(report.monotone, "{report:?}");
    assert!(torus_escape(&path).no_escape);
}

#[test]
fn bootstrap_chains_agree_with_the_exact_reference() {
    let dict = ObservableDictionary::standard();
    let refm = reference_means(&Space::torus(), &dict, 200_000, SeedKey::new(3)).unwrap();
    let b = bootstrap_reference(&dict, &atom_one(), &Space::torus().base_point(), 4, 50_000, SeedKey::new(4)).unwrap();
    assert!(b.max_pairwise < 0.03);
    assert!(dictionary_distance(&b.pooled, &refm) < 0.02);
}

#[test]
fn ensemble_modes_from_the_standard_lattice() {
    let dict = ObservableDictionary::standard();
    let refm = reference_means(&Space::torus(), &dict, 200_000, SeedKey::new(5)).unwrap();
    let m = ensemble_modes(&dict, &atom_one(), &Space::torus().base_point(), 50, 5_000, &refm, SeedKey::new(6)).unwrap();
    assert!(m.instant_distance < 0.05 && m.cesaro_distance < 0.05, "{m:?}");
    assert!(m.instant_not_worse);
}

#[test]
fn burn_in_drops_the_start() {
    let dict = ObservableDictionary::standard();
    let path = run_walk(&atom_one(), &Space::torus().base_point(), 1000, SeedKey::new(7)).unwrap();
    let all = pathwise_empirical(&dict, &path, 0);
    let tail = pathwise_empirical(&dict, &path, 999);
    assert_eq!(tail.count, 1);
    assert_eq!(tail.values, dict.eval(&path[999]));
    assert_eq!(all.count, 1000);
}

#[test]
fn occupation_tail_of_inverse_systole() {
    // Along a reference-distributed path P(systole⁻¹ > M) = (3/π)/M².
    let path = run_walk(&atom_one(), &Space::torus().base_point(), 100_000, SeedKey::new(8)).unwrap();
    let t = recurrence_statistic(&path, &DriftFunction::systole_power(1.0).unwrap(), &RECURRENCE_GRID).unwrap();
    let exact = 3.0 / std::f64::consts::PI / 4.0;
    assert!((t.rows[0].fraction - exact).abs() < 0.01, "{t:?}");
}

#[test]
fn parallel_results_do_not_depend_on_thread_count() {
    let dict = ObservableDictionary::standard();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let r = reference_means(&Space::torus(), &dict, 20_000, SeedKey::new(9)).unwrap();
                let b = bootstrap_reference(&dict, &atom_one(), &Space::torus().base_point(), 4, 2_000, SeedKey::new(10)).unwrap();
                (r, b)
            })
    };
    assert_eq!(run(1), run(3));
}
