//! The flow-based offline solver against the level-grid dynamic program.

use esp_core::{
    brute_force_offline, solve_offline, solve_window, validate_schedule, EspError, StorageSpec,
    Trace, WindowProblem, DEFAULT_TOL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_grid_instance(rng: &mut ChaCha8Rng) -> (Trace, StorageSpec) {
    let t = rng.gen_range(1..=8);
    let cap = rng.gen_range(1..=4) as f64;
    let demand: Vec<f64> = (0..t).map(|_| rng.gen_range(0..=3) as f64).collect();
    let price: Vec<f64> = (0..t).map(|_| rng.gen_range(1..=5) as f64).collect();
    let renewable: Vec<f64> = (0..t)
        .map(|_| if rng.gen_bool(0.3) { rng.gen_range(1..=2) as f64 } else { 0.0 })
        .collect();
    let mu_c = rng.gen_range(1..=cap as usize) as f64;
    let mu_d = rng.gen_range(1..=cap as usize) as f64;
    let initial = rng.gen_range(0..=cap as usize) as f64;
    let terminal = rng.gen_range(0..=cap as usize) as f64;
    let spec = StorageSpec::new(cap, 1.0, 1.0, mu_c, mu_d, initial, terminal).unwrap();
    (Trace::from_columns(&demand, &price, &renewable).unwrap(), spec)
}

#[test]
fn flow_solver_matches_dynamic_program() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut solved = 0;
    for _ in 0..400 {
        let (trace, spec) = random_grid_instance(&mut rng);
        let steps = spec.capacity as usize;
        match (solve_offline(&trace, &spec), brute_force_offline(&trace, &spec, steps)) {
            (Ok(lp), Ok(dp)) => {
                assert!(
                    (lp.cost - dp.cost).abs() <= 1e-6 * dp.cost.max(1.0),
                    "lp {} dp {} on {trace:?} {spec:?}",
                    lp.cost,
                    dp.cost
                );
                let report = validate_schedule(&trace, &spec, &lp, DEFAULT_TOL).unwrap();
                assert!(report.is_feasible(), "{report:?}");
                solved += 1;
            }
            (Err(EspError::Infeasible { .. }), Err(EspError::Infeasible { .. })) => {}
            (a, b) => panic!("solvers disagree on feasibility: {a:?} vs {b:?}"),
        }
    }
    assert!(solved >= 200, "only {solved} feasible instances");
}

#[test]
fn optimal_cost_is_monotone_in_capacity_and_rates() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let t = rng.gen_range(2..=12);
        let demand: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..4.0)).collect();
        let price: Vec<f64> = (0..t).map(|_| rng.gen_range(1.0..6.0)).collect();
        let renewable: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..2.0)).collect();
        let trace = Trace::from_columns(&demand, &price, &renewable).unwrap();
        let small = StorageSpec::new(2.0, 0.9, 1.1, 1.0, 1.0, 0.0, 0.0).unwrap();
        let base = solve_offline(&trace, &small).unwrap().cost;
        assert!(base >= 0.0);
        let bigger = StorageSpec { capacity: 4.0, ..small };
        let faster = StorageSpec { mu_c: 3.0, mu_d: 3.0, ..small };
        assert!(solve_offline(&trace, &bigger).unwrap().cost <= base + 1e-9);
        assert!(solve_offline(&trace, &faster).unwrap().cost <= base + 1e-9);
    }
}

#[test]
fn full_window_equals_offline() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let t = rng.gen_range(1..=15);
        let demand: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..3.0)).collect();
        let price: Vec<f64> = (0..t).map(|_| rng.gen_range(1.0..5.0)).collect();
        let trace = Trace::from_columns(&demand, &price, &vec![0.0; t]).unwrap();
        let spec = StorageSpec::new(3.0, 0.9, 1.1, 2.0, 2.0, 1.0, 2.0).unwrap();
        let full = solve_offline(&trace, &spec).unwrap();
        let prob = WindowProblem::new(spec.initial, trace.slots().to_vec()).with_final(spec.terminal);
        let frag = solve_window(&prob, &spec).unwrap();
        assert!((full.cost - frag.cost).abs() <= 1e-9 * full.cost.max(1.0));
    }
}

#[test]
fn zero_cost_when_storage_and_renewable_cover_demand() {
    let trace = Trace::from_columns(&[1.0, 0.0, 2.0], &[3.0, 2.0, 5.0], &[0.0, 2.0, 0.0]).unwrap();
    let spec = StorageSpec::ideal(4.0, 1.0, 0.0).unwrap();
    assert_eq!(solve_offline(&trace, &spec).unwrap().cost, 0.0);
    let short = StorageSpec::ideal(4.0, 0.0, 0.0).unwrap();
    assert!(solve_offline(&trace, &short).unwrap().cost > 0.0);
}

#[test]
fn year_scale_horizon_is_tractable() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = 2000;
    let demand: Vec<f64> = (0..t).map(|i| 10.0 + 5.0 * ((i % 24) as f64 / 3.8).sin() + rng.gen_range(0.0..2.0)).collect();
    let price: Vec<f64> = (0..t).map(|i| 40.0 + 20.0 * ((i % 24) as f64 / 3.8).cos() + rng.gen_range(0.0..5.0)).collect();
    let renewable: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..3.0)).collect();
    let trace = Trace::from_columns(&demand, &price, &renewable).unwrap();
    let spec = StorageSpec::new(40.0, 0.9, 1.1, 30.0, 30.0, 0.0, 0.0).unwrap();
    let start = std::time::Instant::now();
    let s = solve_offline(&trace, &spec).unwrap();
    let elapsed = start.elapsed();
    assert!(validate_schedule(&trace, &spec, &s, DEFAULT_TOL).unwrap().is_feasible());
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
}
