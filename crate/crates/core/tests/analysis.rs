use esp_core::{
    competitive_ratio, lemma1_bound, lemma1_grid_max, lower_bound_rho0, lower_bound_rho1,
    make_policy, MarketStats, StorageSpec, F_GRID_STEPS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn phi_sweep() -> impl Iterator<Item = f64> {
    (0..=38).map(|k| 1.0 + 0.5 * k as f64)
}

#[test]
fn lower_bounds_sit_below_the_guarantee() {
    for phi in phi_sweep() {
        assert!(lower_bound_rho0(phi) <= competitive_ratio(phi, 0.0) + 1e-12);
        assert!((competitive_ratio(phi, 0.0) - phi.sqrt()).abs() < 1e-12);
        assert!(lower_bound_rho1(phi) <= competitive_ratio(phi, 1.0));
        assert!((competitive_ratio(phi, 1.0) - (phi + 1.0)).abs() < 1e-12);
    }
}

#[test]
fn ratio_is_monotone() {
    let rhos: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    for phi in phi_sweep() {
        for w in rhos.windows(2) {
            assert!(competitive_ratio(phi, w[1]) >= competitive_ratio(phi, w[0]) - 1e-12);
        }
    }
    for &rho in &rhos {
        let vals: Vec<f64> = phi_sweep().map(|p| competitive_ratio(p, rho)).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }
}

#[test]
fn policy_threshold_balances_the_two_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..200 {
        let small = rng.gen_range(0.5..5.0);
        let big = small * rng.gen_range(1.0..20.0);
        let rho = rng.gen_range(0.0..1.0);
        let (eta_c, eta_d) = (rng.gen_range(0.7..1.0), rng.gen_range(1.0..1.3));
        let spec = StorageSpec::new(2.0, eta_c, eta_d, 2.0, 2.0, 0.0, 0.0).unwrap();
        let p = make_policy(&MarketStats::new(big, small, rho).unwrap(), &spec);
        let te = p.theta * eta_d / eta_c;
        let lhs = (te + rho * big) / small;
        let rhs = (big + rho * te) / te;
        assert!((lhs - rhs).abs() <= 1e-9 * lhs, "{lhs} {rhs}");
        let ratio = eta_c / eta_d;
        assert!(p.theta >= small * ratio * (1.0 - 1e-12));
        assert!(p.theta <= (big * small).sqrt() * ratio * (1.0 + 1e-12));
    }
}

#[test]
fn grid_search_respects_the_lemma_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..20 {
        let small: f64 = rng.gen_range(0.5..3.0);
        let big = small * rng.gen_range(1.0..10.0);
        let rho = rng.gen_range(0.0..1.0);
        let theta_eff = rng.gen_range(small..=(big * small).sqrt());
        let a = rng.gen_range(0.5..3.0);
        let found = lemma1_grid_max(big, small, theta_eff, rho, a, F_GRID_STEPS);
        assert!(found <= lemma1_bound(big, small, theta_eff, rho) + 1e-9);
    }
}
