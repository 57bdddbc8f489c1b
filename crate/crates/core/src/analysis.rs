//! Competitive-ratio formulas, lower-bound adversaries and empirical ratio
//! measurement.

use std::fmt;

use crate::error::{EspError, Result};
use crate::model::{step_state, Decision, MarketStats, Schedule, SlotInput, StorageSpec, Trace};
use crate::offline::solve_offline;
use crate::online::{run_lka, run_rhc, run_thb, run_thb_adaptive, OnlinePolicy};

/// Steps of the z-grid used by [`rho0_minmax`]; the grid includes B/2.
pub const Z_GRID_STEPS: usize = 1000;
/// Steps per axis of the grid used by [`lemma1_grid_max`].
pub const F_GRID_STEPS: usize = 50;

const ZERO_COST: f64 = 1e-12;

/// Upper bound on the threshold policy's cost ratio. `rho` above 1 is
/// treated as 1.
pub fn competitive_ratio(phi: f64, rho: f64) -> f64 {
    let rho = rho.clamp(0.0, 1.0);
    (rho * phi + rho + (4.0 * phi + rho * rho * (phi - 1.0).powi(2)).sqrt()) / 2.0
}

/// Best ratio any deterministic policy can guarantee without renewable.
pub fn lower_bound_rho0(phi: f64) -> f64 {
    (1.0 + phi.sqrt()) / 2.0
}

/// Best ratio any deterministic policy can guarantee with abundant renewable.
pub fn lower_bound_rho1(phi: f64) -> f64 {
    phi
}

/// A cost ratio; offline cost zero with positive online cost is unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite(f64),
    Unbounded,
}

impl Ratio {
    /// `online / offline`, with 0/0 taken as 1.
    pub fn of(online: f64, offline: f64) -> Self {
        if offline.abs() <= ZERO_COST {
            if online.abs() <= ZERO_COST {
                Ratio::Finite(1.0)
            } else {
                Ratio::Unbounded
            }
        } else {
            Ratio::Finite(online / offline)
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Ratio::Finite(v) => Some(*v),
            Ratio::Unbounded => None,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Ratio::Unbounded)
    }

    fn exceeds(&self, other: &Ratio) -> bool {
        match (self, other) {
            (Ratio::Unbounded, Ratio::Unbounded) => false,
            (Ratio::Unbounded, _) => true,
            (_, Ratio::Unbounded) => false,
            (Ratio::Finite(a), Ratio::Finite(b)) => a > b,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Finite(v) => write!(f, "{v}"),
            Ratio::Unbounded => f.write_str("inf"),
        }
    }
}

/// The two three-slot inputs that no policy can tell apart before slot 3.
/// Prices are (M, sqrt(Mm), m) and (M, sqrt(Mm), M), demand B/eta_d at slot 1.
pub fn adversary_rho0(big: f64, small: f64, capacity: f64, spec: &StorageSpec) -> Result<(Trace, Trace)> {
    let mid = (big * small).sqrt();
    let demand = [capacity / spec.eta_d, 0.0, 0.0];
    let zero = [0.0; 3];
    let s1 = Trace::from_columns(&demand, &[big, mid, small], &zero)?;
    let s2 = Trace::from_columns(&demand, &[big, mid, big], &zero)?;
    Ok((s1, s2))
}

/// Schedule on an [`adversary_rho0`] input: serve slot 1 from storage, then
/// charge `z` at slot 2 and the rest at slot 3.
pub fn rho0_response(trace: &Trace, spec: &StorageSpec, z: f64) -> Result<Schedule> {
    let b = spec.capacity;
    let demand = trace.slot(1).demand;
    let decisions = vec![
        Decision::new(demand, 0.0, 0.0, 0.0),
        Decision::new(0.0, 0.0, 0.0, z / spec.eta_c),
        Decision::new(0.0, 0.0, 0.0, (b - z) / spec.eta_c),
    ];
    Schedule::from_decisions(trace, spec, decisions)
}

/// Worst of the two adversary ratios when the policy charges `z` at slot 2.
pub fn rho0_ratio(s1: &Trace, s2: &Trace, spec: &StorageSpec, z: f64, opt: (f64, f64)) -> Result<Ratio> {
    let r1 = Ratio::of(rho0_response(s1, spec, z)?.cost, opt.0);
    let r2 = Ratio::of(rho0_response(s2, spec, z)?.cost, opt.1);
    Ok(if r1.exceeds(&r2) { r1 } else { r2 })
}

/// Grid search over the online response z in [0, B] with step B/`steps`:
/// returns the minimizing z and the min-max ratio. The spec needs full
/// boundary levels B.
pub fn rho0_minmax(big: f64, small: f64, spec: &StorageSpec, steps: usize) -> Result<(f64, f64)> {
    let (s1, s2) = adversary_rho0(big, small, spec.capacity, spec)?;
    let opt = (solve_offline(&s1, spec)?.cost, solve_offline(&s2, spec)?.cost);
    let mut best = (0.0, f64::INFINITY);
    for k in 0..=steps {
        let z = spec.capacity * k as f64 / steps.max(1) as f64;
        if let Ratio::Finite(r) = rho0_ratio(&s1, &s2, spec, z, opt)? {
            if r < best.1 {
                best = (z, r);
            }
        }
    }
    Ok(best)
}

/// Outcome of [`adversary_rho1`].
#[derive(Debug, Clone)]
pub struct Rho1Outcome {
    pub trace: Trace,
    /// Slot at which the policy first charged from the grid.
    pub bought_at: Option<usize>,
    /// The policy never bought within `t_max` slots.
    pub truncated: bool,
    pub online_cost: f64,
    pub offline_cost: f64,
    pub ratio: Ratio,
}

/// Feeds cheap empty slots until the policy charges from the grid, then
/// follows with free renewable and expensive demand. A policy that never
/// charges within `t_max` slots instead faces one expensive demand slot.
/// The spec should start and end empty.
pub fn adversary_rho1(
    alg: &mut dyn OnlinePolicy,
    big: f64,
    small: f64,
    capacity: f64,
    spec: &StorageSpec,
    t_max: usize,
) -> Result<Rho1Outcome> {
    let mut x = spec.initial;
    let mut slots = Vec::new();
    let mut online_cost = 0.0;
    let mut feed = |input: SlotInput, x: &mut f64, slots: &mut Vec<SlotInput>| {
        let dec = alg.decide(*x, &input, spec);
        *x = step_state(*x, &dec, spec).clamp(0.0, spec.capacity);
        slots.push(input);
        online_cost += input.price * dec.purchased();
        dec
    };
    let mut bought_at = None;
    for t in 1..=t_max {
        let dec = feed(SlotInput::new(0.0, small, 0.0), &mut x, &mut slots);
        if dec.grid_charge > 0.0 {
            bought_at = Some(t);
            break;
        }
    }
    if bought_at.is_some() {
        feed(SlotInput::new(0.0, small, capacity / spec.eta_c), &mut x, &mut slots);
    }
    feed(SlotInput::new(capacity / spec.eta_d, big, 0.0), &mut x, &mut slots);
    let trace = Trace::new(slots)?;
    let offline_cost = solve_offline(&trace, spec)?.cost;
    Ok(Rho1Outcome {
        trace,
        bought_at,
        truncated: bought_at.is_none(),
        online_cost,
        offline_cost,
        ratio: Ratio::of(online_cost, offline_cost),
    })
}

/// A point of the aggregate set over which the ratio bound is maximized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FPoint {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl FPoint {
    pub fn a3(&self, a: f64) -> f64 {
        a - self.a1 - self.a2
    }

    pub fn b3(&self, rho: f64, a: f64) -> f64 {
        rho * a - self.b1 - self.b2
    }

    /// Membership test with absolute slack `tol`.
    pub fn is_feasible(&self, rho: f64, a: f64, tol: f64) -> bool {
        let (a3, b3) = (self.a3(a), self.b3(rho, a));
        [self.a1, self.b1, self.a2, self.b2, a3, b3].iter().all(|&v| v >= -tol)
            && self.b1 <= self.a1 + tol
            && self.b2 <= rho * self.a2 + tol
            && rho * a3 <= b3 + tol
            && b3 <= a3 + tol
    }
}

/// Ratio of online to offline aggregate cost at `pt`.
pub fn lemma1_f(pt: &FPoint, big: f64, small: f64, theta_eff: f64, rho: f64, a: f64) -> Result<f64> {
    let (a3, b3) = (pt.a3(a), pt.b3(rho, a));
    let zeta = (pt.a1 - pt.b1) * big
        + (1.0 - rho) * pt.a2 * theta_eff
        + (rho * pt.a2 - pt.b2) * big
        + (1.0 - rho) * a3 * theta_eff;
    let xi = (pt.a1 - pt.b1) * theta_eff + (pt.a2 - pt.b2) * small + (a3 - b3) * small;
    if xi.abs() <= 1e-15 * a.max(1.0) * big {
        return Err(EspError::UndefinedPoint(format!("zero denominator at {pt:?}")));
    }
    Ok(zeta / xi)
}

/// The larger of the two boundary values of `lemma1_f`.
pub fn lemma1_bound(big: f64, small: f64, theta_eff: f64, rho: f64) -> f64 {
    ((theta_eff + rho * big) / small).max((big + rho * theta_eff) / theta_eff)
}

/// Largest `lemma1_f` over grid points of the feasible set, step `a / steps`
/// on every axis. Points with a zero denominator are skipped.
pub fn lemma1_grid_max(big: f64, small: f64, theta_eff: f64, rho: f64, a: f64, steps: usize) -> f64 {
    let h = a / steps as f64;
    let tol = 1e-12 * a.max(1.0);
    let mut best = f64::NEG_INFINITY;
    for i1 in 0..=steps {
        for i2 in 0..=steps - i1 {
            for j1 in 0..=i1 {
                for j2 in 0..=i2 {
                    let pt = FPoint { a1: i1 as f64 * h, b1: j1 as f64 * h, a2: i2 as f64 * h, b2: j2 as f64 * h };
                    if pt.b2 > rho * pt.a2 + tol {
                        break;
                    }
                    if !pt.is_feasible(rho, a, tol) {
                        continue;
                    }
                    if let Ok(v) = lemma1_f(&pt, big, small, theta_eff, rho, a) {
                        best = best.max(v);
                    }
                }
            }
        }
    }
    best
}

/// Algorithms compared against the offline optimum. Threshold and
/// lookahead variants without fixed statistics use each trace's own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Offline,
    Thb { stats: Option<MarketStats> },
    ThbAdaptive,
    Lka { window: usize, stats: Option<MarketStats> },
    Rhc { window: usize },
}

fn stats_or_oracle(stats: Option<MarketStats>, trace: &Trace, spec: &StorageSpec) -> Result<MarketStats> {
    match stats {
        Some(s) => Ok(s),
        None => MarketStats::for_trace(trace, spec),
    }
}

impl Algorithm {
    pub fn run(&self, trace: &Trace, spec: &StorageSpec) -> Result<Schedule> {
        match *self {
            Algorithm::Offline => solve_offline(trace, spec),
            Algorithm::Thb { stats } => run_thb(trace, spec, &stats_or_oracle(stats, trace, spec)?),
            Algorithm::ThbAdaptive => run_thb_adaptive(trace, spec),
            Algorithm::Lka { window, stats } => run_lka(trace, spec, &stats_or_oracle(stats, trace, spec)?, window),
            Algorithm::Rhc { window } => run_rhc(trace, spec, window),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Offline => "ofl",
            Algorithm::Thb { .. } => "thb",
            Algorithm::ThbAdaptive => "thb_adaptive",
            Algorithm::Lka { .. } => "lka",
            Algorithm::Rhc { .. } => "rhc",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RatioReport {
    /// Largest observed online-to-offline cost ratio.
    pub empirical: Ratio,
    /// Ratio bound for the worst price spread and renewable ratio seen.
    pub bound: f64,
    /// Instance attaining `empirical`.
    pub witness: Option<Trace>,
}

/// Runs `alg` and the offline optimum on every instance.
pub fn empirical_ratio(alg: Algorithm, instances: &[Trace], spec: &StorageSpec) -> Result<RatioReport> {
    let mut empirical = Ratio::Finite(f64::NEG_INFINITY);
    let mut witness = None;
    let mut bound: f64 = 1.0;
    for trace in instances {
        let stats = MarketStats::for_trace(trace, spec)?;
        bound = bound.max(competitive_ratio(stats.phi, stats.rho));
        let off = solve_offline(trace, spec)?.cost;
        let on = alg.run(trace, spec)?.cost;
        let r = Ratio::of(on, off);
        if witness.is_none() || r.exceeds(&empirical) {
            empirical = r;
            witness = Some(trace.clone());
        }
    }
    if witness.is_none() {
        empirical = Ratio::Finite(1.0);
    }
    Ok(RatioReport { empirical, bound, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::online::{make_policy, NeverBuy};

    #[test]
    fn ratio_formula_examples() {
        assert_eq!(competitive_ratio(1.0, 0.0), 1.0);
        assert!((competitive_ratio(5.0, 0.0) - 5f64.sqrt()).abs() < 1e-12);
        assert!((competitive_ratio(5.0, 1.0) - 6.0).abs() < 1e-12);
        assert_eq!(competitive_ratio(5.0, 3.0), competitive_ratio(5.0, 1.0));
        assert_eq!(lower_bound_rho0(1.0), 1.0);
        assert_eq!(lower_bound_rho0(4.0), 1.5);
        assert!((lower_bound_rho0(5.0) - 1.618034).abs() < 1e-6);
        assert_eq!(lower_bound_rho1(2.5), 2.5);
    }

    #[test]
    fn zero_over_zero_is_one() {
        assert_eq!(Ratio::of(0.0, 0.0), Ratio::Finite(1.0));
        assert_eq!(Ratio::of(1.0, 0.0), Ratio::Unbounded);
        assert_eq!(Ratio::Unbounded.to_string(), "inf");
    }

    #[test]
    fn rho0_instances() {
        let spec = StorageSpec::ideal(1.0, 1.0, 1.0).unwrap();
        let (s1, s2) = adversary_rho0(4.0, 1.0, 1.0, &spec).unwrap();
        assert_eq!(s1.prices(), vec![4.0, 2.0, 1.0]);
        assert_eq!(s2.prices(), vec![4.0, 2.0, 4.0]);
        assert_eq!(s1.demands(), vec![1.0, 0.0, 0.0]);
        assert_eq!(solve_offline(&s1, &spec).unwrap().cost, 1.0);
        let (z, r) = rho0_minmax(4.0, 1.0, &spec, Z_GRID_STEPS).unwrap();
        assert!((r - 1.5).abs() < 1e-3);
        assert!((z - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rho1_adversary() {
        let spec = StorageSpec::ideal(1.0, 0.0, 0.0).unwrap();
        let out = adversary_rho1(&mut NeverBuy, 5.0, 1.0, 1.0, &spec, 10).unwrap();
        assert!(out.truncated);
        assert_eq!(out.ratio, Ratio::Finite(5.0));

        let stats = MarketStats::new(5.0, 1.0, 0.0).unwrap();
        let mut buyer = make_policy(&stats, &spec);
        let out = adversary_rho1(&mut buyer, 5.0, 1.0, 1.0, &spec, 10).unwrap();
        assert_eq!(out.bought_at, Some(1));
        assert_eq!(out.trace.len(), 3);
        assert!(out.ratio.is_unbounded());

        let stats = MarketStats::new(5.0, 1.0, 1.0).unwrap();
        let mut abstainer = make_policy(&stats, &spec);
        let out = adversary_rho1(&mut abstainer, 5.0, 1.0, 1.0, &spec, 10).unwrap();
        assert_eq!(out.ratio, Ratio::Finite(5.0));
    }

    #[test]
    fn lemma1_boundary_points() {
        let p1 = FPoint { a1: 0.0, b1: 0.0, a2: 1.0, b2: 0.0 };
        let p2 = FPoint { a1: 1.0, b1: 0.0, a2: 0.0, b2: 0.0 };
        assert_eq!(lemma1_f(&p1, 4.0, 1.0, 2.0, 0.0, 1.0).unwrap(), 2.0);
        assert_eq!(lemma1_f(&p2, 4.0, 1.0, 2.0, 0.0, 1.0).unwrap(), 2.0);
        let all_free = FPoint { a1: 0.0, b1: 0.0, a2: 1.0, b2: 1.0 };
        assert!(matches!(
            lemma1_f(&all_free, 4.0, 1.0, 2.0, 1.0, 1.0),
            Err(EspError::UndefinedPoint(_))
        ));
        assert!(lemma1_grid_max(4.0, 1.0, 2.0, 0.0, 1.0, F_GRID_STEPS) <= 2.0 + 1e-9);
    }

    #[test]
    fn empirical_ratio_examples() {
        let spec = StorageSpec::ideal(2.0, 0.0, 0.0).unwrap();
        let zero = Trace::from_columns(&[0.0; 3], &[1.0; 3], &[0.0; 3]).unwrap();
        let r = empirical_ratio(Algorithm::Thb { stats: None }, &[zero], &spec).unwrap();
        assert_eq!(r.empirical, Ratio::Finite(1.0));
        let t3 = Trace::from_columns(&[0.0, 2.0, 0.0], &[1.0, 4.0, 4.0], &[0.0; 3]).unwrap();
        let stats = Some(MarketStats::new(4.0, 1.0, 0.0).unwrap());
        let r = empirical_ratio(Algorithm::Thb { stats }, &[t3], &spec).unwrap();
        assert_eq!(r.empirical, Ratio::Finite(1.0));
    }

    #[test]
    fn half_charge_attains_the_lower_bound() {
        for &phi in &[2.0, 4.0, 9.0] {
            let spec = StorageSpec::ideal(1.0, 1.0, 1.0).unwrap();
            let (s1, s2) = adversary_rho0(phi, 1.0, 1.0, &spec).unwrap();
            let opt = (solve_offline(&s1, &spec).unwrap().cost, solve_offline(&s2, &spec).unwrap().cost);
            let r = rho0_ratio(&s1, &s2, &spec, 0.5, opt).unwrap().value().unwrap();
            assert!((r - lower_bound_rho0(phi)).abs() < 1e-12);
        }
    }
}
