//! Offline optimum of the storage problem, full horizon and windowed.
//!
//! The linear program is solved as a min-cost flow measured in storage
//! units: grid energy bought for storage costs `p / eta_c` per stored unit,
//! grid energy bought for demand costs `p / eta_d` per unit of demand scaled
//! by `eta_d`, so both efficiencies become plain arc costs and the storage
//! trajectory is the flow on the carry arcs between slots.

use crate::error::{EspError, Result};
use crate::flow::FlowGraph;
use crate::model::{cheapest_transition, Decision, Schedule, SlotInput, StorageSpec, Trace};

/// A sub-horizon to optimize from a known entry level.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowProblem {
    /// Level entering the window.
    pub x_init: f64,
    pub slots: Vec<SlotInput>,
    /// Renewable charge already committed per slot (empty for none). It
    /// enters storage unconditionally and uses up charging rate.
    pub preload: Vec<f64>,
    /// Required exit level; `None` leaves the right edge free.
    pub x_final: Option<f64>,
}

impl WindowProblem {
    pub fn new(x_init: f64, slots: Vec<SlotInput>) -> Self {
        Self {
            x_init,
            slots,
            preload: Vec::new(),
            x_final: None,
        }
    }

    pub fn with_final(mut self, level: f64) -> Self {
        self.x_final = Some(level);
        self
    }

    pub fn with_preload(mut self, preload: Vec<f64>) -> Self {
        self.preload = preload;
        self
    }
}

/// Optimal decisions over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub decisions: Vec<Decision>,
    /// `levels[0]` is the entry level.
    pub levels: Vec<f64>,
    pub cost: f64,
}

struct SlotArcs {
    renewable: Option<usize>,
    grid_charge: usize,
    discharge: usize,
}

/// Cost-minimal decisions for a window. Renewable supply present in
/// `prob.slots` is used optimally; committed `preload` is honored as is.
pub fn solve_window(prob: &WindowProblem, spec: &StorageSpec) -> Result<Fragment> {
    let n = prob.slots.len();
    if n == 0 {
        return Err(EspError::InvalidTrace("window must hold at least one slot".into()));
    }
    if !prob.preload.is_empty() && prob.preload.len() != n {
        return Err(EspError::LengthMismatch {
            expected: n,
            got: prob.preload.len(),
        });
    }
    let tol = 1e-9 * spec.capacity.max(1.0);
    if prob.x_init < -tol || prob.x_init > spec.capacity + tol {
        return Err(EspError::InvalidSpec(format!(
            "entry level {} outside [0, {}]",
            prob.x_init, spec.capacity
        )));
    }
    let preload = |i: usize| prob.preload.get(i).copied().unwrap_or(0.0);
    let (eta_c, eta_d) = (spec.eta_c, spec.eta_d);

    // nodes: super source, grid, sink, then (charge, hub, demand) per slot
    const SUPER: usize = 0;
    const GRID: usize = 1;
    const SINK: usize = 2;
    let charge_node = |i: usize| 3 + 3 * i;
    let hub = |i: usize| 4 + 3 * i;
    let demand_node = |i: usize| 5 + 3 * i;
    let mut g = FlowGraph::new(3 + 3 * n);

    let max_price = prob.slots.iter().map(|s| s.price).fold(0.0, f64::max);
    // any augmenting path's real cost is bounded by (#arcs on a path) * max
    // unit cost, so this weight makes mandatory arcs dominate
    let unit = max_price / eta_c;
    let big = 4.0 * (3 * n + 3) as f64 * unit.max(1.0) + 1.0;

    let scale = prob.x_init
        + spec.capacity
        + prob
            .slots
            .iter()
            .map(|s| eta_d * s.demand + eta_c * s.renewable)
            .sum::<f64>()
        + (0..n).map(preload).sum::<f64>();
    let eps = 1e-13 * scale.max(1.0);

    g.add_arc(SUPER, GRID, f64::INFINITY, 0.0);
    let mut mandatory = Vec::new();
    if prob.x_init > 0.0 {
        mandatory.push((0usize, g.add_arc(SUPER, hub(0), prob.x_init, -big), prob.x_init));
    }

    let mut arcs = Vec::with_capacity(n);
    for (i, s) in prob.slots.iter().enumerate() {
        let pre = eta_c * preload(i);
        if pre > 0.0 {
            mandatory.push((i + 1, g.add_arc(SUPER, hub(i), pre, -big), pre));
        }
        let renewable = (s.renewable > 0.0)
            .then(|| g.add_arc(GRID, charge_node(i), eta_c * s.renewable, 0.0));
        let grid_charge = g.add_arc(GRID, charge_node(i), f64::INFINITY, s.price / eta_c);
        let room = (eta_c * spec.mu_c - pre).max(0.0);
        g.add_arc(charge_node(i), hub(i), room, 0.0);
        let discharge = g.add_arc(hub(i), demand_node(i), eta_d * spec.mu_d, 0.0);
        g.add_arc(GRID, demand_node(i), f64::INFINITY, s.price / eta_d);
        if s.demand > 0.0 {
            let need = eta_d * s.demand;
            mandatory.push((i + 1, g.add_arc(demand_node(i), SINK, need, -big), need));
        }
        if i + 1 < n {
            g.add_arc(hub(i), hub(i + 1), spec.capacity, 0.0);
        }
        arcs.push(SlotArcs {
            renewable,
            grid_charge,
            discharge,
        });
    }
    let terminal = match prob.x_final {
        Some(level) => {
            if level > 0.0 {
                let id = g.add_arc(hub(n - 1), SINK, level, -big);
                Some((id, level))
            } else {
                None
            }
        }
        None => {
            g.add_arc(hub(n - 1), SINK, spec.capacity, 0.0);
            None
        }
    };

    g.min_cost_flow(SUPER, SINK, eps);

    let check = 1e-9 * scale.max(1.0);
    for &(slot, id, need) in &mandatory {
        if need - g.flow(id) > check {
            return Err(EspError::Infeasible {
                slot: slot.max(1),
                reason: format!(
                    "stored energy cannot be absorbed: {} of {} left over",
                    need - g.flow(id),
                    need
                ),
            });
        }
    }
    if let Some((id, level)) = terminal {
        if level - g.flow(id) > check {
            return Err(EspError::Infeasible {
                slot: n,
                reason: format!(
                    "exit level {level} unreachable, reached {}",
                    g.flow(id)
                ),
            });
        }
    }

    let clean = |v: f64| if v > eps { v } else { 0.0 };
    let mut decisions = Vec::with_capacity(n);
    for (i, (s, a)) in prob.slots.iter().zip(&arcs).enumerate() {
        let discharge = clean(g.flow(a.discharge) / eta_d).min(s.demand);
        let renewable = a.renewable.map_or(0.0, |id| clean(g.flow(id) / eta_c));
        decisions.push(Decision {
            discharge,
            renewable_charge: renewable + preload(i),
            grid_demand: (s.demand - discharge).max(0.0),
            grid_charge: clean(g.flow(a.grid_charge) / eta_c),
        });
    }
    Ok(fragment_from(prob.x_init, &prob.slots, decisions, spec))
}

fn fragment_from(x_init: f64, slots: &[SlotInput], decisions: Vec<Decision>, spec: &StorageSpec) -> Fragment {
    let mut levels = Vec::with_capacity(decisions.len() + 1);
    let mut x = x_init;
    levels.push(x);
    for d in &decisions {
        x = crate::model::step_state(x, d, spec);
        levels.push(x);
    }
    let cost = slots
        .iter()
        .zip(&decisions)
        .map(|(s, d)| s.price * d.purchased())
        .sum();
    Fragment {
        decisions,
        levels,
        cost,
    }
}

/// Offline-optimal schedule over the whole trace, honoring both boundary
/// levels.
pub fn solve_offline(trace: &Trace, spec: &StorageSpec) -> Result<Schedule> {
    spec.validate()?;
    spec.check_reachable(trace)?;
    let prob = WindowProblem::new(spec.initial, trace.slots().to_vec()).with_final(spec.terminal);
    let frag = solve_window(&prob, spec)?;
    Schedule::from_decisions(trace, spec, frag.decisions)
}

/// Largest horizon accepted by [`brute_force_offline`].
pub const BRUTE_FORCE_MAX_SLOTS: usize = 12;
/// Finest level grid accepted by [`brute_force_offline`].
pub const BRUTE_FORCE_MAX_STEPS: usize = 64;

/// Dynamic program over the storage levels `{0, B/n, ..., B}`. Exact among
/// schedules whose end-of-slot levels stay on the grid; used to cross-check
/// [`solve_offline`] on grid-aligned instances.
pub fn brute_force_offline(trace: &Trace, spec: &StorageSpec, grid_steps: usize) -> Result<Schedule> {
    spec.validate()?;
    let t_len = trace.len();
    if t_len > BRUTE_FORCE_MAX_SLOTS {
        return Err(EspError::SizeLimit(format!(
            "horizon {t_len} exceeds {BRUTE_FORCE_MAX_SLOTS}"
        )));
    }
    if grid_steps == 0 || grid_steps > BRUTE_FORCE_MAX_STEPS {
        return Err(EspError::SizeLimit(format!(
            "grid steps {grid_steps} outside 1..={BRUTE_FORCE_MAX_STEPS}"
        )));
    }
    let step = spec.capacity / grid_steps as f64;
    let levels: Vec<f64> = (0..=grid_steps).map(|k| k as f64 * step).collect();
    let on_grid = |x: f64| -> Result<usize> {
        if spec.capacity == 0.0 {
            return Ok(0);
        }
        let k = (x / step).round();
        if (k * step - x).abs() > 1e-9 * spec.capacity.max(1.0) {
            return Err(EspError::SizeLimit(format!("boundary level {x} is not on the grid")));
        }
        Ok(k as usize)
    };
    let start = on_grid(spec.initial)?;
    let end = on_grid(spec.terminal)?;
    let width = if spec.capacity == 0.0 { 1 } else { levels.len() };

    // best[t][k]: cheapest cost to sit at level k after slot t
    let mut best = vec![vec![f64::INFINITY; width]; t_len + 1];
    let mut choice: Vec<Vec<Option<(usize, Decision)>>> = vec![vec![None; width]; t_len + 1];
    best[0][start] = 0.0;
    for t in 1..=t_len {
        let slot = trace.slot(t);
        for from in 0..width {
            let base = best[t - 1][from];
            if base.is_infinite() {
                continue;
            }
            for to in 0..width {
                let delta = levels[to] - levels[from];
                if let Some(dec) = cheapest_transition(slot, delta, spec) {
                    let c = base + slot.price * dec.purchased();
                    if c < best[t][to] {
                        best[t][to] = c;
                        choice[t][to] = Some((from, dec));
                    }
                }
            }
        }
    }
    if best[t_len][end].is_infinite() {
        return Err(EspError::Infeasible {
            slot: t_len,
            reason: "no grid-restricted schedule reaches the terminal level".into(),
        });
    }
    let mut decisions = vec![Decision::default(); t_len];
    let mut k = end;
    for t in (1..=t_len).rev() {
        let (from, dec) = choice[t][k].expect("reachable state has a predecessor");
        decisions[t - 1] = dec;
        k = from;
    }
    Schedule::from_decisions(trace, spec, decisions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_schedule, DEFAULT_TOL};

    fn spike() -> (Trace, StorageSpec) {
        let trace = Trace::from_columns(&[0.0, 2.0, 0.0], &[1.0, 4.0, 4.0], &[0.0; 3]).unwrap();
        let spec = StorageSpec::ideal(2.0, 0.0, 0.0).unwrap();
        (trace, spec)
    }

    #[test]
    fn zero_trace_costs_nothing() {
        let trace = Trace::from_columns(&[0.0; 4], &[3.0; 4], &[0.0; 4]).unwrap();
        let spec = StorageSpec::ideal(5.0, 0.0, 0.0).unwrap();
        let s = solve_offline(&trace, &spec).unwrap();
        assert_eq!(s.cost, 0.0);
        assert!(s.decisions.iter().all(|d| *d == Decision::default()));
    }

    #[test]
    fn spike_trace_buys_early() {
        let (trace, spec) = spike();
        let s = solve_offline(&trace, &spec).unwrap();
        assert!((s.cost - 2.0).abs() < 1e-9);
        assert!((s.decisions[0].grid_charge - 2.0).abs() < 1e-9);
        assert!((s.decisions[1].discharge - 2.0).abs() < 1e-9);
        assert!(validate_schedule(&trace, &spec, &s, DEFAULT_TOL).unwrap().is_feasible());
    }

    #[test]
    fn lower_bound_instance_two() {
        // prices (M, sqrt(Mm), M), demand B/eta_d at slot 1, storage full at
        // both ends: the optimum refills at the middle price
        let (big, small, cap) = (9.0_f64, 1.0_f64, 3.0);
        let spec = StorageSpec::new(cap, 0.8, 1.25, cap * 2.0, cap * 2.0, cap, cap).unwrap();
        let mid = (big * small).sqrt();
        let trace =
            Trace::from_columns(&[cap / spec.eta_d, 0.0, 0.0], &[big, mid, big], &[0.0; 3]).unwrap();
        let s = solve_offline(&trace, &spec).unwrap();
        assert!((s.cost - mid * cap / spec.eta_c).abs() < 1e-9);
    }

    #[test]
    fn window_examples() {
        let spec = StorageSpec::ideal(2.0, 0.0, 0.0).unwrap();
        let idle = solve_window(&WindowProblem::new(0.0, vec![SlotInput::new(0.0, 3.0, 0.0)]), &spec).unwrap();
        assert_eq!(idle.cost, 0.0);

        let cheap_first = WindowProblem::new(
            0.0,
            vec![SlotInput::new(0.0, 1.0, 0.0), SlotInput::new(1.0, 4.0, 0.0)],
        );
        let f = solve_window(&cheap_first, &spec).unwrap();
        assert!((f.cost - 1.0).abs() < 1e-12);
        assert!((f.decisions[0].grid_charge - 1.0).abs() < 1e-12);
        assert!((f.decisions[1].discharge - 1.0).abs() < 1e-12);

        let cheap_last = WindowProblem::new(
            0.0,
            vec![SlotInput::new(0.0, 4.0, 0.0), SlotInput::new(1.0, 1.0, 0.0)],
        );
        let f = solve_window(&cheap_last, &spec).unwrap();
        assert!((f.cost - 1.0).abs() < 1e-12);
        assert_eq!(f.decisions[0], Decision::default());
        assert!((f.decisions[1].grid_demand - 1.0).abs() < 1e-12);
    }

    #[test]
    fn preload_is_honored() {
        let spec = StorageSpec::ideal(3.0, 0.0, 0.0).unwrap();
        let prob = WindowProblem::new(
            0.0,
            vec![SlotInput::new(0.0, 1.0, 0.0), SlotInput::new(2.0, 5.0, 0.0)],
        )
        .with_preload(vec![1.0, 0.0]);
        let f = solve_window(&prob, &spec).unwrap();
        assert!((f.levels[1] - 2.0).abs() < 1e-12);
        assert!((f.decisions[0].renewable_charge - 1.0).abs() < 1e-12);
        assert!((f.cost - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unreachable_terminal_is_infeasible() {
        let trace = Trace::from_columns(&[0.0; 2], &[1.0; 2], &[0.0; 2]).unwrap();
        let spec = StorageSpec::new(10.0, 1.0, 1.0, 1.0, 1.0, 0.0, 5.0).unwrap();
        assert!(matches!(solve_offline(&trace, &spec), Err(EspError::Infeasible { .. })));
        // too much stored energy with no demand to serve
        let drain = StorageSpec::new(10.0, 1.0, 1.0, 1.0, 1.0, 5.0, 0.0).unwrap();
        assert!(matches!(solve_offline(&trace, &drain), Err(EspError::Infeasible { .. })));
    }

    #[test]
    fn brute_force_examples() {
        let (trace, spec) = spike();
        let s = brute_force_offline(&trace, &spec, 2).unwrap();
        assert!((s.cost - 2.0).abs() < 1e-12);

        let zero = Trace::from_columns(&[0.0; 3], &[2.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(brute_force_offline(&zero, &spec, 4).unwrap().cost, 0.0);

        let single = Trace::from_columns(&[3.0], &[2.5], &[0.0]).unwrap();
        assert!((brute_force_offline(&single, &spec, 4).unwrap().cost - 7.5).abs() < 1e-12);
    }

    #[test]
    fn brute_force_refuses_large_inputs() {
        let trace = Trace::from_columns(&[0.0; 13], &[1.0; 13], &[0.0; 13]).unwrap();
        let spec = StorageSpec::ideal(2.0, 0.0, 0.0).unwrap();
        assert!(matches!(brute_force_offline(&trace, &spec, 2), Err(EspError::SizeLimit(_))));
        let (small, _) = spike();
        assert!(matches!(brute_force_offline(&small, &spec, 65), Err(EspError::SizeLimit(_))));
    }
}
