//! Online policies: the threshold policy, its adaptive variant, the
//! lookahead policy and the receding-horizon baseline.

use crate::error::{EspError, Result};
use crate::model::{
    cheapest_transition, step_state, Decision, MarketStats, Schedule, SlotInput, StorageSpec,
    Trace, DEFAULT_TOL,
};
use crate::offline::{solve_window, WindowProblem};

/// Buy threshold and grid storage target of the threshold policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    pub theta: f64,
    pub b_hat: f64,
    pub stats: MarketStats,
}

/// Run state of an online policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineState {
    /// Storage level after the last decided slot.
    pub x: f64,
    /// Number of slots decided so far.
    pub t: usize,
    /// Running price maximum (0 before the first observation).
    pub est_max: f64,
    /// Running price minimum (infinite before the first observation).
    pub est_min: f64,
    /// Renewable seen so far.
    pub est_rho_num: f64,
    /// Demand seen so far.
    pub est_rho_den: f64,
}

impl OnlineState {
    pub fn new(x: f64) -> Self {
        Self {
            x,
            t: 0,
            est_max: 0.0,
            est_min: f64::INFINITY,
            est_rho_num: 0.0,
            est_rho_den: 0.0,
        }
    }

    /// Folds one slot's inputs into the running estimates.
    pub fn observe(&mut self, input: &SlotInput) {
        self.est_max = self.est_max.max(input.price);
        self.est_min = self.est_min.min(input.price);
        self.est_rho_num += input.renewable;
        self.est_rho_den += input.demand;
    }

    /// Renewable ratio estimate; 0 while no demand has been seen.
    pub fn est_rho(&self, spec: &StorageSpec) -> f64 {
        if self.est_rho_den > 0.0 {
            spec.efficiency_ratio() * self.est_rho_num / self.est_rho_den
        } else {
            0.0
        }
    }

    pub fn estimated_stats(&self, spec: &StorageSpec) -> Result<MarketStats> {
        MarketStats::new(self.est_max, self.est_min, self.est_rho(spec))
    }

    fn advance(&mut self, dec: &Decision, spec: &StorageSpec) {
        self.x = step_state(self.x, dec, spec).clamp(0.0, spec.capacity);
        self.t += 1;
    }
}

/// Threshold and target for the given market statistics.
pub fn make_policy(stats: &MarketStats, spec: &StorageSpec) -> ThresholdPolicy {
    let rho = stats.rho.min(1.0);
    let (big, small) = (stats.max_price, stats.min_price);
    let spread = big - small;
    let root = ((rho * rho * spread * spread + 4.0 * big * small).sqrt() - rho * spread) / 2.0;
    ThresholdPolicy {
        theta: root * spec.efficiency_ratio(),
        b_hat: spec.capacity * (1.0 - rho),
        stats: *stats,
    }
}

/// One slot of the threshold policy from level `x`.
pub fn thb_decision(policy: &ThresholdPolicy, x: f64, input: &SlotInput, spec: &StorageSpec) -> Decision {
    let r_b = input
        .renewable
        .min((spec.capacity - x) / spec.eta_c)
        .min(spec.mu_c)
        .max(0.0);
    if input.price <= policy.theta {
        let room = ((policy.b_hat - x) / spec.eta_c - r_b).max(0.0);
        let rate = (spec.mu_c - r_b).max(0.0);
        Decision::new(0.0, r_b, input.demand, room.min(rate))
    } else {
        let d = input.demand.min(spec.mu_d).min(x / spec.eta_d).max(0.0);
        Decision::new(d, r_b, input.demand - d, 0.0)
    }
}

pub fn thb_step(
    policy: &ThresholdPolicy,
    state: &OnlineState,
    input: &SlotInput,
    spec: &StorageSpec,
) -> (Decision, OnlineState) {
    let dec = thb_decision(policy, state.x, input, spec);
    let mut next = *state;
    next.advance(&dec, spec);
    (dec, next)
}

/// A causal policy deciding one slot at a time from the current level.
pub trait OnlinePolicy {
    fn decide(&mut self, x: f64, input: &SlotInput, spec: &StorageSpec) -> Decision;
}

impl OnlinePolicy for ThresholdPolicy {
    fn decide(&mut self, x: f64, input: &SlotInput, spec: &StorageSpec) -> Decision {
        thb_decision(self, x, input, spec)
    }
}

/// Threshold policy re-derived every slot from running estimates.
#[derive(Debug, Clone)]
pub struct AdaptiveThb {
    pub state: OnlineState,
    pub policy: Option<ThresholdPolicy>,
}

impl AdaptiveThb {
    pub fn new(spec: &StorageSpec) -> Self {
        Self {
            state: OnlineState::new(spec.initial),
            policy: None,
        }
    }
}

impl OnlinePolicy for AdaptiveThb {
    fn decide(&mut self, x: f64, input: &SlotInput, spec: &StorageSpec) -> Decision {
        self.state.observe(input);
        let stats = self
            .state
            .estimated_stats(spec)
            .expect("running extremes of valid prices are valid stats");
        let policy = make_policy(&stats, spec);
        self.policy = Some(policy);
        let dec = thb_decision(&policy, x, input, spec);
        self.state.x = x;
        self.state.advance(&dec, spec);
        dec
    }
}

/// Stores renewable and serves demand from storage, never buying for it.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeverBuy;

impl OnlinePolicy for NeverBuy {
    fn decide(&mut self, x: f64, input: &SlotInput, spec: &StorageSpec) -> Decision {
        let r_b = input
            .renewable
            .min((spec.capacity - x) / spec.eta_c)
            .min(spec.mu_c)
            .max(0.0);
        let d = input.demand.min(spec.mu_d).min(x / spec.eta_d).max(0.0);
        Decision::new(d, r_b, input.demand - d, 0.0)
    }
}

/// Replaces the last decision, when needed, by the cheapest one that lands
/// exactly on the terminal level, and prices the difference as forced cost.
fn close_terminal(trace: &Trace, spec: &StorageSpec, mut decisions: Vec<Decision>) -> Result<Schedule> {
    let t_len = decisions.len();
    let mut x = spec.initial;
    for dec in &decisions[..t_len - 1] {
        x = step_state(x, dec, spec);
    }
    let last = decisions[t_len - 1];
    let end = step_state(x, &last, spec);
    let tol = DEFAULT_TOL * spec.capacity.max(1.0);
    let mut forced = 0.0;
    if (end - spec.terminal).abs() > tol {
        let input = trace.slot(t_len);
        let fixed = cheapest_transition(input, spec.terminal - x, spec).ok_or_else(|| {
            EspError::Infeasible {
                slot: t_len,
                reason: format!(
                    "level {x} before the last slot cannot be brought to the terminal level {}",
                    spec.terminal
                ),
            }
        })?;
        forced = input.price * (fixed.purchased() - last.purchased()).max(0.0);
        decisions[t_len - 1] = fixed;
    }
    let mut sched = Schedule::from_decisions(trace, spec, decisions)?;
    sched.forced_cost = forced;
    Ok(sched)
}

/// Runs a causal policy over the whole trace with terminal correction.
pub fn run_policy<P: OnlinePolicy + ?Sized>(policy: &mut P, trace: &Trace, spec: &StorageSpec) -> Result<Schedule> {
    spec.validate()?;
    let mut x = spec.initial;
    let mut decisions = Vec::with_capacity(trace.len());
    for input in trace.slots() {
        let dec = policy.decide(x, input, spec);
        x = step_state(x, &dec, spec).clamp(0.0, spec.capacity);
        decisions.push(dec);
    }
    close_terminal(trace, spec, decisions)
}

/// Threshold policy with fixed statistics, used verbatim.
pub fn run_thb(trace: &Trace, spec: &StorageSpec, stats: &MarketStats) -> Result<Schedule> {
    let mut policy = make_policy(stats, spec);
    run_policy(&mut policy, trace, spec)
}

/// Threshold policy with statistics estimated from the inputs seen so far.
pub fn run_thb_adaptive(trace: &Trace, spec: &StorageSpec) -> Result<Schedule> {
    run_thb_adaptive_traced(trace, spec).map(|(s, _)| s)
}

/// As [`run_thb_adaptive`], also returning the final estimator state.
pub fn run_thb_adaptive_traced(trace: &Trace, spec: &StorageSpec) -> Result<(Schedule, OnlineState)> {
    let mut policy = AdaptiveThb::new(spec);
    let sched = run_policy(&mut policy, trace, spec)?;
    Ok((sched, policy.state))
}

fn window_of(trace: &Trace, t: usize, w: usize) -> (Vec<SlotInput>, bool) {
    let end = (t + w).min(trace.len());
    (trace.window(t, end), end == trace.len())
}

/// One slot of the lookahead policy. `window` starts at the current slot;
/// `terminal` is the required exit level when the window reaches the end
/// of the horizon.
pub fn lka_step(
    policy: &ThresholdPolicy,
    state: &OnlineState,
    window: &[SlotInput],
    terminal: Option<f64>,
    spec: &StorageSpec,
) -> Result<(Decision, OnlineState)> {
    // renewable is stored greedily across the window first
    let mut level = state.x;
    let preload: Vec<f64> = window
        .iter()
        .map(|s| {
            let r_b = s
                .renewable
                .min((spec.capacity - level) / spec.eta_c)
                .min(spec.mu_c)
                .max(0.0);
            level += spec.eta_c * r_b;
            r_b
        })
        .collect();
    let dry: Vec<SlotInput> = window
        .iter()
        .map(|s| SlotInput::new(s.demand, s.price, 0.0))
        .collect();
    let base = WindowProblem::new(state.x, dry).with_preload(preload);
    let frag = match terminal {
        Some(level) => solve_window(&base.clone().with_final(level), spec)
            .or_else(|_| solve_window(&base, spec))?,
        None => solve_window(&base, spec)?,
    };

    let mut dec = frag.decisions[0];
    let p_now = window[0].price;
    let is_min = window.iter().all(|s| p_now <= s.price);
    if terminal.is_none() && is_min && p_now <= policy.theta {
        let x_peak = frag.levels[1..].iter().cloned().fold(f64::MIN, f64::max);
        let x_end = *frag.levels.last().expect("window is non-empty");
        let y = (spec.capacity - x_peak).min((policy.b_hat - x_end).max(0.0));
        let r_b = dec.renewable_charge;
        let topped = (y / spec.eta_c - r_b + dec.discharge)
            .max(0.0)
            .min((spec.mu_c - r_b).max(0.0));
        let room = (spec.capacity - state.x + spec.eta_d * dec.discharge) / spec.eta_c - r_b;
        dec.grid_charge = topped.max(dec.grid_charge).min(room.max(dec.grid_charge));
    }
    let mut next = *state;
    next.advance(&dec, spec);
    Ok((dec, next))
}

/// Lookahead threshold policy over sliding windows of `w + 1` slots.
pub fn run_lka(trace: &Trace, spec: &StorageSpec, stats: &MarketStats, w: usize) -> Result<Schedule> {
    spec.validate()?;
    let policy = make_policy(stats, spec);
    let mut state = OnlineState::new(spec.initial);
    let mut decisions = Vec::with_capacity(trace.len());
    for t in 1..=trace.len() {
        let (window, at_end) = window_of(trace, t, w);
        let terminal = at_end.then_some(spec.terminal);
        let (dec, next) = lka_step(&policy, &state, &window, terminal, spec).map_err(|e| at_slot(e, t))?;
        decisions.push(dec);
        state = next;
    }
    close_terminal(trace, spec, decisions)
}

/// Receding-horizon control: re-solve the window at every slot and apply
/// its first decision.
pub fn run_rhc(trace: &Trace, spec: &StorageSpec, w: usize) -> Result<Schedule> {
    spec.validate()?;
    let mut x = spec.initial;
    let mut decisions = Vec::with_capacity(trace.len());
    for t in 1..=trace.len() {
        let (window, at_end) = window_of(trace, t, w);
        let mut prob = WindowProblem::new(x, window);
        if at_end {
            prob = prob.with_final(spec.terminal);
        }
        let frag = solve_window(&prob, spec).map_err(|e| at_slot(e, t))?;
        let dec = frag.decisions[0];
        x = step_state(x, &dec, spec).clamp(0.0, spec.capacity);
        decisions.push(dec);
    }
    close_terminal(trace, spec, decisions)
}

fn at_slot(err: EspError, t: usize) -> EspError {
    match err {
        EspError::Infeasible { reason, .. } => EspError::Infeasible { slot: t, reason },
        other => other,
    }
}
