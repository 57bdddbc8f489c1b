//! Domain types of the storage cost-minimization problem.
//!
//! Units are MWh for energy and $/MWh for prices; a slot is one hour.
//! Storage levels are indexed so that `levels[t]` is the level at the end of
//! slot `t` and `levels[0]` is the initial level.

use crate::error::{EspError, Result};

/// Default relative tolerance for feasibility checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Inputs revealed at one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotInput {
    /// Excess demand a(t).
    pub demand: f64,
    /// Grid price p(t).
    pub price: f64,
    /// Excess renewable energy r(t).
    pub renewable: f64,
}

impl SlotInput {
    pub fn new(demand: f64, price: f64, renewable: f64) -> Self {
        Self {
            demand,
            price,
            renewable,
        }
    }

    fn check(&self, slot: usize) -> Result<()> {
        if !(self.demand.is_finite() && self.demand >= 0.0) {
            return Err(EspError::InvalidTrace(format!(
                "slot {slot}: demand must be finite and >= 0, got {}",
                self.demand
            )));
        }
        if !(self.price.is_finite() && self.price > 0.0) {
            return Err(EspError::InvalidTrace(format!(
                "slot {slot}: price must be finite and > 0, got {}",
                self.price
            )));
        }
        if !(self.renewable.is_finite() && self.renewable >= 0.0) {
            return Err(EspError::InvalidTrace(format!(
                "slot {slot}: renewable must be finite and >= 0, got {}",
                self.renewable
            )));
        }
        Ok(())
    }
}

/// A finite input sequence of demand, price and renewable supply.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    slots: Vec<SlotInput>,
}

impl Trace {
    pub fn new(slots: Vec<SlotInput>) -> Result<Self> {
        if slots.is_empty() {
            return Err(EspError::InvalidTrace("horizon must be >= 1".into()));
        }
        for (i, s) in slots.iter().enumerate() {
            s.check(i + 1)?;
        }
        Ok(Self { slots })
    }

    /// Builds a trace from parallel columns.
    pub fn from_columns(demand: &[f64], price: &[f64], renewable: &[f64]) -> Result<Self> {
        if demand.len() != price.len() || demand.len() != renewable.len() {
            return Err(EspError::InvalidTrace(format!(
                "column lengths differ: {}/{}/{}",
                demand.len(),
                price.len(),
                renewable.len()
            )));
        }
        Self::new(
            demand
                .iter()
                .zip(price)
                .zip(renewable)
                .map(|((&a, &p), &r)| SlotInput::new(a, p, r))
                .collect(),
        )
    }

    pub fn slots(&self) -> &[SlotInput] {
        &self.slots
    }

    /// Horizon T.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Slot `t` using 1-based indexing.
    pub fn slot(&self, t: usize) -> &SlotInput {
        &self.slots[t - 1]
    }

    pub fn total_demand(&self) -> f64 {
        self.slots.iter().map(|s| s.demand).sum()
    }

    pub fn total_renewable(&self) -> f64 {
        self.slots.iter().map(|s| s.renewable).sum()
    }

    pub fn max_price(&self) -> f64 {
        self.slots.iter().map(|s| s.price).fold(f64::MIN, f64::max)
    }

    pub fn min_price(&self) -> f64 {
        self.slots.iter().map(|s| s.price).fold(f64::MAX, f64::min)
    }

    pub fn peak_demand(&self) -> f64 {
        self.slots.iter().map(|s| s.demand).fold(0.0, f64::max)
    }

    pub fn demands(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.demand).collect()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.price).collect()
    }

    /// Copy of slots `from..=to` (1-based, inclusive).
    pub fn window(&self, from: usize, to: usize) -> Vec<SlotInput> {
        self.slots[from - 1..to].to_vec()
    }
}

/// Physical storage parameters and boundary levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageSpec {
    /// Capacity B.
    pub capacity: f64,
    /// Charging efficiency, 0 < eta_c <= 1.
    pub eta_c: f64,
    /// Discharging efficiency, eta_d >= 1.
    pub eta_d: f64,
    /// Charging rate cap per slot.
    pub mu_c: f64,
    /// Discharging rate cap per slot.
    pub mu_d: f64,
    /// Initial level B_s.
    pub initial: f64,
    /// Required terminal level B_e.
    pub terminal: f64,
}

impl StorageSpec {
    pub fn new(
        capacity: f64,
        eta_c: f64,
        eta_d: f64,
        mu_c: f64,
        mu_d: f64,
        initial: f64,
        terminal: f64,
    ) -> Result<Self> {
        let spec = Self {
            capacity,
            eta_c,
            eta_d,
            mu_c,
            mu_d,
            initial,
            terminal,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Ideal storage (unit efficiencies) with rate caps equal to `capacity`.
    pub fn ideal(capacity: f64, initial: f64, terminal: f64) -> Result<Self> {
        Self::new(capacity, 1.0, 1.0, capacity, capacity, initial, terminal)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EspError::InvalidSpec(m));
        if !(self.capacity.is_finite() && self.capacity >= 0.0) {
            return bad(format!("capacity must be >= 0, got {}", self.capacity));
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0) {
            return bad(format!("eta_c must lie in (0, 1], got {}", self.eta_c));
        }
        if !(self.eta_d.is_finite() && self.eta_d >= 1.0) {
            return bad(format!("eta_d must be >= 1, got {}", self.eta_d));
        }
        if !(self.mu_c >= 0.0 && self.mu_d >= 0.0) {
            return bad(format!(
                "rate caps must be >= 0, got mu_c={} mu_d={}",
                self.mu_c, self.mu_d
            ));
        }
        for (name, v) in [("initial", self.initial), ("terminal", self.terminal)] {
            if !(v >= 0.0 && v <= self.capacity) {
                return bad(format!(
                    "{name} level must lie in [0, {}], got {v}",
                    self.capacity
                ));
            }
        }
        Ok(())
    }

    /// eta_c / eta_d.
    pub fn efficiency_ratio(&self) -> f64 {
        self.eta_c / self.eta_d
    }

    pub fn with_boundary(mut self, initial: f64, terminal: f64) -> Result<Self> {
        self.initial = initial;
        self.terminal = terminal;
        self.validate()?;
        Ok(self)
    }

    pub fn with_capacity(mut self, capacity: f64) -> Result<Self> {
        self.capacity = capacity;
        self.initial = self.initial.min(capacity);
        self.terminal = self.terminal.min(capacity);
        self.validate()?;
        Ok(self)
    }

    /// Checks that the terminal level can be reached from the initial level
    /// under the rate caps, over `slots` slots.
    pub fn check_reachable(&self, trace: &Trace) -> Result<()> {
        let t = trace.len();
        let rise = self.terminal - self.initial;
        let tol = DEFAULT_TOL * self.capacity.max(1.0);
        if rise > 0.0 {
            let per_slot = self.eta_c * self.mu_c;
            if per_slot * t as f64 + tol < rise {
                // earliest slot at which even charging at full rate from then
                // on cannot close the gap is slot 1.
                return Err(EspError::Infeasible {
                    slot: 1,
                    reason: format!(
                        "terminal level {} unreachable from {}: at most {} can be charged",
                        self.terminal,
                        self.initial,
                        per_slot * t as f64
                    ),
                });
            }
        } else if rise < 0.0 {
            // energy can only leave storage by serving demand
            let mut drain = 0.0;
            for s in trace.slots() {
                drain += self.eta_d * s.demand.min(self.mu_d);
            }
            if drain + tol < -rise {
                return Err(EspError::Infeasible {
                    slot: 1,
                    reason: format!(
                        "storage cannot drain from {} to {}: at most {} can be discharged",
                        self.initial, self.terminal, drain
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Per-slot decision.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Decision {
    /// d(t): energy discharged from storage.
    pub discharge: f64,
    /// r_b(t): renewable energy charged into storage.
    pub renewable_charge: f64,
    /// v_a(t): grid energy serving demand directly.
    pub grid_demand: f64,
    /// v_b(t): grid energy charged into storage.
    pub grid_charge: f64,
}

impl Decision {
    pub fn new(discharge: f64, renewable_charge: f64, grid_demand: f64, grid_charge: f64) -> Self {
        Self {
            discharge,
            renewable_charge,
            grid_demand,
            grid_charge,
        }
    }

    /// Energy bought from the grid in this slot.
    pub fn purchased(&self) -> f64 {
        self.grid_demand + self.grid_charge
    }

    pub fn add(&self, other: &Decision) -> Decision {
        Decision {
            discharge: self.discharge + other.discharge,
            renewable_charge: self.renewable_charge + other.renewable_charge,
            grid_demand: self.grid_demand + other.grid_demand,
            grid_charge: self.grid_charge + other.grid_charge,
        }
    }
}

/// Decisions over a horizon with the resulting storage trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub decisions: Vec<Decision>,
    /// `levels[0]` is the initial level, `levels[t]` the level after slot t.
    pub levels: Vec<f64>,
    /// Total purchase cost.
    pub cost: f64,
    /// Part of `cost` spent by a terminal correction in online runs.
    pub forced_cost: f64,
}

impl Schedule {
    /// Builds a schedule from decisions, replaying the state recurrence and
    /// pricing purchases against `trace`.
    pub fn from_decisions(trace: &Trace, spec: &StorageSpec, decisions: Vec<Decision>) -> Result<Self> {
        if decisions.len() != trace.len() {
            return Err(EspError::LengthMismatch {
                expected: trace.len(),
                got: decisions.len(),
            });
        }
        let mut levels = Vec::with_capacity(decisions.len() + 1);
        let mut x = spec.initial;
        levels.push(x);
        for dec in &decisions {
            x = step_state(x, dec, spec);
            levels.push(x);
        }
        let cost = cost_of(trace.slots(), &decisions);
        Ok(Self {
            decisions,
            levels,
            cost,
            forced_cost: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn final_level(&self) -> f64 {
        *self.levels.last().expect("levels always holds the initial level")
    }
}

/// Price extremes and renewable ratio a threshold policy is derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketStats {
    /// Maximum price M.
    pub max_price: f64,
    /// Minimum price m.
    pub min_price: f64,
    /// M / m.
    pub phi: f64,
    /// Efficiency-normalized renewable-to-demand ratio.
    pub rho: f64,
}

impl MarketStats {
    pub fn new(max_price: f64, min_price: f64, rho: f64) -> Result<Self> {
        if !(min_price > 0.0 && min_price <= max_price && max_price.is_finite()) {
            return Err(EspError::InvalidStats(format!(
                "need 0 < m <= M, got m={min_price} M={max_price}"
            )));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(EspError::InvalidStats(format!("rho must be >= 0, got {rho}")));
        }
        Ok(Self {
            max_price,
            min_price,
            phi: max_price / min_price,
            rho,
        })
    }

    /// Oracle statistics of a whole trace: realized price extremes and the
    /// terminal-adjusted renewable ratio (see [`effective_rho`]). A trace
    /// without demand gets rho 1 when free energy is available, else 0.
    pub fn for_trace(trace: &Trace, spec: &StorageSpec) -> Result<Self> {
        let rho = match effective_rho(trace, spec) {
            Ok(r) => r,
            Err(_) => {
                if spec.capacity - spec.terminal + trace.total_renewable() > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        Self::new(trace.max_price(), trace.min_price(), rho)
    }
}

/// Storage level after applying `dec` to level `x_prev`. No clamping.
pub fn step_state(x_prev: f64, dec: &Decision, spec: &StorageSpec) -> f64 {
    x_prev + spec.eta_c * (dec.renewable_charge + dec.grid_charge) - spec.eta_d * dec.discharge
}

fn cost_of(slots: &[SlotInput], decisions: &[Decision]) -> f64 {
    slots
        .iter()
        .zip(decisions)
        .map(|(s, d)| s.price * d.purchased())
        .sum()
}

/// Total purchase cost of `sched` priced against `trace`.
pub fn schedule_cost(trace: &Trace, sched: &Schedule) -> Result<f64> {
    if sched.decisions.len() != trace.len() {
        return Err(EspError::LengthMismatch {
            expected: trace.len(),
            got: sched.decisions.len(),
        });
    }
    Ok(cost_of(trace.slots(), &sched.decisions))
}

/// rho = (eta_c / eta_d) * sum(r) / sum(a).
pub fn compute_rho(trace: &Trace, spec: &StorageSpec) -> Result<f64> {
    let demand = trace.total_demand();
    if demand <= 0.0 {
        return Err(EspError::UndefinedRatio("total demand is zero".into()));
    }
    Ok(spec.efficiency_ratio() * trace.total_renewable() / demand)
}

/// Renewable ratio with the free headroom `B - B_e` counted as renewable
/// supply, used when the terminal level is below capacity.
pub fn effective_rho(trace: &Trace, spec: &StorageSpec) -> Result<f64> {
    let demand = trace.total_demand();
    if demand <= 0.0 {
        return Err(EspError::UndefinedRatio("total demand is zero".into()));
    }
    Ok(spec.efficiency_ratio() * (spec.capacity - spec.terminal + trace.total_renewable()) / demand)
}

/// Constraint families checked by [`validate_schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    DemandBalance,
    RenewableCap,
    Nonnegativity,
    CapacityLow,
    CapacityHigh,
    ChargeRate,
    DischargeRate,
    Recurrence,
    InitialLevel,
    TerminalLevel,
}

/// One violated constraint. `slot` is 1-based; boundary checks use 0 and T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub slot: usize,
    pub constraint: Constraint,
    /// Signed amount by which the constraint is violated.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, constraint: Constraint) -> bool {
        self.violations.iter().any(|v| v.constraint == constraint)
    }
}

/// Checks every constraint of the problem against `sched` with relative
/// tolerance `tol`. An empty report means the schedule is feasible.
pub fn validate_schedule(
    trace: &Trace,
    spec: &StorageSpec,
    sched: &Schedule,
    tol: f64,
) -> Result<ValidationReport> {
    let t_len = trace.len();
    if sched.decisions.len() != t_len {
        return Err(EspError::LengthMismatch {
            expected: t_len,
            got: sched.decisions.len(),
        });
    }
    if sched.levels.len() != t_len + 1 {
        return Err(EspError::LengthMismatch {
            expected: t_len + 1,
            got: sched.levels.len(),
        });
    }
    let mut out = Vec::new();
    let cap_tol = tol * spec.capacity.max(1.0);
    let mut push = |slot, constraint, slack: f64| out.push(Violation { slot, constraint, slack });

    if (sched.levels[0] - spec.initial).abs() > cap_tol {
        push(0, Constraint::InitialLevel, sched.levels[0] - spec.initial);
    }
    for (i, (s, d)) in trace.slots().iter().zip(&sched.decisions).enumerate() {
        let t = i + 1;
        for v in [d.discharge, d.renewable_charge, d.grid_demand, d.grid_charge] {
            if v < -tol {
                push(t, Constraint::Nonnegativity, v);
            }
        }
        let balance = d.discharge + d.grid_demand - s.demand;
        if balance.abs() > tol * s.demand.max(1.0) {
            push(t, Constraint::DemandBalance, balance);
        }
        if d.renewable_charge - s.renewable > tol * s.renewable.max(1.0) {
            push(t, Constraint::RenewableCap, d.renewable_charge - s.renewable);
        }
        let charge = d.renewable_charge + d.grid_charge;
        if charge - spec.mu_c > tol * spec.mu_c.max(1.0) {
            push(t, Constraint::ChargeRate, charge - spec.mu_c);
        }
        if d.discharge - spec.mu_d > tol * spec.mu_d.max(1.0) {
            push(t, Constraint::DischargeRate, d.discharge - spec.mu_d);
        }
        let x = sched.levels[t];
        if x < -cap_tol {
            push(t, Constraint::CapacityLow, x);
        }
        if x - spec.capacity > cap_tol {
            push(t, Constraint::CapacityHigh, x - spec.capacity);
        }
        let expected = step_state(sched.levels[t - 1], d, spec);
        if (x - expected).abs() > cap_tol {
            push(t, Constraint::Recurrence, x - expected);
        }
    }
    let last = sched.levels[t_len];
    if (last - spec.terminal).abs() > cap_tol {
        push(t_len, Constraint::TerminalLevel, last - spec.terminal);
    }
    Ok(ValidationReport { violations: out })
}

/// Cheapest single-slot decision changing the storage level by exactly
/// `delta`, or `None` if no decision within the slot's limits achieves it.
///
/// With c = r_b + v_b fixed by the recurrence, purchases are
/// a - d + max(0, c - r), a convex piecewise-linear function of d whose
/// kink sits where charging exactly uses the available renewable.
pub fn cheapest_transition(input: &SlotInput, delta: f64, spec: &StorageSpec) -> Option<Decision> {
    let (eta_c, eta_d) = (spec.eta_c, spec.eta_d);
    let d_lo = (-delta / eta_d).max(0.0);
    let d_hi = input
        .demand
        .min(spec.mu_d)
        .min((eta_c * spec.mu_c - delta) / eta_d);
    let slack = 1e-12 * (1.0 + delta.abs() + input.demand + spec.mu_c);
    if d_lo > d_hi + slack {
        return None;
    }
    let d_hi = d_hi.max(d_lo);
    let kink = ((eta_c * input.renewable - delta) / eta_d).clamp(d_lo, d_hi);

    let build = |d: f64| {
        let charge = ((delta + eta_d * d) / eta_c).max(0.0);
        let r_b = charge.min(input.renewable);
        Decision {
            discharge: d,
            renewable_charge: r_b,
            grid_demand: (input.demand - d).max(0.0),
            grid_charge: (charge - r_b).max(0.0),
        }
    };
    [d_lo, kink, d_hi]
        .into_iter()
        .map(build)
        .min_by(|a, b| a.purchased().total_cmp(&b.purchased()))
}
