//! One-shot demand decomposition and the decomposed offline and threshold
//! algorithms built on it.
//!
//! A one-shot demand is a block of demand `a_bar` due at slot `t_nz` whose
//! energy may be stored no earlier than slot `t_s`. Atoms are cut from the
//! demand slot by slot. An atom whose storage window has non-zero length
//! shares capacity `B / eta_d` with every other such atom due inside its
//! window, itself included.

use crate::error::Result;
use crate::model::{step_state, Decision, MarketStats, Schedule, SlotInput, StorageSpec, Trace};
use crate::offline::{solve_window, WindowProblem};
use crate::online::{make_policy, thb_decision, ThresholdPolicy};

/// Demand `a_bar` due at `t_nz`, storable from `t_s` on (slots 1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneShotDemand {
    pub t_s: usize,
    pub t_nz: usize,
    pub a_bar: f64,
}

impl OneShotDemand {
    /// True when the atom may draw on storage, i.e. its window is longer
    /// than its due slot.
    pub fn has_duration(&self) -> bool {
        self.t_s < self.t_nz
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decomposition {
    pub atoms: Vec<OneShotDemand>,
}

/// A breach of one of the decomposition properties.
#[derive(Debug, Clone, PartialEq)]
pub enum DecompositionViolation {
    /// Atoms due at `slot` do not add up to the demand there.
    Reconstruction { slot: usize, expected: f64, got: f64 },
    /// Atom `index` starts or is due before its predecessor.
    Order { index: usize },
    /// Atom `index` and the atoms sharing its window exceed the capacity.
    Capacity { index: usize, load: f64, limit: f64 },
    /// Atom `index` has an empty or out-of-range window, or no demand.
    Malformed { index: usize },
}

impl Decomposition {
    /// Per-slot demand rebuilt from the atoms.
    pub fn reconstruct(&self, t_len: usize) -> Vec<f64> {
        let mut out = vec![0.0; t_len];
        for atom in &self.atoms {
            out[atom.t_nz - 1] += atom.a_bar;
        }
        out
    }

    /// Checks reconstruction, ordering and the shared-capacity bound
    /// against demand `a`. Comparisons use `tol` relative to the capacity.
    pub fn violations(&self, a: &[f64], spec: &StorageSpec, tol: f64) -> Vec<DecompositionViolation> {
        let limit = spec.capacity / spec.eta_d;
        let slack = tol * limit.max(1.0);
        let mut out = Vec::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.t_s < 1 || atom.t_s > atom.t_nz || atom.t_nz > a.len() || atom.a_bar <= 0.0 {
                out.push(DecompositionViolation::Malformed { index: i });
            }
        }
        if !out.is_empty() {
            return out;
        }
        let rebuilt = self.reconstruct(a.len());
        for (t, (&want, &got)) in a.iter().zip(&rebuilt).enumerate() {
            if (want - got).abs() > slack {
                out.push(DecompositionViolation::Reconstruction {
                    slot: t + 1,
                    expected: want,
                    got,
                });
            }
        }
        for i in 1..self.atoms.len() {
            let (prev, cur) = (&self.atoms[i - 1], &self.atoms[i]);
            if cur.t_s < prev.t_s || cur.t_nz < prev.t_nz {
                out.push(DecompositionViolation::Order { index: i });
            }
        }
        for (i, atom) in self.atoms.iter().enumerate() {
            if !atom.has_duration() {
                continue;
            }
            let load: f64 = self
                .atoms
                .iter()
                .enumerate()
                .filter(|(j, other)| {
                    *j == i
                        || (other.has_duration() && other.t_nz >= atom.t_s && other.t_nz <= atom.t_nz)
                })
                .map(|(_, other)| other.a_bar)
                .sum();
            if load > limit + slack {
                out.push(DecompositionViolation::Capacity { index: i, load, limit });
            }
        }
        out
    }
}

/// Running demand total, `acc[0] = 0` and `acc[t] = a(1) + ... + a(t)`.
pub fn accumulate(a: &[f64]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(a.len() + 1);
    let mut sum = 0.0;
    acc.push(sum);
    for &v in a {
        sum += v;
        acc.push(sum);
    }
    acc
}

/// Cuts demand `a` into one-shot demands with the earliest start each
/// slot's demand admits.
///
/// Slot t's demand becomes one atom starting at the earliest s < t whose
/// window load (storable demand already due in [s, t-1]) leaves room for
/// all of it. If no start leaves room, the atom takes what fits after the
/// load of slot t-1 and the rest is bought at t.
pub fn one_shot_decompose(a: &[f64], spec: &StorageSpec) -> Decomposition {
    let limit = spec.capacity / spec.eta_d;
    let slack = 1e-12 * limit.max(1.0);
    let t_len = a.len();
    // stored[t] = storable demand due at slot t + 1
    let mut stored = vec![0.0; t_len];
    let mut atoms = Vec::new();
    for t in 1..=t_len {
        let demand = a[t - 1];
        if demand <= 0.0 {
            continue;
        }
        let mut load = vec![0.0; t];
        // load[s] = stored demand due in slots s..t-1, for s in 1..t
        for s in (1..t).rev() {
            load[s - 1] = stored[s - 1] + if s < t - 1 { load[s] } else { 0.0 };
        }
        let start = (1..t).find(|&s| load[s - 1] + demand <= limit + slack);
        match start {
            Some(s) => {
                atoms.push(OneShotDemand { t_s: s, t_nz: t, a_bar: demand });
                stored[t - 1] = demand;
            }
            None => {
                let room = if t > 1 { limit - load[t - 2] } else { 0.0 };
                let mut rest = demand;
                if room > slack {
                    let floor = load[t - 2];
                    let s = (1..t)
                        .find(|&s| load[s - 1] <= floor + slack)
                        .expect("slot t-1 always qualifies");
                    atoms.push(OneShotDemand { t_s: s, t_nz: t, a_bar: room });
                    stored[t - 1] = room;
                    rest -= room;
                }
                atoms.push(OneShotDemand { t_s: t, t_nz: t, a_bar: rest });
            }
        }
    }
    Decomposition { atoms }
}

/// Drops, in decomposition order, the atoms served by initial level `x0`.
/// An atom covered in part keeps its window with the uncovered remainder.
pub fn truncate(decomp: &Decomposition, x0: f64, spec: &StorageSpec) -> Decomposition {
    let mut budget = x0 / spec.eta_d;
    let mut atoms = Vec::with_capacity(decomp.atoms.len());
    for atom in &decomp.atoms {
        if budget >= atom.a_bar {
            budget -= atom.a_bar;
            continue;
        }
        let left = atom.a_bar - budget.max(0.0);
        budget = 0.0;
        atoms.push(OneShotDemand { a_bar: left, ..*atom });
    }
    Decomposition { atoms }
}

/// Demand per slot served by the initial level under truncation.
fn covered_by_initial(a: &[f64], kept: &Decomposition) -> Vec<f64> {
    let rest = kept.reconstruct(a.len());
    a.iter().zip(rest).map(|(&full, left)| (full - left).max(0.0)).collect()
}

fn initial_service(a: &[f64], kept: &Decomposition) -> Vec<Decision> {
    covered_by_initial(a, kept)
        .into_iter()
        .map(|d| Decision::new(d, 0.0, 0.0, 0.0))
        .collect()
}

/// Offline optimum assembled atom by atom: each atom is solved on its own
/// window from empty storage, and the renewable it uses is withheld from
/// later atoms.
pub fn run_decomposed_offline(trace: &Trace, spec: &StorageSpec) -> Result<Schedule> {
    spec.validate()?;
    let a = trace.demands();
    let kept = truncate(&one_shot_decompose(&a, spec), spec.initial, spec);
    let mut decisions = initial_service(&a, &kept);
    let mut renewable: Vec<f64> = trace.slots().iter().map(|s| s.renewable).collect();
    for atom in &kept.atoms {
        let slots: Vec<SlotInput> = (atom.t_s..=atom.t_nz)
            .map(|t| {
                let demand = if t == atom.t_nz { atom.a_bar } else { 0.0 };
                SlotInput::new(demand, trace.slot(t).price, renewable[t - 1])
            })
            .collect();
        let prob = WindowProblem::new(0.0, slots).with_final(0.0);
        let frag = solve_window(&prob, spec)?;
        for (k, dec) in frag.decisions.iter().enumerate() {
            let t = atom.t_s + k;
            decisions[t - 1] = decisions[t - 1].add(dec);
            renewable[t - 1] = (renewable[t - 1] - dec.renewable_charge).max(0.0);
        }
    }
    Schedule::from_decisions(trace, spec, decisions)
}

/// Threshold policy run per atom: every active atom holds its own storage
/// of size `eta_d * a_bar` with grid target `eta_d * a_bar * (1 - rho)`,
/// and the atoms' decisions are summed slot by slot. Energy an atom still
/// holds at its due slot is not passed on.
pub fn run_decomposed_thb(trace: &Trace, spec: &StorageSpec, stats: &MarketStats) -> Result<Schedule> {
    spec.validate()?;
    let base = make_policy(stats, spec);
    let rho = stats.rho.min(1.0);
    let a = trace.demands();
    let kept = truncate(&one_shot_decompose(&a, spec), spec.initial, spec);
    let mut decisions = initial_service(&a, &kept);
    let mut renewable: Vec<f64> = trace.slots().iter().map(|s| s.renewable).collect();
    let mut levels = vec![0.0; kept.atoms.len()];
    let atom_specs: Vec<(StorageSpec, ThresholdPolicy)> = kept
        .atoms
        .iter()
        .map(|atom| {
            let size = spec.eta_d * atom.a_bar;
            let atom_spec = StorageSpec {
                capacity: size,
                initial: 0.0,
                terminal: 0.0,
                ..*spec
            };
            let policy = ThresholdPolicy {
                b_hat: size * (1.0 - rho),
                ..base
            };
            (atom_spec, policy)
        })
        .collect();
    for t in 1..=trace.len() {
        let slot = trace.slot(t);
        for (i, atom) in kept.atoms.iter().enumerate() {
            if t < atom.t_s || t > atom.t_nz {
                continue;
            }
            let demand = if t == atom.t_nz { atom.a_bar } else { 0.0 };
            let input = SlotInput::new(demand, slot.price, renewable[t - 1]);
            let (atom_spec, policy) = &atom_specs[i];
            let dec = thb_decision(policy, levels[i], &input, atom_spec);
            levels[i] = step_state(levels[i], &dec, atom_spec).clamp(0.0, atom_spec.capacity);
            renewable[t - 1] = (renewable[t - 1] - dec.renewable_charge).max(0.0);
            decisions[t - 1] = decisions[t - 1].add(&dec);
        }
    }
    Schedule::from_decisions(trace, spec, decisions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offline::solve_offline;
    use crate::online::run_thb;

    fn unit(cap: f64) -> StorageSpec {
        StorageSpec::ideal(cap, 0.0, 0.0).unwrap()
    }

    fn atom(t_s: usize, t_nz: usize, a_bar: f64) -> OneShotDemand {
        OneShotDemand { t_s, t_nz, a_bar }
    }

    #[test]
    fn accumulate_examples() {
        assert_eq!(accumulate(&[0.0, 0.0]), vec![0.0; 3]);
        assert_eq!(accumulate(&[0.0, 2.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0, 2.0, 4.0]);
        assert_eq!(accumulate(&[3.0]), vec![0.0, 3.0]);
    }

    #[test]
    fn decompose_examples() {
        let single = one_shot_decompose(&[0.0, 2.0, 0.0, 0.0], &unit(2.0));
        assert_eq!(single.atoms, vec![atom(1, 2, 2.0)]);
        let a = [0.0, 2.0, 0.0, 2.0];
        let pair = one_shot_decompose(&a, &unit(2.0));
        assert_eq!(pair.atoms, vec![atom(1, 2, 2.0), atom(3, 4, 2.0)]);
        assert!(pair.violations(&a, &unit(2.0), 1e-12).is_empty());
        assert!(one_shot_decompose(&[0.0; 3], &unit(2.0)).atoms.is_empty());
    }

    #[test]
    fn oversized_demand_splits_off_a_grid_atom() {
        let a = [0.0, 5.0];
        let d = one_shot_decompose(&a, &unit(2.0));
        assert_eq!(d.atoms, vec![atom(1, 2, 2.0), atom(2, 2, 3.0)]);
        assert!(d.violations(&a, &unit(2.0), 1e-12).is_empty());
        let first = one_shot_decompose(&[1.0], &unit(2.0));
        assert_eq!(first.atoms, vec![atom(1, 1, 1.0)]);
    }

    #[test]
    fn discharge_efficiency_shrinks_the_capacity() {
        let spec = StorageSpec::new(2.0, 1.0, 2.0, 2.0, 2.0, 0.0, 0.0).unwrap();
        let d = one_shot_decompose(&[0.0, 1.0, 1.0], &spec);
        assert_eq!(d.atoms, vec![atom(1, 2, 1.0), atom(3, 3, 1.0)]);
    }

    #[test]
    fn checker_flags_each_property() {
        let a = [0.0, 2.0, 0.0, 2.0];
        let spec = unit(2.0);
        let bad_sum = Decomposition { atoms: vec![atom(1, 2, 2.0), atom(3, 4, 1.0)] };
        assert!(matches!(
            bad_sum.violations(&a, &spec, 1e-12)[..],
            [DecompositionViolation::Reconstruction { slot: 4, .. }]
        ));
        let bad_order = Decomposition { atoms: vec![atom(3, 4, 2.0), atom(1, 2, 2.0)] };
        assert!(bad_order
            .violations(&a, &spec, 1e-12)
            .iter()
            .any(|v| matches!(v, DecompositionViolation::Order { index: 1 })));
        let crowded = Decomposition { atoms: vec![atom(1, 2, 2.0), atom(2, 4, 2.0)] };
        assert!(crowded
            .violations(&a, &spec, 1e-12)
            .iter()
            .any(|v| matches!(v, DecompositionViolation::Capacity { index: 1, .. })));
    }

    #[test]
    fn truncate_examples() {
        let spec = unit(2.0);
        let pair = Decomposition { atoms: vec![atom(1, 2, 2.0), atom(3, 4, 2.0)] };
        assert_eq!(truncate(&pair, 0.0, &spec), pair);
        assert_eq!(truncate(&pair, 2.0, &spec).atoms, vec![atom(3, 4, 2.0)]);
        let one = Decomposition { atoms: vec![atom(1, 2, 2.0)] };
        assert_eq!(truncate(&one, 1.0, &spec).atoms, vec![atom(1, 2, 1.0)]);
    }

    #[test]
    fn decomposed_offline_examples() {
        let spec = unit(2.0);
        let zero = Trace::from_columns(&[0.0; 3], &[1.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(run_decomposed_offline(&zero, &spec).unwrap().cost, 0.0);
        let spike = Trace::from_columns(&[0.0, 2.0, 0.0], &[1.0, 4.0, 4.0], &[0.0; 3]).unwrap();
        let s = run_decomposed_offline(&spike, &spec).unwrap();
        assert!((s.cost - 2.0).abs() < 1e-12);
        assert!((s.cost - solve_offline(&spike, &spec).unwrap().cost).abs() < 1e-12);
        let two = Trace::from_columns(&[0.0, 2.0, 0.0, 2.0], &[1.0, 4.0, 1.0, 4.0], &[0.0; 4]).unwrap();
        assert!((run_decomposed_offline(&two, &spec).unwrap().cost - 4.0).abs() < 1e-12);
    }

    #[test]
    fn initial_level_serves_the_first_atoms() {
        let spec = StorageSpec::ideal(2.0, 2.0, 0.0).unwrap();
        let two = Trace::from_columns(&[0.0, 2.0, 0.0, 2.0], &[1.0, 4.0, 1.0, 4.0], &[0.0; 4]).unwrap();
        let s = run_decomposed_offline(&two, &spec).unwrap();
        assert_eq!(s.decisions[1].discharge, 2.0);
        assert!((s.cost - 2.0).abs() < 1e-12);
    }

    #[test]
    fn decomposed_thb_examples() {
        let spec = unit(2.0);
        let stats = MarketStats::new(4.0, 1.0, 0.0).unwrap();
        let zero = Trace::from_columns(&[0.0; 3], &[1.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(run_decomposed_thb(&zero, &spec, &stats).unwrap().cost, 0.0);
        let spike = Trace::from_columns(&[0.0, 2.0, 0.0], &[1.0, 4.0, 4.0], &[0.0; 3]).unwrap();
        let whole = run_thb(&spike, &spec, &stats).unwrap();
        let split = run_decomposed_thb(&spike, &spec, &stats).unwrap();
        assert_eq!(whole.decisions, split.decisions);
        let two = Trace::from_columns(&[0.0, 2.0, 0.0, 2.0], &[1.0, 4.0, 1.0, 4.0], &[0.0; 4]).unwrap();
        let whole = run_thb(&two, &spec, &stats).unwrap().cost;
        let split = run_decomposed_thb(&two, &spec, &stats).unwrap().cost;
        assert!((whole - split).abs() < 1e-9);
    }
}
