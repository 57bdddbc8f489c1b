//! Min-cost flow on real-valued capacities by successive shortest paths.
//!
//! Augments only along negative-cost paths, so the result is a min-cost flow
//! of free value. Mandatory arcs are expressed by the caller with a large
//! negative cost. The initial graph must be free of negative cycles.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: f64,
    cost: f64,
    flow: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct FlowGraph {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then lower node index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Adds arc `from -> to`; returns its id for reading the flow back.
    pub fn add_arc(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc {
            to,
            cap,
            cost,
            flow: 0.0,
        });
        self.adj[from].push(id);
        self.arcs.push(Arc {
            to: from,
            cap: 0.0,
            cost: -cost,
            flow: 0.0,
        });
        self.adj[to].push(id + 1);
        id
    }

    pub fn flow(&self, arc: usize) -> f64 {
        self.arcs[arc].flow
    }

    fn residual(&self, arc: usize) -> f64 {
        let a = &self.arcs[arc];
        if arc % 2 == 0 {
            a.cap - a.flow
        } else {
            // reverse arc: can undo the forward flow
            self.arcs[arc - 1].flow
        }
    }

    fn push(&mut self, arc: usize, amount: f64) {
        if arc % 2 == 0 {
            self.arcs[arc].flow += amount;
        } else {
            self.arcs[arc - 1].flow -= amount;
        }
    }

    /// Bellman-Ford distances from `source` over arcs with residual capacity.
    fn initial_potentials(&self, source: usize, eps: f64) -> Vec<f64> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        dist[source] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u].is_infinite() {
                    continue;
                }
                for &id in &self.adj[u] {
                    if self.residual(id) <= eps {
                        continue;
                    }
                    let a = &self.arcs[id];
                    let nd = dist[u] + a.cost;
                    if nd < dist[a.to] {
                        dist[a.to] = nd;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        dist
    }

    /// Runs successive shortest paths from `source` to `sink` while the
    /// cheapest augmenting path has negative cost. `eps` is the residual
    /// capacity below which an arc counts as saturated.
    pub fn min_cost_flow(&mut self, source: usize, sink: usize, eps: f64) {
        let n = self.adj.len();
        let mut potential = self.initial_potentials(source, eps);
        for p in potential.iter_mut() {
            if p.is_infinite() {
                *p = 0.0;
            }
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut prev_arc = vec![usize::MAX; n];
        let mut done = vec![false; n];
        loop {
            dist.fill(f64::INFINITY);
            prev_arc.fill(usize::MAX);
            done.fill(false);
            dist[source] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(Entry {
                dist: 0.0,
                node: source,
            });
            while let Some(Entry { dist: d, node: u }) = heap.pop() {
                if done[u] {
                    continue;
                }
                done[u] = true;
                if u == sink {
                    break;
                }
                for &id in &self.adj[u] {
                    if self.residual(id) <= eps {
                        continue;
                    }
                    let a = &self.arcs[id];
                    let v = a.to;
                    if done[v] {
                        continue;
                    }
                    // reduced costs are nonnegative up to rounding
                    let rc = (a.cost + potential[u] - potential[v]).max(0.0);
                    let nd = d + rc;
                    if nd < dist[v] {
                        dist[v] = nd;
                        prev_arc[v] = id;
                        heap.push(Entry { dist: nd, node: v });
                    }
                }
            }
            if !done[sink] {
                return;
            }
            let path_cost = dist[sink] + potential[sink] - potential[source];
            let bound = dist[sink];
            for v in 0..n {
                potential[v] += dist[v].min(bound);
            }
            if path_cost >= 0.0 {
                return;
            }
            let mut amount = f64::INFINITY;
            let mut v = sink;
            while v != source {
                let id = prev_arc[v];
                amount = amount.min(self.residual(id));
                v = self.arcs[id ^ 1].to;
            }
            if !amount.is_finite() || amount <= eps {
                return;
            }
            let mut v = sink;
            while v != source {
                let id = prev_arc[v];
                self.push(id, amount);
                v = self.arcs[id ^ 1].to;
            }
        }
    }
}
