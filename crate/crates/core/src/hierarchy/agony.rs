//! Minimum-agony integer rankings.
//!
//! Agony of a ranking `r` is `sum over edges (u, v) of max(r(u) - r(v) + 1, 0)`.
//! Its LP dual is a maximum circulation with unit edge capacities, so the
//! exact solver computes a maximum Eulerian subgraph with min-cost flow and
//! reads the ranking off the optimal node potentials. Above the edge cap a
//! local descent started from the condensation levels is used instead; it
//! never does worse than that starting point.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::graph::{strongly_connected_components, DirectedGraph};

use super::{assign_levels, HierarchyRanking, RankingKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AgonyMode {
    /// Exact up to `exact_edge_cap` edges, heuristic above.
    #[default]
    Auto,
    Exact,
    Heuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgonyConfig {
    pub mode: AgonyMode,
    pub exact_edge_cap: usize,
    pub max_descent_passes: usize,
}

impl Default for AgonyConfig {
    fn default() -> Self {
        AgonyConfig {
            mode: AgonyMode::Auto,
            exact_edge_cap: 50_000,
            max_descent_passes: 50,
        }
    }
}

pub fn total_agony(g: &DirectedGraph, ranks: &[i64]) -> i64 {
    g.edges()
        .iter()
        .map(|&(u, v)| (ranks[u.index()] - ranks[v.index()] + 1).max(0))
        .sum()
}

/// Peeling levels of the condensation, shared by every node of an SCC.
pub fn agony_baseline(g: &DirectedGraph) -> Vec<i64> {
    let scc = strongly_connected_components(g);
    let cond = scc.condensation(g);
    let levels = assign_levels(&cond).expect("condensation is acyclic");
    g.nodes()
        .map(|v| levels.score(crate::graph::NodeId(scc.component_id[v.index()])) as i64)
        .collect()
}

pub fn rank_agony(g: &DirectedGraph, cfg: &AgonyConfig) -> HierarchyRanking {
    let exact = match cfg.mode {
        AgonyMode::Exact => true,
        AgonyMode::Heuristic => false,
        AgonyMode::Auto => g.edge_count() <= cfg.exact_edge_cap,
    };
    let baseline = agony_baseline(g);
    let mut ranks = if exact {
        exact_ranking(g)
    } else {
        descend(g, baseline.clone(), cfg.max_descent_passes)
    };
    if total_agony(g, &ranks) > total_agony(g, &baseline) {
        ranks = baseline;
    }
    normalize(&mut ranks);
    HierarchyRanking::from_integers(RankingKind::Agony, &ranks)
}

fn normalize(ranks: &mut [i64]) {
    if let Some(&min) = ranks.iter().min() {
        for r in ranks.iter_mut() {
            *r = *r - min + 1;
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Arc {
    to: usize,
    cap: i64,
    cost: i64,
    rev: usize,
}

struct FlowNet {
    adj: Vec<Vec<Arc>>,
}

impl FlowNet {
    fn new(n: usize) -> Self {
        FlowNet {
            adj: vec![Vec::new(); n],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64, cost: i64) -> (usize, usize) {
        let fwd = self.adj[from].len();
        let bwd = self.adj[to].len() + usize::from(from == to);
        self.adj[from].push(Arc {
            to,
            cap,
            cost,
            rev: bwd,
        });
        self.adj[to].push(Arc {
            to: from,
            cap: 0,
            cost: -cost,
            rev: fwd,
        });
        (from, fwd)
    }

    /// Successive shortest paths with Dijkstra on reduced costs. All initial
    /// arc costs with positive capacity must be non-negative.
    fn min_cost_flow(&mut self, s: usize, t: usize) {
        let n = self.adj.len();
        let mut potential = vec![0i64; n];
        let mut dist = vec![i64::MAX; n];
        let mut prev: Vec<(usize, usize)> = vec![(usize::MAX, 0); n];
        loop {
            dist.fill(i64::MAX);
            dist[s] = 0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0i64, s)));
            while let Some(Reverse((d, v))) = heap.pop() {
                if d > dist[v] {
                    continue;
                }
                for (i, a) in self.adj[v].iter().enumerate() {
                    if a.cap <= 0 {
                        continue;
                    }
                    let nd = d + a.cost + potential[v] - potential[a.to];
                    if nd < dist[a.to] {
                        dist[a.to] = nd;
                        prev[a.to] = (v, i);
                        heap.push(Reverse((nd, a.to)));
                    }
                }
            }
            if dist[t] == i64::MAX {
                break;
            }
            for v in 0..n {
                if dist[v] != i64::MAX {
                    potential[v] += dist[v];
                }
            }
            let mut push = i64::MAX;
            let mut v = t;
            while v != s {
                let (u, i) = prev[v];
                push = push.min(self.adj[u][i].cap);
                v = u;
            }
            let mut v = t;
            while v != s {
                let (u, i) = prev[v];
                self.adj[u][i].cap -= push;
                let rev = self.adj[u][i].rev;
                self.adj[v][rev].cap += push;
                v = u;
            }
        }
    }
}

/// Exact minimum-agony ranking.
fn exact_ranking(g: &DirectedGraph) -> Vec<i64> {
    let n = g.node_count();
    if g.edge_count() == 0 {
        return vec![1; n];
    }
    let (s, t) = (n, n + 1);
    let mut net = FlowNet::new(n + 2);
    // Start from the circulation that uses every edge. Sending one unit along
    // the "cancel" arc v -> u drops edge (u, v) from it at cost 1.
    let mut cancel = Vec::with_capacity(g.edge_count());
    for &(u, v) in g.edges() {
        cancel.push(net.add(v.index(), u.index(), 1, 1));
    }
    for w in g.nodes() {
        let excess = g.in_neighbors(w).len() as i64 - g.out_neighbors(w).len() as i64;
        if excess > 0 {
            net.add(s, w.index(), excess, 0);
        } else if excess < 0 {
            net.add(w.index(), t, -excess, 0);
        }
    }
    net.min_cost_flow(s, t);

    // Residual arcs between graph nodes: unused cancel arcs (v -> u, +1) and
    // restore arcs of cancelled edges (u -> v, -1). Shortest distances from a
    // virtual root are feasible potentials; ranks are their negation.
    let mut kept = 0i64;
    let mut arcs = Vec::with_capacity(g.edge_count());
    for (&(u, v), &(from, idx)) in g.edges().iter().zip(&cancel) {
        if net.adj[from][idx].cap > 0 {
            kept += 1;
            arcs.push((v.index(), u.index(), 1i64));
        } else {
            arcs.push((u.index(), v.index(), -1i64));
        }
    }
    let mut dist = vec![0i64; n];
    for _ in 0..=n {
        let mut changed = false;
        for &(a, b, c) in &arcs {
            if dist[a] + c < dist[b] {
                dist[b] = dist[a] + c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let ranks: Vec<i64> = dist.iter().map(|d| -d).collect();
    debug_assert_eq!(total_agony(g, &ranks), kept);
    ranks
}

/// Moves one node at a time to the rank minimising its own agony until no
/// move strictly improves the total.
fn descend(g: &DirectedGraph, mut ranks: Vec<i64>, max_passes: usize) -> Vec<i64> {
    let mut outs: Vec<i64> = Vec::new();
    let mut ins: Vec<i64> = Vec::new();
    for _ in 0..max_passes {
        let mut improved = false;
        for v in g.nodes() {
            // out-edge (v, w) costs max(r - (r_w - 1), 0); in-edge (u, v)
            // costs max((r_u + 1) - r, 0)
            outs.clear();
            outs.extend(g.out_neighbors(v).iter().map(|w| ranks[w.index()] - 1));
            ins.clear();
            ins.extend(g.in_neighbors(v).iter().map(|u| ranks[u.index()] + 1));
            if outs.is_empty() && ins.is_empty() {
                continue;
            }
            outs.sort_unstable();
            ins.sort_unstable();
            let cost = LocalCost::new(&outs, &ins);
            let current = ranks[v.index()];
            let current_cost = cost.at(current);
            let mut best = (current_cost, current);
            for &c in outs.iter().chain(ins.iter()) {
                let val = cost.at(c);
                if val < best.0 || (val == best.0 && val < current_cost && c < best.1) {
                    best = (val, c);
                }
            }
            if best.0 < current_cost {
                ranks[v.index()] = best.1;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    ranks
}

struct LocalCost<'a> {
    outs: &'a [i64],
    ins: &'a [i64],
    out_prefix: Vec<i64>,
    in_prefix: Vec<i64>,
}

impl<'a> LocalCost<'a> {
    fn new(outs: &'a [i64], ins: &'a [i64]) -> Self {
        let prefix = |xs: &[i64]| {
            let mut p = Vec::with_capacity(xs.len() + 1);
            p.push(0);
            for &x in xs {
                p.push(p.last().unwrap() + x);
            }
            p
        };
        LocalCost {
            outs,
            ins,
            out_prefix: prefix(outs),
            in_prefix: prefix(ins),
        }
    }

    fn at(&self, r: i64) -> i64 {
        // sum over a in outs with a < r of (r - a)
        let k = self.outs.partition_point(|&a| a < r);
        let below = k as i64 * r - self.out_prefix[k];
        // sum over b in ins with b > r of (b - r)
        let j = self.ins.partition_point(|&b| b <= r);
        let m = self.ins.len() - j;
        let above = (self.in_prefix[self.ins.len()] - self.in_prefix[j]) - m as i64 * r;
        below + above
    }
}
