//! Cycle breaking by hierarchy-violation voting.
//!
//! Every nontrivial SCC is ranked by each configured ranker. An edge's vote is
//! the sum over rankers of its violation score divided by that ranker's
//! largest violation inside the SCC. Edges are then visited in vote order and
//! removed whenever they still lie on a cycle of what remains, until the SCC
//! is acyclic. Optionally the pieces left after a split are re-ranked and
//! voted on afresh.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::graph::{strongly_connected_components, DirectedGraph, Edge, NodeId};
use crate::hierarchy::{
    rank_agony, rank_trueskill, AgonyConfig, HierarchyRanking, RankingKind, TrueSkillParams,
};

#[derive(Clone, Debug)]
pub struct CycleBreakConfig {
    pub rankers: Vec<RankingKind>,
    pub trueskill: TrueSkillParams,
    pub agony: AgonyConfig,
    /// Re-rank the strongly connected pieces left after a split instead of
    /// keeping the votes of the original component.
    pub rerank_on_split: bool,
}

impl Default for CycleBreakConfig {
    fn default() -> Self {
        CycleBreakConfig {
            rankers: vec![RankingKind::TrueSkill, RankingKind::Agony],
            trueskill: TrueSkillParams::default(),
            agony: AgonyConfig::default(),
            rerank_on_split: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CycleBreakReport {
    /// Removed edges, sorted by `(src, dst)`.
    pub removed_edges: Vec<Edge>,
    pub kept_graph: DirectedGraph,
    pub per_edge_votes: BTreeMap<Edge, f64>,
    pub ranker_set: Vec<RankingKind>,
    /// SCC statistics of the input graph.
    pub scc_count: usize,
    pub max_scc_size: usize,
}

/// JSON summary emitted next to the removed-edge list.
#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct CycleBreakSummary {
    pub removed_count: usize,
    pub scc_count: usize,
    pub max_scc_size: usize,
}

impl CycleBreakReport {
    pub fn summary(&self) -> CycleBreakSummary {
        CycleBreakSummary {
            removed_count: self.removed_edges.len(),
            scc_count: self.scc_count,
            max_scc_size: self.max_scc_size,
        }
    }
}

/// How strongly `edge` contradicts `ranking`: zero when the source ranks
/// strictly below the target, growing linearly with the inversion. For
/// integer agony rankings an intra-SCC edge between equal ranks still scores
/// one, matching its agony.
pub fn violation_score(ranking: &HierarchyRanking, edge: Edge, same_scc: bool) -> f64 {
    let (u, v) = edge;
    let diff = ranking.score(u) - ranking.score(v);
    if ranking.kind == RankingKind::Agony && same_scc {
        (diff + 1.0).max(0.0)
    } else {
        diff.max(0.0)
    }
}

pub fn rank_with(kind: RankingKind, g: &DirectedGraph, cfg: &CycleBreakConfig) -> HierarchyRanking {
    match kind {
        RankingKind::TrueSkill => rank_trueskill(g, &cfg.trueskill),
        RankingKind::Agony => rank_agony(g, &cfg.agony),
        RankingKind::Level => {
            panic!("level ranking needs a DAG and cannot vote on cycle edges")
        }
    }
}

/// Normalised vote per edge of a strongly connected graph.
fn votes(rankings: &[HierarchyRanking], sub: &DirectedGraph) -> Vec<f64> {
    let mut total = vec![0.0; sub.edge_count()];
    for ranking in rankings {
        let scores: Vec<f64> = sub
            .edges()
            .iter()
            .map(|&e| violation_score(ranking, e, true))
            .collect();
        let max = scores.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            for (t, s) in total.iter_mut().zip(&scores) {
                *t += s / max;
            }
        }
    }
    total
}

/// Breaks all cycles of one strongly connected piece. `sub` uses local ids;
/// `map` translates them back to the caller's ids.
fn break_component<R>(sub: DirectedGraph, map: Vec<NodeId>, rank: &R, rerank_on_split: bool) -> Vec<(Edge, f64)>
where
    R: Fn(&DirectedGraph, &[NodeId]) -> Vec<HierarchyRanking>,
{
    let mut removed = Vec::new();
    let mut work = vec![(sub, map)];
    while let Some((sub, map)) = work.pop() {
        let vote = votes(&rank(&sub, &map), &sub);
        let mut order: Vec<usize> = (0..sub.edge_count()).collect();
        let global = |e: Edge| (map[e.0.index()], map[e.1.index()]);
        order.sort_by(|&a, &b| {
            vote[b]
                .total_cmp(&vote[a])
                .then_with(|| global(sub.edges()[a]).cmp(&global(sub.edges()[b])))
        });

        let mut gone: HashSet<Edge> = HashSet::new();
        for &e in &order {
            let (u, v) = sub.edges()[e];
            // no longer on a cycle: it stays, now and later
            if !reaches_without(&sub, &gone, v, u) {
                continue;
            }
            gone.insert((u, v));
            removed.push((global((u, v)), vote[e]));
            if rerank_on_split && !reaches_without(&sub, &gone, u, v) {
                let rest = sub.without_edges(&gone);
                let scc = strongly_connected_components(&rest);
                for comp in scc.nontrivial() {
                    let piece = rest.induced(comp);
                    let piece_map = comp.iter().map(|n| map[n.index()]).collect();
                    work.push((piece, piece_map));
                }
                break;
            }
        }
    }
    removed
}

/// Whether `to` is reachable from `from` once the `gone` edges are deleted.
fn reaches_without(g: &DirectedGraph, gone: &HashSet<Edge>, from: NodeId, to: NodeId) -> bool {
    let mut seen = vec![false; g.node_count()];
    let mut stack = vec![from];
    seen[from.index()] = true;
    while let Some(v) = stack.pop() {
        for &w in g.out_neighbors(v) {
            if seen[w.index()] || gone.contains(&(v, w)) {
                continue;
            }
            if w == to {
                return true;
            }
            seen[w.index()] = true;
            stack.push(w);
        }
    }
    false
}

pub fn break_cycles(g: &DirectedGraph, cfg: &CycleBreakConfig) -> CycleBreakReport {
    let rank = |sub: &DirectedGraph, _: &[NodeId]| {
        cfg.rankers
            .iter()
            .map(|&kind| rank_with(kind, sub, cfg))
            .collect::<Vec<_>>()
    };
    break_cycles_with(g, cfg.rankers.clone(), cfg.rerank_on_split, rank)
}

/// Same procedure with caller-supplied rankers. `rank` receives each strongly
/// connected piece (local ids) plus the map from local to input node ids.
pub fn break_cycles_with<R>(
    g: &DirectedGraph,
    ranker_set: Vec<RankingKind>,
    rerank_on_split: bool,
    rank: R,
) -> CycleBreakReport
where
    R: Fn(&DirectedGraph, &[NodeId]) -> Vec<HierarchyRanking> + Sync,
{
    let scc = strongly_connected_components(g);
    let max_scc_size = scc.components.iter().map(Vec::len).max().unwrap_or(0);
    let comps: Vec<&Vec<NodeId>> = scc.nontrivial().collect();

    let pieces: Vec<Vec<(Edge, f64)>> = comps
        .par_iter()
        .map(|comp| break_component(g.induced(comp), comp.to_vec(), &rank, rerank_on_split))
        .collect();

    let per_edge_votes: BTreeMap<Edge, f64> = pieces.into_iter().flatten().collect();
    let removed_edges: Vec<Edge> = per_edge_votes.keys().copied().collect();
    let gone: HashSet<Edge> = removed_edges.iter().copied().collect();
    let kept_graph = g.without_edges(&gone);
    debug_assert!(crate::graph::is_acyclic(&kept_graph));

    CycleBreakReport {
        removed_edges,
        kept_graph,
        per_edge_votes,
        ranker_set,
        scc_count: scc.len(),
        max_scc_size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::is_acyclic;

    #[test]
    fn violation_examples() {
        let r = HierarchyRanking::new(RankingKind::Level, vec![1.0, 3.0]);
        assert_eq!(violation_score(&r, (NodeId(0), NodeId(1)), false), 0.0);

        let r = HierarchyRanking::new(RankingKind::TrueSkill, vec![5.0, 2.0]);
        assert_eq!(violation_score(&r, (NodeId(0), NodeId(1)), true), 3.0);

        let r = HierarchyRanking::new(RankingKind::Agony, vec![2.0, 2.0]);
        assert_eq!(violation_score(&r, (NodeId(0), NodeId(1)), true), 1.0);
        assert_eq!(violation_score(&r, (NodeId(0), NodeId(1)), false), 0.0);
    }

    #[test]
    fn acyclic_input_untouched() {
        let g = DirectedGraph::from_labeled_edges(&[("A", "B"), ("B", "C"), ("A", "C")]);
        let rep = break_cycles(&g, &CycleBreakConfig::default());
        assert!(rep.removed_edges.is_empty());
        assert_eq!(rep.kept_graph.edge_count(), 3);
    }

    #[test]
    fn two_cycle_with_planted_order() {
        // A sits below B: Z -> A -> B -> Y anchors the order, B -> A is the
        // violator
        let g = DirectedGraph::from_labeled_edges(&[
            ("Z", "A"),
            ("A", "B"),
            ("B", "A"),
            ("B", "Y"),
        ]);
        let rep = break_cycles(&g, &CycleBreakConfig::default());
        let a = g.node("A").unwrap();
        let b = g.node("B").unwrap();
        assert!(is_acyclic(&rep.kept_graph));
        assert_eq!(rep.removed_edges.len(), 1);
        assert!(rep.removed_edges[0] == (b, a) || rep.removed_edges[0] == (a, b));

        // planted ranking with A below B for both rankers
        let planted = |sub: &DirectedGraph, map: &[NodeId]| {
            let scores: Vec<f64> = sub
                .nodes()
                .map(|v| if map[v.index()] == a { 1.0 } else { 2.0 })
                .collect();
            vec![
                HierarchyRanking::new(RankingKind::TrueSkill, scores.clone()),
                HierarchyRanking::new(RankingKind::Agony, scores),
            ]
        };
        let rep = break_cycles_with(&g, vec![RankingKind::TrueSkill, RankingKind::Agony], false, planted);
        assert_eq!(rep.removed_edges, vec![(b, a)]);
        assert_eq!(rep.per_edge_votes[&(b, a)], 2.0);
    }

    #[test]
    fn kept_and_removed_partition_input() {
        let g = DirectedGraph::from_index_edges(
            6,
            [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2), (4, 5), (5, 3)],
        );
        for rerank_on_split in [false, true] {
            let cfg = CycleBreakConfig {
                rerank_on_split,
                ..Default::default()
            };
            let rep = break_cycles(&g, &cfg);
            assert!(is_acyclic(&rep.kept_graph));
            assert_eq!(
                rep.removed_edges.len() + rep.kept_graph.edge_count(),
                g.edge_count()
            );
            for e in &rep.removed_edges {
                assert!(!rep.kept_graph.has_edge(e.0, e.1));
            }
        }
    }
}
