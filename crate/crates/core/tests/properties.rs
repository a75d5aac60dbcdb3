use std::collections::HashSet;

use atp_core::cqa::{pairwise_accuracy_from, routing_metrics, routing_metrics_from_ranks};
use atp_core::cycles::{break_cycles, CycleBreakConfig};
use atp_core::factorization::{factorize, parse_model, write_model, FactorizationConfig};
use atp_core::graph::{is_acyclic, strongly_connected_components, DirectedGraph, NodeId};
use atp_core::hierarchy::{agony_baseline, assign_levels, rank_agony, total_agony, AgonyConfig, AgonyMode};
use atp_core::linkpred::{auc_from_scores, make_split, verify_split};
use atp_core::proximity::{build_l, build_m, transitive_closure, ProximityMatrix, Variant};
use proptest::prelude::*;

fn reach(g: &DirectedGraph, s: usize) -> Vec<bool> {
    let mut seen = vec![false; g.node_count()];
    let mut stack = vec![NodeId::from_index(s)];
    seen[s] = true;
    while let Some(x) = stack.pop() {
        for &y in g.out_neighbors(x) {
            if !seen[y.index()] {
                seen[y.index()] = true;
                stack.push(y);
            }
        }
    }
    seen
}

fn digraph(max_n: usize) -> impl Strategy<Value = DirectedGraph> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..n * 3)
            .prop_map(move |e| DirectedGraph::from_index_edges(n, e.into_iter().filter(|(a, b)| a != b)))
    })
}

/// Edges only go from lower to higher position in a random permutation.
fn dag(max_n: usize) -> impl Strategy<Value = DirectedGraph> {
    (1..=max_n).prop_flat_map(|n| {
        (
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
            prop::collection::vec((0..n, 0..n), 0..n * 3),
        )
            .prop_map(move |(perm, e)| {
                let edges = e
                    .into_iter()
                    .filter(|(a, b)| a < b)
                    .map(|(a, b)| (perm[a], perm[b]));
                DirectedGraph::from_index_edges(n, edges)
            })
    })
}

fn longest_path_levels(g: &DirectedGraph) -> Vec<i64> {
    let n = g.node_count();
    let mut memo = vec![None; n];
    fn depth(g: &DirectedGraph, v: usize, memo: &mut Vec<Option<i64>>) -> i64 {
        if let Some(d) = memo[v] {
            return d;
        }
        let d = g
            .in_neighbors(NodeId::from_index(v))
            .iter()
            .map(|u| depth(g, u.index(), memo) + 1)
            .max()
            .unwrap_or(1);
        memo[v] = Some(d);
        d
    }
    (0..n).map(|v| depth(g, v, &mut memo)).collect()
}

fn brute_force_agony(g: &DirectedGraph) -> i64 {
    let n = g.node_count();
    let mut r = vec![0i64; n];
    let mut best = i64::MAX;
    loop {
        best = best.min(total_agony(g, &r));
        let mut i = 0;
        while i < n && r[i] == n as i64 - 1 {
            r[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
        r[i] += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scc_matches_mutual_reachability(g in digraph(12)) {
        let scc = strongly_connected_components(&g);
        let r: Vec<Vec<bool>> = (0..g.node_count()).map(|s| reach(&g, s)).collect();
        for a in g.nodes() {
            for b in g.nodes() {
                let mutual = r[a.index()][b.index()] && r[b.index()][a.index()];
                prop_assert_eq!(scc.same(a, b), mutual);
            }
        }
        prop_assert_eq!(is_acyclic(&g), scc.len() == g.node_count());
    }

    #[test]
    fn closure_matches_bfs(g in dag(30)) {
        let c = transitive_closure(&g).unwrap();
        let mut nnz = 0;
        for s in g.nodes() {
            let r = reach(&g, s.index());
            for t in g.nodes() {
                let expect = s != t && r[t.index()];
                prop_assert_eq!(c.contains(s, t), expect);
                nnz += expect as u64;
            }
        }
        prop_assert_eq!(c.nnz(), nnz);
    }

    #[test]
    fn levels_are_longest_paths(g in dag(30)) {
        let lv = assign_levels(&g).unwrap().as_integers();
        prop_assert_eq!(&lv, &longest_path_levels(&g));
        for &(u, v) in g.edges() {
            prop_assert!(lv[u.index()] < lv[v.index()]);
        }
        let c = transitive_closure(&g).unwrap();
        let l: ProximityMatrix<f64> = build_l(&c, &assign_levels(&g).unwrap(), g.labels()).unwrap();
        prop_assert_eq!(l.nnz() as u64, c.nnz());
        for variant in Variant::ALL {
            let m = build_m(&l, variant, 1.0).unwrap();
            prop_assert!(m.values().iter().all(|&x| x > 0.0 && x.is_finite()));
        }
    }

    #[test]
    fn cycle_breaking_yields_a_dag(g in digraph(15)) {
        let rep = break_cycles(&g, &CycleBreakConfig::default());
        prop_assert!(is_acyclic(&rep.kept_graph));
        prop_assert_eq!(rep.kept_graph.edge_count() + rep.removed_edges.len(), g.edge_count());
        let scc = strongly_connected_components(&g);
        for &(u, v) in &rep.removed_edges {
            prop_assert!(g.has_edge(u, v));
            prop_assert!(scc.same(u, v), "removed an edge outside every cycle");
        }
        let again = break_cycles(&g, &CycleBreakConfig::default());
        prop_assert_eq!(rep.removed_edges, again.removed_edges);
    }

    #[test]
    fn agony_exact_is_optimal_and_heuristic_beats_baseline(g in digraph(5)) {
        let exact = rank_agony(&g, &AgonyConfig { mode: AgonyMode::Exact, ..Default::default() });
        prop_assert_eq!(total_agony(&g, &exact.as_integers()), brute_force_agony(&g));
        let heur = rank_agony(&g, &AgonyConfig { mode: AgonyMode::Heuristic, ..Default::default() });
        prop_assert!(total_agony(&g, &heur.as_integers()) <= total_agony(&g, &agony_baseline(&g)));
    }

    #[test]
    fn split_invariants_hold(g in digraph(20), seed in any::<u64>(), ratio in 0.05f64..0.9) {
        if let Ok(split) = make_split(&g, ratio, seed) {
            prop_assert_eq!(verify_split(&g, &split), Ok(()));
            prop_assert!(split.positives.len() <= split.target_positives);
            let again = make_split(&g, ratio, seed).unwrap();
            prop_assert_eq!(split.positives, again.positives);
            prop_assert_eq!(split.negatives, again.negatives);
        }
    }

    #[test]
    fn auc_matches_pair_count(
        pos in prop::collection::vec(0u8..8, 1..30),
        neg in prop::collection::vec(0u8..8, 1..30),
    ) {
        let mut twice = 0u64;
        for p in &pos {
            for q in &neg {
                twice += if p > q { 2 } else if p == q { 1 } else { 0 };
            }
        }
        let expect = twice as f64 / (2 * pos.len() * neg.len()) as f64;
        let p: Vec<f64> = pos.iter().map(|&x| x as f64).collect();
        let n: Vec<f64> = neg.iter().map(|&x| x as f64).collect();
        prop_assert_eq!(auc_from_scores(&p, &n).unwrap(), expect);
    }

    #[test]
    fn routing_metrics_match_definitions(ranks in prop::collection::vec(1usize..8, 1..20)) {
        let rankings: Vec<Vec<String>> = ranks
            .iter()
            .map(|&r| (1..=8).map(|i| if i == r { "t".to_string() } else { format!("o{i}") }).collect())
            .collect();
        let truths = vec!["t".to_string(); ranks.len()];
        let m = routing_metrics(&rankings, &truths).unwrap();
        prop_assert_eq!(&m, &routing_metrics_from_ranks(&ranks).unwrap());
        let n = ranks.len() as f64;
        let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
        prop_assert_eq!(m.mrr, mrr);
        prop_assert_eq!(m.precision_at_3, ranks.iter().filter(|&&r| r <= 3).count() as f64 / n);
        prop_assert_eq!(m.accuracy, ranks.iter().filter(|&&r| r == 1).count() as f64 / n);
    }

    #[test]
    fn pairwise_accuracy_matches_definition(
        bounty in prop::collection::vec(0u64..4, 2..10),
        scores in prop::collection::vec(0u8..3, 100),
    ) {
        let n = bounty.len();
        let s = |a: usize, b: usize| scores[a * 10 + b];
        let (mut good, mut pairs) = (0.0, 0);
        for a in 0..n {
            for b in 0..n {
                if bounty[a] < bounty[b] {
                    pairs += 1;
                    good += match s(a, b).cmp(&s(b, a)) {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        match pairwise_accuracy_from(&bounty, s) {
            Ok(acc) => prop_assert_eq!(acc, good / pairs as f64),
            Err(_) => prop_assert_eq!(pairs, 0),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn factorization_descends_and_round_trips(
        entries in prop::collection::vec((0usize..12, 0usize..12, 0.1f64..5.0), 1..60),
        k in 1usize..5,
        rho in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let mut seen = HashSet::new();
        let entries: Vec<_> = entries.into_iter().filter(|e| seen.insert((e.0, e.1))).collect();
        let m = ProximityMatrix::from_entries(12, entries, Variant::Linear);
        let cfg = FactorizationConfig { k, sweeps: 15, zero_weight: rho, seed, tol: 0.0, ..Default::default() };
        let model = factorize(&m, &cfg).unwrap();
        for w in model.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12, "{} -> {}", w[0], w[1]);
        }
        prop_assert!(model.source_matrix().iter().chain(model.target_matrix()).all(|&x| x >= 0.0));
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let back = parse_model::<f64>(&buf).unwrap();
        prop_assert_eq!(back.source_matrix(), model.source_matrix());
        prop_assert_eq!(back.target_matrix(), model.target_matrix());
        prop_assert_eq!(back.labels(), model.labels());
    }
}
