//! Seeded generators for graphs with a known hierarchy and for small
//! Stack Exchange style dumps with a known expertise order.

use std::collections::HashSet;
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{DirectedGraph, Edge, GraphBuilder, Insert, NodeId};

#[derive(Clone, Copy, Debug)]
pub struct PlantedConfig {
    pub nodes: usize,
    /// Total edge count, back edges included.
    pub edges: usize,
    pub levels: usize,
    /// Fraction of edges that point from a higher level to a lower one.
    pub back_fraction: f64,
    /// Forward edges span between 1 and this many levels.
    pub max_span: usize,
    /// Back edges span between 1 and this many levels.
    pub max_back_span: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            nodes: 500,
            edges: 2500,
            levels: 20,
            back_fraction: 0.05,
            max_span: 3,
            max_back_span: 3,
            seed: 0,
        }
    }
}

pub struct PlantedGraph {
    pub graph: DirectedGraph,
    /// Planted level per node, 0-based.
    pub levels: Vec<usize>,
    /// The back edges.
    pub injected: HashSet<Edge>,
}

/// Nodes are spread over `levels` layers; forward edges go up by 1 to
/// `max_span` layers, back edges go down by 1 to `max_back_span` layers.
pub fn planted_hierarchy(cfg: &PlantedConfig) -> PlantedGraph {
    assert!(cfg.levels >= 2 && cfg.nodes >= cfg.levels, "need at least one node per level");
    assert!(cfg.max_span >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..cfg.nodes).collect();
    order.shuffle(&mut rng);
    let mut levels = vec![0; cfg.nodes];
    let mut layer: Vec<Vec<usize>> = vec![Vec::new(); cfg.levels];
    for (rank, &v) in order.iter().enumerate() {
        let l = rank * cfg.levels / cfg.nodes;
        levels[v] = l;
        layer[l].push(v);
    }
    for l in &mut layer {
        l.sort_unstable();
    }

    let mut b = GraphBuilder::new();
    for v in 0..cfg.nodes {
        b.intern(&format!("n{v}"));
    }
    let n_back = (cfg.back_fraction * cfg.edges as f64).round() as usize;
    let n_fwd = cfg.edges - n_back;
    let pick = |forward: bool, rng: &mut ChaCha8Rng| -> (usize, usize) {
        loop {
            let u = rng.gen_range(0..cfg.nodes);
            let span = rng.gen_range(1..=if forward { cfg.max_span } else { cfg.max_back_span });
            let target = if forward {
                levels[u] + span
            } else if levels[u] >= span {
                levels[u] - span
            } else {
                continue;
            };
            if let Some(candidates) = layer.get(target) {
                return (u, *candidates.choose(rng).expect("non-empty layer"));
            }
        }
    };
    let mut injected = HashSet::new();
    let mut added = 0;
    while added < n_fwd {
        let (u, v) = pick(true, &mut rng);
        if b.add_edge_ids(NodeId::from_index(u), NodeId::from_index(v)) == Insert::Added {
            added += 1;
        }
    }
    while injected.len() < n_back {
        let (u, v) = pick(false, &mut rng);
        let e = (NodeId::from_index(u), NodeId::from_index(v));
        if b.add_edge_ids(e.0, e.1) == Insert::Added {
            injected.insert(e);
        }
    }
    PlantedGraph {
        graph: b.build(),
        levels,
        injected,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CqaConfig {
    pub users: usize,
    pub askers: usize,
    pub questions_per_asker: usize,
    /// Answerers per question, best one included.
    pub answerers: usize,
    /// Answerers come from the `pool` users directly above the asker.
    pub pool: usize,
    pub seed: u64,
}

impl Default for CqaConfig {
    fn default() -> Self {
        CqaConfig {
            users: 9,
            askers: 6,
            questions_per_asker: 5,
            answerers: 3,
            pool: 3,
            seed: 0,
        }
    }
}

/// `Posts.xml` and `Votes.xml` contents. User `k` has expertise `k`: every
/// question is answered by users from the `pool` directly above its asker,
/// and the most expert answerer is accepted. Askers are the least expert
/// users. When the pool is wider than `answerers`, later questions of an
/// asker draw from its upper end. Bounty grows with the expertise of the
/// accepted answerer.
pub fn synthetic_cqa(cfg: &CqaConfig) -> (String, String) {
    assert!(cfg.askers + cfg.answerers <= cfg.users);
    assert!(cfg.pool >= cfg.answerers);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut posts = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<posts>\n");
    let mut votes = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<votes>\n");
    let mut next_id = 1;
    let mut vote_id = 1;
    let mut minute = 0;
    for round in 0..cfg.questions_per_asker {
        for asker in 1..=cfg.askers {
            let top = cfg.users.min(asker.saturating_add(cfg.pool));
            let pool: Vec<usize> = (asker + 1..=top).collect();
            // shift the pool upwards as the asker gains expertise
            let skip = (round * (pool.len() - cfg.answerers)) / cfg.questions_per_asker.max(1);
            let window = &pool[skip.min(pool.len() - cfg.answerers)..];
            let mut chosen: Vec<usize> = window.choose_multiple(&mut rng, cfg.answerers).copied().collect();
            chosen.sort_unstable();
            let best = *chosen.last().expect("answerers >= 1");
            let qid = next_id;
            let accepted = qid + chosen.len();
            next_id += chosen.len() + 1;
            minute += 1;
            let _ = writeln!(
                posts,
                "  <row Id=\"{qid}\" PostTypeId=\"1\" AcceptedAnswerId=\"{accepted}\" CreationDate=\"2017-01-01T{:02}:{:02}:00.000\" OwnerUserId=\"{asker}\" />",
                minute / 60,
                minute % 60
            );
            for (i, &u) in chosen.iter().enumerate() {
                let _ = writeln!(
                    posts,
                    "  <row Id=\"{}\" PostTypeId=\"2\" ParentId=\"{qid}\" CreationDate=\"2017-01-02T00:00:00.000\" OwnerUserId=\"{u}\" />",
                    qid + 1 + i
                );
            }
            let _ = writeln!(
                votes,
                "  <row Id=\"{vote_id}\" PostId=\"{qid}\" VoteTypeId=\"9\" BountyAmount=\"{}\" CreationDate=\"2017-01-03T00:00:00.000\" />",
                50 * best
            );
            vote_id += 1;
        }
    }
    posts.push_str("</posts>\n");
    votes.push_str("</votes>\n");
    (posts, votes)
}
