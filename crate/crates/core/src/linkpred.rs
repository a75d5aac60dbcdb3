//! Link-prediction evaluation: held-out positive edges, direction-hard
//! negatives and AUC.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factorization::{factorize, EmbeddingModel};
use crate::graph::{strongly_connected_components, DirectedGraph, Edge, NodeId};
use crate::pipeline::{derive_seed, prepare, proximity_for, PipelineConfig};
use crate::proximity::{transitive_closure_with, ClosureLimits, ReachabilityClosure, Variant};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct EvalSplit {
    /// Input graph minus the positives; same node ids as the input.
    pub residual_graph: DirectedGraph,
    /// Held-out edges in removal order.
    pub positives: Vec<Edge>,
    /// Pairs `(u, v)` where `v` reaches `u` but `u` does not reach `v`.
    pub negatives: Vec<Edge>,
    pub sample_ratio: f64,
    pub seed: u64,
    /// `ceil(sample_ratio * |E|)`
    pub target_positives: usize,
}

impl EvalSplit {
    /// How many positives are missing because every remaining candidate would
    /// disconnect the residual graph.
    pub fn shortfall(&self) -> usize {
        self.target_positives - self.positives.len()
    }
}

/// Reachability queries on a possibly cyclic graph, via its condensation.
pub struct Reachability {
    comp: Vec<u32>,
    closure: Option<ReachabilityClosure>,
    graph: DirectedGraph,
}

impl Reachability {
    pub fn new(g: &DirectedGraph) -> Self {
        let scc = strongly_connected_components(g);
        let cond = scc.condensation(g);
        let limits = ClosureLimits {
            max_nnz: u64::MAX,
            max_bytes: 1 << 30,
        };
        let closure = transitive_closure_with(&cond, limits).ok();
        Reachability {
            comp: scc.component_id.clone(),
            closure,
            graph: g.clone(),
        }
    }

    /// Whether a non-empty path `a -> b` exists, or `a == b`.
    pub fn reaches(&self, a: NodeId, b: NodeId) -> bool {
        let (ca, cb) = (self.comp[a.index()], self.comp[b.index()]);
        if ca == cb {
            return true;
        }
        match &self.closure {
            Some(c) => c.contains(NodeId(ca), NodeId(cb)),
            None => bfs_reaches(&self.graph, a, b),
        }
    }
}

fn bfs_reaches(g: &DirectedGraph, a: NodeId, b: NodeId) -> bool {
    let mut seen = vec![false; g.node_count()];
    let mut stack = vec![a];
    seen[a.index()] = true;
    while let Some(v) = stack.pop() {
        if v == b {
            return true;
        }
        for &w in g.out_neighbors(v) {
            if !seen[w.index()] {
                seen[w.index()] = true;
                stack.push(w);
            }
        }
    }
    false
}

/// Undirected view with edge deletion, for the connectivity test.
struct Residual {
    adj: Vec<Vec<(u32, u32)>>,
    removed: Vec<bool>,
}

impl Residual {
    fn new(g: &DirectedGraph) -> Self {
        let mut adj = vec![Vec::new(); g.node_count()];
        for (e, &(u, v)) in g.edges().iter().enumerate() {
            adj[u.index()].push((v.0, e as u32));
            adj[v.index()].push((u.0, e as u32));
        }
        Residual {
            adj,
            removed: vec![false; g.edge_count()],
        }
    }

    /// Whether `a` and `b` are joined by an undirected path of live edges.
    fn connected(&self, a: NodeId, b: NodeId) -> bool {
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![a.0];
        seen[a.index()] = true;
        while let Some(v) = stack.pop() {
            for &(w, e) in &self.adj[v as usize] {
                if self.removed[e as usize] || seen[w as usize] {
                    continue;
                }
                if w == b.0 {
                    return true;
                }
                seen[w as usize] = true;
                stack.push(w);
            }
        }
        false
    }
}

/// Draws the held-out split. An edge becomes a positive only if its endpoints
/// stay weakly connected without it, so the number of weak components never
/// grows. Negatives are uniform node pairs kept only when the reverse
/// direction is reachable in the input graph and the forward one is not.
pub fn make_split(g: &DirectedGraph, sample_ratio: f64, seed: u64) -> Result<EvalSplit> {
    if !(sample_ratio > 0.0 && sample_ratio < 1.0) {
        return Err(Error::param("ratio", format!("{sample_ratio} is outside (0, 1)")));
    }
    let target = (sample_ratio * g.edge_count() as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..g.edge_count()).collect();
    order.shuffle(&mut rng);
    let mut residual = Residual::new(g);
    let mut positives = Vec::with_capacity(target);
    for e in order {
        if positives.len() == target {
            break;
        }
        let (u, v) = g.edges()[e];
        residual.removed[e] = true;
        if residual.connected(u, v) {
            positives.push((u, v));
        } else {
            residual.removed[e] = false;
        }
    }
    if positives.len() < target {
        log::warn!(
            "split shortfall: {} of {} positives (remaining edges are bridges)",
            positives.len(),
            target
        );
    }

    let reach = Reachability::new(g);
    let needed = positives.len();
    let n = g.node_count();
    let max_attempts = 10_000 + 1_000 * needed;
    let mut negatives = Vec::with_capacity(needed);
    let mut seen: HashSet<Edge> = HashSet::new();
    let mut attempts = 0;
    while negatives.len() < needed {
        if attempts == max_attempts || n < 2 {
            return Err(Error::NotEnoughNegatives {
                found: negatives.len(),
                needed,
                attempts,
            });
        }
        attempts += 1;
        let u = NodeId(rng.gen_range(0..n as u32));
        let v = NodeId(rng.gen_range(0..n as u32));
        if u == v || seen.contains(&(u, v)) {
            continue;
        }
        if reach.reaches(v, u) && !reach.reaches(u, v) {
            debug_assert!(!g.has_edge(u, v));
            seen.insert((u, v));
            negatives.push((u, v));
        }
    }

    let gone: HashSet<Edge> = positives.iter().copied().collect();
    Ok(EvalSplit {
        residual_graph: g.without_edges(&gone),
        positives,
        negatives,
        sample_ratio,
        seed,
        target_positives: target,
    })
}

/// Re-checks every split invariant against the input graph from scratch.
pub fn verify_split(g: &DirectedGraph, split: &EvalSplit) -> std::result::Result<(), String> {
    if split.negatives.len() != split.positives.len() {
        return Err(format!(
            "{} negatives for {} positives",
            split.negatives.len(),
            split.positives.len()
        ));
    }
    let mut live: HashSet<Edge> = g.edges().iter().copied().collect();
    for &(u, v) in &split.positives {
        if !live.remove(&(u, v)) {
            return Err(format!("positive ({}, {}) is not an input edge", u.0, v.0));
        }
        // undirected search over the remaining edges
        let mut adj = vec![Vec::new(); g.node_count()];
        for &(a, b) in &live {
            adj[a.index()].push(b);
            adj[b.index()].push(a);
        }
        let mut seen = vec![false; g.node_count()];
        let mut stack = vec![u];
        seen[u.index()] = true;
        while let Some(x) = stack.pop() {
            for &y in &adj[x.index()] {
                if !seen[y.index()] {
                    seen[y.index()] = true;
                    stack.push(y);
                }
            }
        }
        if !seen[v.index()] {
            return Err(format!("removing ({}, {}) disconnected the residual", u.0, v.0));
        }
    }
    let mut residual: Vec<Edge> = split.residual_graph.edges().to_vec();
    let mut expect: Vec<Edge> = live.into_iter().collect();
    residual.sort_unstable();
    expect.sort_unstable();
    if residual != expect || split.residual_graph.node_count() != g.node_count() {
        return Err("residual graph is not the input minus the positives".into());
    }
    let mut distinct = HashSet::new();
    for &(u, v) in &split.negatives {
        if !distinct.insert((u, v)) {
            return Err(format!("duplicate negative ({}, {})", u.0, v.0));
        }
        if g.has_edge(u, v) {
            return Err(format!("negative ({}, {}) is an input edge", u.0, v.0));
        }
        if !bfs_reaches(g, v, u) || bfs_reaches(g, u, v) {
            return Err(format!("negative ({}, {}) violates the reachability rule", u.0, v.0));
        }
    }
    Ok(())
}

/// Exact AUC with ties counted half.
pub fn auc_from_scores<F: Scalar>(positives: &[F], negatives: &[F]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Empty("AUC needs positives and negatives"));
    }
    if positives.iter().chain(negatives).any(|x| x.is_nan()) {
        return Err(Error::param("scores", "NaN score"));
    }
    let mut neg: Vec<F> = negatives.to_vec();
    neg.sort_unstable_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let mut twice_wins: u128 = 0;
    for &p in positives {
        let below = neg.partition_point(|&x| x < p);
        let upto = neg.partition_point(|&x| x <= p);
        twice_wins += 2 * below as u128 + (upto - below) as u128;
    }
    let pairs = positives.len() as u128 * negatives.len() as u128;
    Ok(twice_wins as f64 / (2 * pairs) as f64)
}

/// AUC of the model on a split. Pairs are ranked by the inner product, which
/// orders them exactly as the sigmoid score does but without saturating.
pub fn auc<F: Scalar>(model: &EmbeddingModel<F>, split: &EvalSplit) -> Result<f64> {
    let score = |pairs: &[Edge]| -> Result<Vec<F>> { pairs.iter().map(|&(u, v)| model.dot(u, v)).collect() };
    auc_from_scores(&score(&split.positives)?, &score(&split.negatives)?)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SplitStats {
    pub n_pos: usize,
    pub n_neg: usize,
    pub shortfall: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct VariantResult {
    pub variant: Variant,
    pub auc: f64,
    pub train_seconds: f64,
    pub nnz_m: usize,
    pub final_objective: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SuiteReport {
    pub dataset: String,
    pub seed: u64,
    pub ratio: f64,
    pub splits: SplitStats,
    pub removed_edges: usize,
    pub nnz_a: u64,
    /// Sorted by variant name.
    pub results: Vec<VariantResult>,
}

impl SuiteReport {
    pub fn result(&self, variant: Variant) -> Option<&VariantResult> {
        self.results.iter().find(|r| r.variant == variant)
    }
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub dataset: String,
    pub ratio: f64,
    /// Variant-independent settings; `pipeline.variant` is ignored.
    pub pipeline: PipelineConfig,
}

/// One split, one cycle-break/closure pass on the residual graph, then one
/// model per variant.
pub fn run_variant_suite(g: &DirectedGraph, variants: &[Variant], cfg: &SuiteConfig) -> Result<SuiteReport> {
    if variants.is_empty() {
        return Err(Error::param("variants", "at least one variant is required"));
    }
    let seed = cfg.pipeline.seed;
    let split = make_split(g, cfg.ratio, derive_seed(seed, "split"))?;
    verify_split(g, &split).map_err(|m| Error::param("split", m))?;

    let prep = prepare(&split.residual_graph, &cfg.pipeline)?;
    let l = prep.linear::<f64>()?;
    let fcfg = cfg.pipeline.factorization::<f64>();

    let mut variants: Vec<Variant> = variants.to_vec();
    variants.sort_by_key(|v| v.name());
    variants.dedup();
    let mut results = variants
        .par_iter()
        .map(|&variant| {
            let start = Instant::now();
            let m = proximity_for(&l, variant, cfg.pipeline.c)?;
            let model = factorize(&m, &fcfg)?;
            let train_seconds = start.elapsed().as_secs_f64();
            let auc = auc(&model, &split)?;
            log::info!("{variant}: auc {auc:.4} in {train_seconds:.2}s");
            Ok(VariantResult {
                variant,
                auc,
                train_seconds,
                nnz_m: m.nnz(),
                final_objective: *model.objective_trace.last().expect("non-empty trace"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|r| r.variant.name());

    Ok(SuiteReport {
        dataset: cfg.dataset.clone(),
        seed,
        ratio: cfg.ratio,
        splits: SplitStats {
            n_pos: split.positives.len(),
            n_neg: split.negatives.len(),
            shortfall: split.shortfall(),
        },
        removed_edges: prep.cycles.removed_edges.len(),
        nnz_a: prep.closure.nnz(),
        results,
    })
}
