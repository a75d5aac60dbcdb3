//! End-to-end embedding: cycle breaking, levels, closure, proximity matrix and
//! factorization, with per-stage timings.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::cycles::{break_cycles, CycleBreakConfig, CycleBreakReport};
use crate::error::{Error, Result};
use crate::factorization::{factorize, EmbeddingModel, FactorizationConfig};
use crate::graph::DirectedGraph;
use crate::hierarchy::{assign_levels, AgonyMode, HierarchyRanking, RankingKind};
use crate::proximity::{build_l, build_m, transitive_closure_with, ClosureLimits, ProximityMatrix, ReachabilityClosure, Variant};
use crate::scalar::Scalar;

/// Derives an independent per-stage seed from a master seed.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    // FNV-1a of the stage name, mixed with the master seed by splitmix64
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub c: f64,
    pub k: usize,
    pub lambda: f64,
    pub sweeps: usize,
    pub zero_weight: f64,
    pub tol: f64,
    pub alpha: f64,
    pub seed: u64,
    pub rankers: Vec<RankingKind>,
    pub agony_mode: AgonyMode,
    pub agony_exact_cap: usize,
    pub trueskill_epochs: usize,
    pub rerank_on_split: bool,
    pub closure_max_nnz: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let f = FactorizationConfig::<f64>::default();
        let cb = CycleBreakConfig::default();
        PipelineConfig {
            variant: Variant::Log,
            c: 0.0,
            k: f.k,
            lambda: f.lambda,
            sweeps: f.sweeps,
            zero_weight: f.zero_weight,
            tol: f.tol,
            alpha: f.alpha,
            seed: 0,
            rankers: cb.rankers,
            agony_mode: cb.agony.mode,
            agony_exact_cap: cb.agony.exact_edge_cap,
            trueskill_epochs: cb.trueskill.epochs,
            rerank_on_split: cb.rerank_on_split,
            closure_max_nnz: ClosureLimits::default().max_nnz,
        }
    }
}

fn parse_num<T: std::str::FromStr>(name: &'static str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::param(name, format!("cannot parse `{value}`")))
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "variant",
        "c",
        "k",
        "lambda",
        "sweeps",
        "zero_weight",
        "tol",
        "alpha",
        "seed",
        "rankers",
        "agony_mode",
        "agony_exact_cap",
        "trueskill_epochs",
        "rerank_on_split",
        "closure_max_nnz",
    ];

    /// Sets one key from its textual value. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "variant" => self.variant = value.trim().parse()?,
            "c" => self.c = parse_num("c", value)?,
            "k" => self.k = parse_num("k", value)?,
            "lambda" => self.lambda = parse_num("lambda", value)?,
            "sweeps" => self.sweeps = parse_num("sweeps", value)?,
            "zero_weight" => self.zero_weight = parse_num("zero_weight", value)?,
            "tol" => self.tol = parse_num("tol", value)?,
            "alpha" => self.alpha = parse_num("alpha", value)?,
            "seed" => self.seed = parse_num("seed", value)?,
            "rankers" => {
                self.rankers = value
                    .split(',')
                    .map(|r| r.trim().parse())
                    .collect::<Result<Vec<_>>>()?
            }
            "agony_mode" => {
                self.agony_mode = match value.trim() {
                    "auto" => AgonyMode::Auto,
                    "exact" => AgonyMode::Exact,
                    "heuristic" => AgonyMode::Heuristic,
                    other => return Err(Error::param("agony_mode", format!("unknown mode `{other}`"))),
                }
            }
            "agony_exact_cap" => self.agony_exact_cap = parse_num("agony_exact_cap", value)?,
            "trueskill_epochs" => self.trueskill_epochs = parse_num("trueskill_epochs", value)?,
            "rerank_on_split" => self.rerank_on_split = parse_num("rerank_on_split", value)?,
            "closure_max_nnz" => self.closure_max_nnz = parse_num("closure_max_nnz", value)?,
            _ => return Err(Error::param("config", format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Current values, as they would be written in a config file.
    pub fn echo(&self) -> BTreeMap<&'static str, String> {
        let mode = match self.agony_mode {
            AgonyMode::Auto => "auto",
            AgonyMode::Exact => "exact",
            AgonyMode::Heuristic => "heuristic",
        };
        let rankers: Vec<&str> = self.rankers.iter().map(|r| r.name()).collect();
        BTreeMap::from([
            ("variant", self.variant.name().to_string()),
            ("c", self.c.to_string()),
            ("k", self.k.to_string()),
            ("lambda", self.lambda.to_string()),
            ("sweeps", self.sweeps.to_string()),
            ("zero_weight", self.zero_weight.to_string()),
            ("tol", self.tol.to_string()),
            ("alpha", self.alpha.to_string()),
            ("seed", self.seed.to_string()),
            ("rankers", rankers.join(",")),
            ("agony_mode", mode.to_string()),
            ("agony_exact_cap", self.agony_exact_cap.to_string()),
            ("trueskill_epochs", self.trueskill_epochs.to_string()),
            ("rerank_on_split", self.rerank_on_split.to_string()),
            ("closure_max_nnz", self.closure_max_nnz.to_string()),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.c.is_finite() {
            return Err(Error::param("c", "must be finite"));
        }
        if self.rankers.is_empty() {
            return Err(Error::param("rankers", "at least one ranker is required"));
        }
        if self.rankers.contains(&RankingKind::Level) {
            return Err(Error::param("rankers", "level ranking cannot vote on cycles"));
        }
        if self.trueskill_epochs == 0 {
            return Err(Error::param("trueskill_epochs", "must be at least 1"));
        }
        self.factorization::<f64>().validate()
    }

    pub fn cycle_break(&self) -> CycleBreakConfig {
        let mut cb = CycleBreakConfig {
            rankers: self.rankers.clone(),
            ..Default::default()
        };
        cb.trueskill.seed = derive_seed(self.seed, "trueskill");
        cb.trueskill.epochs = self.trueskill_epochs;
        cb.agony.mode = self.agony_mode;
        cb.agony.exact_edge_cap = self.agony_exact_cap;
        cb.rerank_on_split = self.rerank_on_split;
        cb
    }

    pub fn factorization<F: Scalar>(&self) -> FactorizationConfig<F> {
        FactorizationConfig {
            k: self.k,
            lambda: F::of(self.lambda),
            sweeps: self.sweeps,
            zero_weight: F::of(self.zero_weight),
            seed: derive_seed(self.seed, "factorize"),
            tol: F::of(self.tol),
            alpha: F::of(self.alpha),
        }
    }

    pub fn closure_limits(&self) -> ClosureLimits {
        ClosureLimits {
            max_nnz: self.closure_max_nnz,
            ..Default::default()
        }
    }
}

/// Splits `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Malformed {
            path: "config".into(),
            line: n + 1,
            message: format!("expected key=value, got `{line}`"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct StageReport {
    pub stages: Vec<StageTiming>,
    pub node_count: usize,
    pub edge_count: usize,
    pub scc_count: usize,
    pub max_scc_size: usize,
    pub removed_edges: usize,
    #[serde(rename = "nnz_A")]
    pub nnz_a: u64,
    #[serde(rename = "nnz_M")]
    pub nnz_m: usize,
    pub sweeps_run: usize,
    pub final_objective: f64,
}

/// Everything before the variant-specific matrix: shared across variants.
pub struct Prepared {
    pub cycles: CycleBreakReport,
    pub levels: HierarchyRanking,
    pub closure: ReachabilityClosure,
    pub timings: Vec<StageTiming>,
}

fn stage<T>(name: &'static str, timings: &mut Vec<StageTiming>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })?;
    let seconds = start.elapsed().as_secs_f64();
    log::info!("{name}: {seconds:.3}s");
    timings.push(StageTiming { stage: name, seconds });
    Ok(out)
}

pub fn prepare(g: &DirectedGraph, cfg: &PipelineConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mut timings = Vec::new();
    let cycles = stage("break_cycles", &mut timings, || Ok(break_cycles(g, &cfg.cycle_break())))?;
    let levels = stage("assign_levels", &mut timings, || assign_levels(&cycles.kept_graph))?;
    let closure = stage("transitive_closure", &mut timings, || {
        transitive_closure_with(&cycles.kept_graph, cfg.closure_limits())
    })?;
    Ok(Prepared {
        cycles,
        levels,
        closure,
        timings,
    })
}

impl Prepared {
    pub fn linear<F: Scalar>(&self) -> Result<ProximityMatrix<F>> {
        build_l(&self.closure, &self.levels, self.cycles.kept_graph.labels())
    }
}

/// Proximity matrix for `variant`, from the shared linear matrix.
pub fn proximity_for<F: Scalar>(l: &ProximityMatrix<F>, variant: Variant, c: f64) -> Result<ProximityMatrix<F>> {
    build_m(l, variant, F::of(c))
}

pub fn embed_prepared<F: Scalar>(
    g: &DirectedGraph,
    prep: &Prepared,
    cfg: &PipelineConfig,
) -> Result<(EmbeddingModel<F>, StageReport)> {
    let mut timings = prep.timings.clone();
    let l = stage("build_L", &mut timings, || prep.linear::<F>())?;
    let m = stage("build_M", &mut timings, || proximity_for(&l, cfg.variant, cfg.c))?;
    drop(l);
    let fcfg = cfg.factorization::<F>();
    let model = stage("factorize", &mut timings, || {
        factorize(&m, &fcfg)?.with_labels(g.labels().to_vec())
    })?;
    let report = StageReport {
        stages: timings,
        node_count: g.node_count(),
        edge_count: g.edge_count(),
        scc_count: prep.cycles.scc_count,
        max_scc_size: prep.cycles.max_scc_size,
        removed_edges: prep.cycles.removed_edges.len(),
        nnz_a: prep.closure.nnz(),
        nnz_m: m.nnz(),
        sweeps_run: model.objective_trace.len() - 1,
        final_objective: model
            .objective_trace
            .last()
            .map_or(f64::NAN, |x| x.to_f64_lossy()),
    };
    Ok((model, report))
}

/// Full pipeline on one graph.
pub fn embed<F: Scalar>(g: &DirectedGraph, cfg: &PipelineConfig) -> Result<(EmbeddingModel<F>, StageReport)> {
    let prep = prepare(g, cfg)?;
    embed_prepared(g, &prep, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stage_and_master() {
        assert_ne!(derive_seed(7, "trueskill"), derive_seed(7, "factorize"));
        assert_ne!(derive_seed(7, "split"), derive_seed(8, "split"));
        assert_eq!(derive_seed(7, "split"), derive_seed(7, "split"));
    }

    #[test]
    fn config_keys_round_trip() {
        let mut cfg = PipelineConfig::default();
        let text = "# comment\nvariant = harmonic\nk=8 # inline\nrankers=agony\nagony_mode=exact\n";
        for (k, v) in parse_config_text(text).unwrap() {
            cfg.set(&k, &v).unwrap();
        }
        assert_eq!(cfg.variant, Variant::Harmonic);
        assert_eq!(cfg.k, 8);
        assert_eq!(cfg.rankers, vec![RankingKind::Agony]);
        let echo = cfg.echo();
        assert_eq!(echo.len(), PipelineConfig::KEYS.len());
        let mut again = PipelineConfig::default();
        for (k, v) in &echo {
            again.set(k, v).unwrap();
        }
        assert_eq!(again, cfg);
        assert!(cfg.set("bogus", "1").is_err());
        assert!(parse_config_text("novalue\n").is_err());
    }

    #[test]
    fn acyclic_graph_passes_through() {
        let g = DirectedGraph::from_labeled_edges(&[("a", "b"), ("b", "c")]);
        let cfg = PipelineConfig {
            k: 2,
            sweeps: 5,
            ..Default::default()
        };
        let (model, rep) = embed::<f64>(&g, &cfg).unwrap();
        assert_eq!(rep.removed_edges, 0);
        assert_eq!(rep.nnz_a, 3);
        assert_eq!(rep.nnz_m, 3);
        assert_eq!(model.labels(), g.labels());
        let names: Vec<_> = rep.stages.iter().map(|s| s.stage).collect();
        assert_eq!(
            names,
            ["break_cycles", "assign_levels", "transitive_closure", "build_L", "build_M", "factorize"]
        );
        assert!(rep.stages.iter().all(|s| s.seconds >= 0.0));
    }

    #[test]
    fn edgeless_graph_fails_in_factorize() {
        let g = DirectedGraph::from_index_edges(3, []);
        let err = embed::<f64>(&g, &PipelineConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "factorize", .. }));
    }
}
