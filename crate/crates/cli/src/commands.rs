use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use atp_core::cqa::{
    build_competition_graph, difficulty_from_records, evaluate_routing, ingest_stackexchange, read_cold, read_records,
    read_text_vectors, select_cold, write_cold, write_records, QARecord,
};
use atp_core::cycles::break_cycles;
use atp_core::factorization::{export_embeddings, load_model, save_model, EmbeddingModel};
use atp_core::graph::{load_edge_list, write_edge_list, DirectedGraph, EdgeListFormat};
use atp_core::hierarchy::assign_levels;
use atp_core::linkpred::{run_variant_suite, SuiteConfig};
use atp_core::pipeline::{embed as run_pipeline, PipelineConfig, StageReport};
use atp_core::proximity::Variant;
use atp_core::Scalar;
use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use crate::config::PipelineArgs;
use crate::output::{envelope, sibling, strip_timings, Outputs};

/// How a command finished when it did not fail outright.
#[derive(Debug, PartialEq, Eq)]
pub enum Status {
    Clean,
    /// Finished, but the evaluation came up short of what was asked.
    Shortfall,
}

#[derive(ValueEnum, Clone, Copy, Debug, Default)]
pub enum Format {
    /// Any run of spaces or tabs separates tokens
    #[default]
    Whitespace,
    /// Single tabs separate tokens; labels may contain spaces
    Tsv,
}

impl From<Format> for EdgeListFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Whitespace => EdgeListFormat::Whitespace,
            Format::Tsv => EdgeListFormat::Tsv,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Args, Debug)]
pub struct GraphInput {
    /// Edge list, one `src dst` pair per line
    #[arg(long, value_name = "PATH")]
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

impl GraphInput {
    fn load(&self) -> Result<DirectedGraph> {
        let (g, rep) = load_edge_list(&self.graph, self.format.into())
            .with_context(|| format!("cannot load graph {}", self.graph.display()))?;
        log::info!(
            "{}: {} nodes, {} edges ({} duplicates, {} self-loops dropped)",
            self.graph.display(),
            g.node_count(),
            g.edge_count(),
            rep.duplicates,
            rep.self_loops
        );
        Ok(g)
    }
}

fn echo(cfg: &PipelineConfig) -> BTreeMap<String, String> {
    cfg.echo().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn merge(base: Value, extra: Value) -> Value {
    match (base, extra) {
        (Value::Object(mut a), Value::Object(b)) => {
            a.extend(b);
            Value::Object(a)
        }
        (a, _) => a,
    }
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub input: GraphInput,
    /// Model file to write
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Stage report; defaults to `<out stem>.report.json`
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Also write source vectors as TSV
    #[arg(long, value_name = "PATH", requires = "targets")]
    pub sources: Option<PathBuf>,
    /// Also write target vectors as TSV
    #[arg(long, value_name = "PATH", requires = "sources")]
    pub targets: Option<PathBuf>,
    /// Arithmetic used while fitting; the model file always stores f64
    #[arg(long, value_enum, default_value_t)]
    pub precision: Precision,
    /// Leave wall-clock times out of the report
    #[arg(long)]
    pub no_timings: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

pub fn embed(a: &EmbedArgs) -> Result<Status> {
    let cfg = a.pipeline.resolve()?;
    let g = a.input.load()?;
    let mut out = Outputs::default();
    let report = match a.precision {
        Precision::F64 => fit_and_save::<f64>(&g, &cfg, a, &mut out)?,
        Precision::F32 => fit_and_save::<f32>(&g, &cfg, a, &mut out)?,
    };
    let mut config = echo(&cfg);
    config.insert("precision".into(), format!("{:?}", a.precision).to_lowercase());
    let mut body = merge(
        json!({ "graph": a.input.graph, "model": a.out }),
        serde_json::to_value(&report)?,
    );
    if a.no_timings {
        strip_timings(&mut body);
    }
    let doc = envelope(cfg.seed, config, body)?;
    let report_path = a.report.clone().unwrap_or_else(|| sibling(&a.out, "report.json"));
    out.json(&report_path, &doc)?;
    out.commit();
    log::info!(
        "{} removed edges, nnz(A) = {}, final objective {:.6e}",
        report.removed_edges,
        report.nnz_a,
        report.final_objective
    );
    Ok(Status::Clean)
}

fn fit_and_save<F: Scalar>(
    g: &DirectedGraph,
    cfg: &PipelineConfig,
    a: &EmbedArgs,
    out: &mut Outputs,
) -> Result<StageReport> {
    let (model, report) = run_pipeline::<F>(g, cfg)?;
    out.create(&a.out, |p| save_model(&model, p))?;
    if let (Some(s), Some(t)) = (&a.sources, &a.targets) {
        out.create(s, |_| Ok(()))?;
        out.create(t, |_| export_embeddings(&model, s, t))?;
    }
    Ok(report)
}

#[derive(Args, Debug)]
pub struct BreakCyclesArgs {
    #[command(flatten)]
    pub input: GraphInput,
    /// Removed edges, as an edge list
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// JSON summary; defaults to `<out stem>.summary.json`
    #[arg(long, value_name = "PATH")]
    pub summary: Option<PathBuf>,
    /// Also write the remaining acyclic edge list
    #[arg(long, value_name = "PATH")]
    pub kept: Option<PathBuf>,
    /// Also write the level of every node in the remaining DAG
    #[arg(long, value_name = "PATH")]
    pub levels: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

pub fn break_cycles_cmd(a: &BreakCyclesArgs) -> Result<Status> {
    let cfg = a.pipeline.resolve()?;
    let g = a.input.load()?;
    let rep = break_cycles(&g, &cfg.cycle_break());
    let mut out = Outputs::default();
    out.create(&a.out, |p| write_edge_list(&g, &rep.removed_edges, p))?;
    if let Some(path) = &a.kept {
        out.create(path, |p| write_edge_list(&rep.kept_graph, rep.kept_graph.edges(), p))?;
    }
    if let Some(path) = &a.levels {
        let levels = assign_levels(&rep.kept_graph)?;
        out.create(path, |p| levels.write_tsv(&rep.kept_graph, p))?;
    }
    let doc = envelope(cfg.seed, echo(&cfg), rep.summary())?;
    out.json(&a.summary.clone().unwrap_or_else(|| sibling(&a.out, "summary.json")), &doc)?;
    out.commit();
    log::info!("removed {} of {} edges", rep.removed_edges.len(), g.edge_count());
    Ok(Status::Clean)
}

fn parse_ratio(s: &str) -> std::result::Result<f64, String> {
    let r: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if r > 0.0 && r < 1.0 {
        Ok(r)
    } else {
        Err(format!("{r} is outside the open range (0, 1)"))
    }
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.trim().parse::<Variant>().map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
pub struct EvalLpArgs {
    #[command(flatten)]
    pub input: GraphInput,
    /// Fraction of edges held out as positives
    #[arg(long, default_value = "0.1", value_parser = parse_ratio)]
    pub ratio: f64,
    /// Comma-separated proximity variants to train
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "constant,linear,harmonic,log",
        value_parser = parse_variant
    )]
    pub variants: Vec<Variant>,
    /// Dataset name for the report; defaults to the graph file stem
    #[arg(long)]
    pub dataset: Option<String>,
    /// Report JSON
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Leave wall-clock times out of the report
    #[arg(long)]
    pub no_timings: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

pub fn eval_lp(a: &EvalLpArgs) -> Result<Status> {
    let cfg = a.pipeline.resolve()?;
    let g = a.input.load()?;
    let dataset = a.dataset.clone().unwrap_or_else(|| {
        a.input
            .graph
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let suite = SuiteConfig {
        dataset,
        ratio: a.ratio,
        pipeline: cfg.clone(),
    };
    let report = run_variant_suite(&g, &a.variants, &suite)?;
    let mut config = echo(&cfg);
    config.remove("variant");
    config.insert("ratio".into(), a.ratio.to_string());
    config.insert(
        "variants".into(),
        a.variants.iter().map(|v| v.name()).collect::<Vec<_>>().join(","),
    );
    let mut body = serde_json::to_value(&report)?;
    if a.no_timings {
        strip_timings(&mut body);
    }
    let mut out = Outputs::default();
    out.json(&a.out, &envelope(cfg.seed, config, body)?)?;
    out.commit();
    for r in &report.results {
        log::info!("{:>9}  auc {:.4}", r.variant.name(), r.auc);
    }
    if report.splits.shortfall > 0 {
        log::warn!(
            "only {} positives could be held out without disconnecting the graph ({} short)",
            report.splits.n_pos,
            report.splits.shortfall
        );
        return Ok(Status::Shortfall);
    }
    Ok(Status::Clean)
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Posts.xml of a Stack Exchange dump
    #[arg(long, value_name = "PATH")]
    pub posts: PathBuf,
    /// Votes.xml, for bounty amounts
    #[arg(long, value_name = "PATH")]
    pub votes: Option<PathBuf>,
    /// Question records as TSV (training records when `--cold` is set)
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Hold out each asker's latest resolved question and write it here
    #[arg(long, value_name = "PATH")]
    pub cold: Option<PathBuf>,
    /// Fewest answerers a held-out question needs
    #[arg(long, default_value_t = 2)]
    pub min_answerers: usize,
    /// Ingestion counters as JSON
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

pub fn cqa_ingest(a: &IngestArgs) -> Result<Status> {
    let (records, counters) = ingest_stackexchange(&a.posts, a.votes.as_deref())?;
    let mut out = Outputs::default();
    let (train, cold) = match &a.cold {
        Some(path) => {
            let (train, cold) = select_cold(&records, a.min_answerers);
            out.create(path, |p| write_cold(&cold, p))?;
            (train, cold.len())
        }
        None => (records, 0),
    };
    out.create(&a.out, |p| write_records(&train, p))?;
    if let Some(path) = &a.report {
        let config = BTreeMap::from([("min_answerers".to_string(), a.min_answerers.to_string())]);
        let body = merge(
            serde_json::to_value(&counters)?,
            json!({ "records": train.len(), "cold": cold }),
        );
        out.json(path, &envelope(0, config, body)?)?;
    }
    out.commit();
    log::info!("{} records, {} cold questions", train.len(), cold);
    Ok(Status::Clean)
}

/// Model options for the CQA commands: load one, or train on the records.
#[derive(Args, Debug)]
pub struct CqaModelArgs {
    /// Competition-graph model to use instead of training one
    #[arg(long, value_name = "PATH", conflicts_with = "save_model")]
    pub model: Option<PathBuf>,
    /// Write the model trained on `--records` here
    #[arg(long, value_name = "PATH")]
    pub save_model: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

impl CqaModelArgs {
    fn obtain(
        &self,
        cfg: &PipelineConfig,
        records: &[QARecord],
        out: &mut Outputs,
    ) -> Result<(EmbeddingModel<f64>, Option<StageReport>)> {
        if let Some(path) = &self.model {
            let model = load_model(path).with_context(|| format!("cannot load model {}", path.display()))?;
            return Ok((model, None));
        }
        let cg = build_competition_graph(records);
        if cg.skipped_self_answers > 0 {
            log::warn!("skipped {} self-answers", cg.skipped_self_answers);
        }
        let (model, rep) = run_pipeline::<f64>(&cg.graph, cfg)?;
        if let Some(path) = &self.save_model {
            out.create(path, |p| save_model(&model, p))?;
        }
        Ok((model, Some(rep)))
    }
}

fn load_records(path: &Path) -> Result<Vec<QARecord>> {
    read_records(path).with_context(|| format!("cannot read records {}", path.display()))
}

#[derive(Args, Debug)]
pub struct EvalQdeArgs {
    /// Question records TSV
    #[arg(long, value_name = "PATH")]
    pub records: PathBuf,
    /// Result JSON
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: CqaModelArgs,
}

pub fn cqa_eval_qde(a: &EvalQdeArgs) -> Result<Status> {
    let cfg = a.model.pipeline.resolve()?;
    let records = load_records(&a.records)?;
    let mut out = Outputs::default();
    let (model, stages) = a.model.obtain(&cfg, &records, &mut out)?;
    let (accuracy, questions) = difficulty_from_records(&model, &records)?;
    let body = json!({ "accuracy": accuracy, "questions": questions, "training": stages });
    out.json(&a.out, &envelope(cfg.seed, echo(&cfg), body)?)?;
    out.commit();
    log::info!("difficulty accuracy {accuracy:.4} over {questions} bounty questions");
    Ok(Status::Clean)
}

#[derive(Args, Debug)]
pub struct RouteArgs {
    /// Training question records TSV
    #[arg(long, value_name = "PATH")]
    pub records: PathBuf,
    /// Cold questions TSV, as written by `cqa ingest --cold`
    #[arg(long, value_name = "PATH")]
    pub cold: PathBuf,
    /// Question text vectors TSV, for askers without usable history
    #[arg(long, value_name = "PATH")]
    pub vectors: Option<PathBuf>,
    /// Most recent history questions considered per asker
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Text neighbours averaged when history is unusable
    #[arg(long, default_value_t = 5)]
    pub neighbors: usize,
    /// Result JSON
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: CqaModelArgs,
}

pub fn cqa_route(a: &RouteArgs) -> Result<Status> {
    if a.window == 0 {
        bail!("--window must be at least 1");
    }
    let cfg = a.model.pipeline.resolve()?;
    let records = load_records(&a.records)?;
    let cold = read_cold(&a.cold).with_context(|| format!("cannot read cold questions {}", a.cold.display()))?;
    let corpus = match &a.vectors {
        Some(p) => read_text_vectors(p).with_context(|| format!("cannot read vectors {}", p.display()))?,
        None => HashMap::new(),
    };
    let mut out = Outputs::default();
    let (model, stages) = a.model.obtain(&cfg, &records, &mut out)?;
    let outcome = evaluate_routing(&model, &records, &cold, &corpus, a.window, a.neighbors)?;
    let mut config = echo(&cfg);
    config.insert("window".into(), a.window.to_string());
    config.insert("neighbors".into(), a.neighbors.to_string());
    let body = merge(serde_json::to_value(&outcome)?, json!({ "training": stages }));
    out.json(&a.out, &envelope(cfg.seed, config, body)?)?;
    out.commit();
    let skipped = outcome.skipped_unknown_truth + outcome.skipped_unembeddable;
    match &outcome.metrics {
        Some(m) => log::info!(
            "{} questions: MRR {:.4}, P@3 {:.4}, accuracy {:.4}",
            m.questions,
            m.mrr,
            m.precision_at_3,
            m.accuracy
        ),
        None => log::warn!("no cold question could be routed"),
    }
    if skipped > 0 || outcome.metrics.is_none() {
        log::warn!(
            "skipped {} questions with an unknown best answerer, {} without a usable embedding",
            outcome.skipped_unknown_truth,
            outcome.skipped_unembeddable
        );
        return Ok(Status::Shortfall);
    }
    Ok(Status::Clean)
}
