//! Community question answering: competition graph, question difficulty and
//! expert routing for cold questions.

mod ega;
mod ingest;
mod metrics;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, GraphBuilder, Insert};

pub use ega::{asker_history, ega_embed, evaluate_routing, route, ColdEmbedding, EgaMethod, HistoryEntry, RoutingOutcome, UnknownCandidate};
pub use ingest::{ingest_stackexchange, read_posts, read_votes, select_cold, IngestReport};
pub use metrics::{
    difficulty_from_records, pairwise_accuracy_from, pairwise_difficulty_accuracy, routing_metrics,
    routing_metrics_from_ranks, RoutingMetrics,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QARecord {
    pub question_id: String,
    pub asker_id: String,
    pub best_answerer_id: Option<String>,
    pub answerer_ids: Vec<String>,
    /// Milliseconds since the Unix epoch.
    pub creation_time: i64,
    /// Summed bounty; 0 when none was awarded.
    pub bounty: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColdQuestion {
    pub question_id: String,
    pub asker_id: String,
    pub creation_time: i64,
    pub text_vector: Option<Vec<f64>>,
    pub candidate_answerers: Vec<String>,
    pub true_best_answerer: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    User,
    Question,
}

pub fn user_label(id: &str) -> String {
    format!("u:{id}")
}

pub fn question_label(id: &str) -> String {
    format!("q:{id}")
}

#[derive(Clone, Debug)]
pub struct CompetitionGraph {
    pub graph: DirectedGraph,
    pub node_kind: Vec<NodeKind>,
    /// Records whose asker accepted their own answer.
    pub skipped_self_answers: usize,
}

/// `asker -> question -> best answerer` for every resolved record.
pub fn build_competition_graph(records: &[QARecord]) -> CompetitionGraph {
    let mut b = GraphBuilder::new();
    let mut skipped = 0;
    for r in records {
        let Some(best) = &r.best_answerer_id else {
            continue;
        };
        if *best == r.asker_id {
            log::warn!("question {}: asker is the best answerer, skipped", r.question_id);
            skipped += 1;
            continue;
        }
        let q = question_label(&r.question_id);
        let added = b.add_edge(&user_label(&r.asker_id), &q);
        debug_assert_eq!(added, Insert::Added, "question ids are unique");
        b.add_edge(&q, &user_label(best));
    }
    let graph = b.build();
    let node_kind = graph
        .labels()
        .iter()
        .map(|l| if l.starts_with("q:") { NodeKind::Question } else { NodeKind::User })
        .collect();
    CompetitionGraph {
        graph,
        node_kind,
        skipped_self_answers: skipped,
    }
}

fn join_or_dash(items: &[String]) -> String {
    if items.is_empty() {
        "-".to_string()
    } else {
        items.join(",")
    }
}

fn split_list(field: &str) -> Vec<String> {
    if field == "-" || field.is_empty() {
        Vec::new()
    } else {
        field.split(',').map(str::to_string).collect()
    }
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| malformed(path, line, format!("bad {name} `{s}`")))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn data_lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(|e| Error::io(path, e))))
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty() || s.starts_with('#'))))
}

/// `question_id asker_id best_answerer_id|- bounty creation_time answerers`,
/// tab-separated, answerers comma-separated.
pub fn write_records(records: &[QARecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.question_id,
            r.asker_id,
            r.best_answerer_id.as_deref().unwrap_or("-"),
            r.bounty,
            r.creation_time,
            join_or_dash(&r.answerer_ids)
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<QARecord>> {
    let mut out = Vec::new();
    for (n, line) in data_lines(path)? {
        let line = line?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(malformed(path, n, format!("expected 6 fields, found {}", f.len())));
        }
        out.push(QARecord {
            question_id: f[0].to_string(),
            asker_id: f[1].to_string(),
            best_answerer_id: (f[2] != "-").then(|| f[2].to_string()),
            bounty: parse_field(path, n, "bounty", f[3])?,
            creation_time: parse_field(path, n, "creation_time", f[4])?,
            answerer_ids: split_list(f[5]),
        });
    }
    Ok(out)
}

/// `question_id asker_id true_best creation_time candidates`, tab-separated.
/// Text vectors live in a separate file.
pub fn write_cold(cold: &[ColdQuestion], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for c in cold {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            c.question_id,
            c.asker_id,
            c.true_best_answerer,
            c.creation_time,
            join_or_dash(&c.candidate_answerers)
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_cold(path: &Path) -> Result<Vec<ColdQuestion>> {
    let mut out = Vec::new();
    for (n, line) in data_lines(path)? {
        let line = line?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(malformed(path, n, format!("expected 5 fields, found {}", f.len())));
        }
        let candidates = split_list(f[4]);
        if !candidates.iter().any(|c| c == f[2]) {
            return Err(malformed(path, n, "true best answerer is not a candidate"));
        }
        out.push(ColdQuestion {
            question_id: f[0].to_string(),
            asker_id: f[1].to_string(),
            true_best_answerer: f[2].to_string(),
            creation_time: parse_field(path, n, "creation_time", f[3])?,
            text_vector: None,
            candidate_answerers: candidates,
        });
    }
    Ok(out)
}

/// `question_id v1 ... vd`, tab-separated. All vectors must share one
/// dimension.
pub fn read_text_vectors(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let mut out = HashMap::new();
    let mut dim = None;
    for (n, line) in data_lines(path)? {
        let line = line?;
        let mut f = line.split('\t');
        let id = f.next().unwrap_or_default().to_string();
        let v = f
            .map(|x| parse_field::<f64>(path, n, "vector component", x.trim()))
            .collect::<Result<Vec<_>>>()?;
        if v.is_empty() || *dim.get_or_insert(v.len()) != v.len() {
            return Err(malformed(path, n, "vector dimension mismatch"));
        }
        out.insert(id, v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(q: &str, asker: &str, best: Option<&str>, t: i64) -> QARecord {
        QARecord {
            question_id: q.into(),
            asker_id: asker.into(),
            best_answerer_id: best.map(Into::into),
            answerer_ids: best.into_iter().map(Into::into).collect(),
            creation_time: t,
            bounty: 0,
        }
    }

    #[test]
    fn single_record_graph() {
        let cg = build_competition_graph(&[rec("q1", "u1", Some("u2"), 0)]);
        assert_eq!(cg.graph.node_count(), 3);
        let u1 = cg.graph.node("u:u1").unwrap();
        let q1 = cg.graph.node("q:q1").unwrap();
        let u2 = cg.graph.node("u:u2").unwrap();
        let mut edges = cg.graph.edges().to_vec();
        edges.sort();
        let mut want = vec![(u1, q1), (q1, u2)];
        want.sort();
        assert_eq!(edges, want);
        assert_eq!(cg.node_kind[q1.index()], NodeKind::Question);
        assert_eq!(cg.node_kind[u1.index()], NodeKind::User);
    }

    #[test]
    fn unresolved_adds_nothing_and_shared_asker() {
        let cg = build_competition_graph(&[rec("q1", "u1", None, 0)]);
        assert_eq!(cg.graph.edge_count(), 0);
        let cg = build_competition_graph(&[
            rec("q1", "u1", Some("u2"), 0),
            rec("q2", "u1", Some("u3"), 1),
            rec("q3", "u4", Some("u4"), 2),
        ]);
        let u1 = cg.graph.node("u:u1").unwrap();
        assert_eq!(cg.graph.out_neighbors(u1).len(), 2);
        assert_eq!(cg.skipped_self_answers, 1);
        for (i, k) in cg.node_kind.iter().enumerate() {
            if *k == NodeKind::Question {
                let q = crate::graph::NodeId::from_index(i);
                assert_eq!(cg.graph.in_neighbors(q).len(), 1);
                assert_eq!(cg.graph.out_neighbors(q).len(), 1);
            }
        }
    }

    #[test]
    fn tsv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = rec("q1", "u1", Some("u2"), 1000);
        a.answerer_ids = vec!["u2".into(), "u3".into()];
        a.bounty = 150;
        let b = rec("q2", "u1", None, 2000);
        let p = dir.path().join("records.tsv");
        write_records(&[a.clone(), b.clone()], &p).unwrap();
        assert_eq!(read_records(&p).unwrap(), vec![a, b]);

        let cold = ColdQuestion {
            question_id: "q9".into(),
            asker_id: "u1".into(),
            creation_time: 5,
            text_vector: None,
            candidate_answerers: vec!["u2".into(), "u5".into()],
            true_best_answerer: "u5".into(),
        };
        let p = dir.path().join("cold.tsv");
        write_cold(std::slice::from_ref(&cold), &p).unwrap();
        assert_eq!(read_cold(&p).unwrap(), vec![cold]);

        let p = dir.path().join("vec.tsv");
        std::fs::write(&p, "q1\t0.5\t1\nq2\t1\t0\n").unwrap();
        let v = read_text_vectors(&p).unwrap();
        assert_eq!(v["q1"], vec![0.5, 1.0]);
        std::fs::write(&p, "q1\t0.5\t1\nq2\t1\n").unwrap();
        assert!(read_text_vectors(&p).is_err());
    }
}
