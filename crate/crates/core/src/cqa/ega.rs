//! Inductive embedding of cold questions and answerer ranking.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{routing_metrics_from_ranks, RoutingMetrics};
use super::{question_label, user_label, ColdQuestion, QARecord};
use crate::error::{Error, Result};
use crate::factorization::EmbeddingModel;
use crate::graph::NodeId;
use crate::scalar::{sigmoid, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryEntry {
    pub question_id: String,
    pub creation_time: i64,
}

/// Resolved questions of `asker` created strictly before `before`, newest
/// first.
pub fn asker_history(records: &[QARecord], asker: &str, before: i64) -> Vec<HistoryEntry> {
    let mut h: Vec<HistoryEntry> = records
        .iter()
        .filter(|r| r.asker_id == asker && r.creation_time < before && r.best_answerer_id.is_some())
        .map(|r| HistoryEntry {
            question_id: r.question_id.clone(),
            creation_time: r.creation_time,
        })
        .collect();
    h.sort_by(|a, b| {
        b.creation_time
            .cmp(&a.creation_time)
            .then_with(|| a.question_id.cmp(&b.question_id))
    });
    h
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum EgaMethod {
    /// Copied from the hardest recent question of the asker.
    History { q_max: String, considered: usize },
    /// Mean of the most text-similar training questions.
    Neighbors { neighbors: Vec<String> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColdEmbedding<F> {
    pub source: Vec<F>,
    pub target: Vec<F>,
    pub method: EgaMethod,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Embeds a cold question from its asker's recent history, or from the
/// text-nearest training questions when the asker has none in the model.
///
/// Among the `window` most recent history questions, the hardest one is the
/// question `h` with `score(q, h) > score(h, q)` for the most other
/// candidates `q`; ties go to the latest question, then the smallest id.
pub fn ega_embed<F: Scalar>(
    model: &EmbeddingModel<F>,
    cold: &ColdQuestion,
    history: &[HistoryEntry],
    window: usize,
    fallback_neighbors: usize,
    corpus: &HashMap<String, Vec<f64>>,
) -> Result<ColdEmbedding<F>> {
    if window == 0 {
        return Err(Error::param("window", "must be at least 1"));
    }
    let mut recent: Vec<(&HistoryEntry, NodeId)> = history
        .iter()
        .filter(|h| h.question_id != cold.question_id)
        .filter_map(|h| model.node(&question_label(&h.question_id)).map(|n| (h, n)))
        .collect();
    recent.sort_by(|a, b| {
        b.0.creation_time
            .cmp(&a.0.creation_time)
            .then_with(|| a.0.question_id.cmp(&b.0.question_id))
    });
    recent.truncate(window);

    if !recent.is_empty() {
        let mut best: Option<(usize, &HistoryEntry, NodeId)> = None;
        for &(h, hn) in &recent {
            let mut wins = 0;
            for &(_, qn) in &recent {
                if qn != hn && model.score(qn, hn)? > model.score(hn, qn)? {
                    wins += 1;
                }
            }
            let better = match best {
                None => true,
                Some((bw, bh, _)) => wins
                    .cmp(&bw)
                    .then(h.creation_time.cmp(&bh.creation_time))
                    .then(bh.question_id.cmp(&h.question_id))
                    == Ordering::Greater,
            };
            if better {
                best = Some((wins, h, hn));
            }
        }
        let (_, h, hn) = best.expect("non-empty history");
        return Ok(ColdEmbedding {
            source: model.source_vector(hn)?,
            target: model.target_vector(hn)?,
            method: EgaMethod::History {
                q_max: h.question_id.clone(),
                considered: recent.len(),
            },
        });
    }

    let text = cold
        .text_vector
        .as_ref()
        .or_else(|| corpus.get(&cold.question_id))
        .ok_or_else(|| Error::CannotEmbed(cold.question_id.clone()))?;
    let mut sims: Vec<(f64, &str, NodeId)> = corpus
        .iter()
        .filter(|(id, _)| **id != cold.question_id)
        .filter_map(|(id, v)| {
            model
                .node(&question_label(id))
                .map(|n| (cosine(text, v), id.as_str(), n))
        })
        .collect();
    sims.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    sims.truncate(fallback_neighbors.max(1));
    if sims.is_empty() {
        return Err(Error::CannotEmbed(cold.question_id.clone()));
    }
    let k = model.k();
    let mut source = vec![F::zero(); k];
    let mut target = vec![F::zero(); k];
    for &(_, _, n) in &sims {
        for (acc, x) in source.iter_mut().zip(model.source_vector(n)?) {
            *acc += x;
        }
        for (acc, x) in target.iter_mut().zip(model.target_vector(n)?) {
            *acc += x;
        }
    }
    let count = F::of(sims.len() as f64);
    source.iter_mut().chain(target.iter_mut()).for_each(|x| *x /= count);
    Ok(ColdEmbedding {
        source,
        target,
        method: EgaMethod::Neighbors {
            neighbors: sims.iter().map(|s| s.1.to_string()).collect(),
        },
    })
}

/// What to do with a candidate that has no node in the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnknownCandidate {
    Reject,
    /// Score as a zero target vector, i.e. `sigmoid(0)`.
    Neutral,
}

/// Candidates ranked by `sigmoid(<s*, t_u>)`, descending; equal scores are
/// ordered by user id.
pub fn route<F: Scalar>(
    model: &EmbeddingModel<F>,
    candidates: &[String],
    source: &[F],
    unknown: UnknownCandidate,
) -> Result<Vec<(String, F)>> {
    if candidates.is_empty() {
        return Err(Error::Empty("no candidate answerers"));
    }
    if source.len() != model.k() {
        return Err(Error::param("source", format!("expected {} components", model.k())));
    }
    let mut seen = HashSet::new();
    let mut scored = Vec::with_capacity(candidates.len());
    for c in candidates {
        if !seen.insert(c) {
            continue;
        }
        let dot = match model.node(&user_label(c)) {
            Some(n) => model.dot_with_target(source, n)?,
            None if unknown == UnknownCandidate::Neutral => F::zero(),
            None => return Err(Error::UnknownNode(user_label(c))),
        };
        scored.push((c.clone(), sigmoid(dot)));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    Ok(scored)
}

#[derive(Clone, Debug, Serialize)]
pub struct RoutedQuestion {
    pub question_id: String,
    pub true_best_answerer: String,
    pub rank: usize,
    pub embedding: EgaMethod,
    pub ranking: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RoutingOutcome {
    pub metrics: Option<RoutingMetrics>,
    pub routed: Vec<RoutedQuestion>,
    /// The accepted answerer never appears in the training graph.
    pub skipped_unknown_truth: usize,
    pub skipped_unembeddable: usize,
}

/// EGA + routing for every cold question. Candidates missing from the model
/// score neutrally; questions whose true answerer is missing are skipped.
pub fn evaluate_routing<F: Scalar>(
    model: &EmbeddingModel<F>,
    train: &[QARecord],
    cold: &[ColdQuestion],
    corpus: &HashMap<String, Vec<f64>>,
    window: usize,
    fallback_neighbors: usize,
) -> Result<RoutingOutcome> {
    if window == 0 {
        return Err(Error::param("window", "must be at least 1"));
    }
    enum Done {
        Routed(RoutedQuestion),
        UnknownTruth,
        Unembeddable,
    }
    let results = cold
        .par_iter()
        .map(|c| -> Result<Done> {
            if model.node(&user_label(&c.true_best_answerer)).is_none() {
                return Ok(Done::UnknownTruth);
            }
            let history = asker_history(train, &c.asker_id, c.creation_time);
            let emb = match ega_embed(model, c, &history, window, fallback_neighbors, corpus) {
                Ok(e) => e,
                Err(Error::CannotEmbed(_)) => return Ok(Done::Unembeddable),
                Err(e) => return Err(e),
            };
            let ranking = route(model, &c.candidate_answerers, &emb.source, UnknownCandidate::Neutral)?;
            let rank = ranking
                .iter()
                .position(|(u, _)| *u == c.true_best_answerer)
                .expect("truth is a candidate")
                + 1;
            Ok(Done::Routed(RoutedQuestion {
                question_id: c.question_id.clone(),
                true_best_answerer: c.true_best_answerer.clone(),
                rank,
                embedding: emb.method,
                ranking: ranking.into_iter().map(|(u, s)| (u, s.to_f64_lossy())).collect(),
            }))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = RoutingOutcome {
        metrics: None,
        routed: Vec::new(),
        skipped_unknown_truth: 0,
        skipped_unembeddable: 0,
    };
    for r in results {
        match r {
            Done::Routed(q) => out.routed.push(q),
            Done::UnknownTruth => out.skipped_unknown_truth += 1,
            Done::Unembeddable => out.skipped_unembeddable += 1,
        }
    }
    let ranks: Vec<usize> = out.routed.iter().map(|q| q.rank).collect();
    out.metrics = routing_metrics_from_ranks(&ranks).ok();
    Ok(out)
}
