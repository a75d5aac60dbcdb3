use serde::Serialize;

use super::{question_label, QARecord};
use crate::error::{Error, Result};
use crate::factorization::EmbeddingModel;
use crate::graph::NodeId;
use crate::scalar::Scalar;

/// Fraction of unequal-bounty pairs whose harder question is predicted
/// correctly. `score(a, b)` is the model score from question `a` to `b`; `b`
/// is predicted harder when `score(a, b) > score(b, a)`. Ties count half.
pub fn pairwise_accuracy_from<F: PartialOrd>(bounty: &[u64], score: impl Fn(usize, usize) -> F) -> Result<f64> {
    let mut twice_correct: u64 = 0;
    let mut pairs: u64 = 0;
    for a in 0..bounty.len() {
        for b in a + 1..bounty.len() {
            if bounty[a] == bounty[b] {
                continue;
            }
            let (easy, hard) = if bounty[a] < bounty[b] { (a, b) } else { (b, a) };
            let (up, down) = (score(easy, hard), score(hard, easy));
            pairs += 1;
            if up > down {
                twice_correct += 2;
            } else if up == down {
                twice_correct += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(Error::Empty("no question pair with different bounties"));
    }
    Ok(twice_correct as f64 / (2 * pairs) as f64)
}

pub fn pairwise_difficulty_accuracy<F: Scalar>(model: &EmbeddingModel<F>, questions: &[(NodeId, u64)]) -> Result<f64> {
    for &(q, _) in questions {
        model.score(q, q)?;
    }
    let bounty: Vec<u64> = questions.iter().map(|q| q.1).collect();
    pairwise_accuracy_from(&bounty, |a, b| {
        model
            .score(questions[a].0, questions[b].0)
            .expect("checked above")
    })
}

/// Pairwise accuracy over the bounty questions of `records` that the model
/// knows. Returns the accuracy and the number of questions used.
pub fn difficulty_from_records<F: Scalar>(model: &EmbeddingModel<F>, records: &[QARecord]) -> Result<(f64, usize)> {
    let qs: Vec<(NodeId, u64)> = records
        .iter()
        .filter(|r| r.bounty > 0)
        .filter_map(|r| model.node(&question_label(&r.question_id)).map(|n| (n, r.bounty)))
        .collect();
    Ok((pairwise_difficulty_accuracy(model, &qs)?, qs.len()))
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RoutingMetrics {
    pub mrr: f64,
    pub precision_at_3: f64,
    pub accuracy: f64,
    pub questions: usize,
}

/// Metrics from the 1-based rank of the true answerer per question.
pub fn routing_metrics_from_ranks(ranks: &[usize]) -> Result<RoutingMetrics> {
    if ranks.is_empty() {
        return Err(Error::Empty("no routed questions"));
    }
    if ranks.contains(&0) {
        return Err(Error::param("ranks", "ranks are 1-based"));
    }
    let n = ranks.len() as f64;
    let rr: f64 = ranks.iter().map(|&r| 1.0 / r as f64).sum();
    let top3 = ranks.iter().filter(|&&r| r <= 3).count();
    let top1 = ranks.iter().filter(|&&r| r == 1).count();
    Ok(RoutingMetrics {
        mrr: rr / n,
        precision_at_3: top3 as f64 / n,
        accuracy: top1 as f64 / n,
        questions: ranks.len(),
    })
}

pub fn routing_metrics(rankings: &[Vec<String>], truths: &[String]) -> Result<RoutingMetrics> {
    if rankings.len() != truths.len() {
        return Err(Error::param("truths", "one truth per ranking is required"));
    }
    let ranks = rankings
        .iter()
        .zip(truths)
        .map(|(r, t)| {
            r.iter()
                .position(|u| u == t)
                .map(|p| p + 1)
                .ok_or_else(|| Error::UnknownNode(t.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    routing_metrics_from_ranks(&ranks)
}
