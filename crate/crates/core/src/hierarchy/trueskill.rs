//! Two-player TrueSkill over edges: each edge `(u, v)` is a match won by `v`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

use crate::graph::DirectedGraph;

use super::{HierarchyRanking, RankingKind};

/// Which statistic of the skill posterior becomes the node score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TrueSkillScore {
    #[default]
    Mean,
    /// `mu - 3 sigma`
    Conservative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrueSkillParams {
    pub mu0: f64,
    pub sigma0: f64,
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
    pub score: TrueSkillScore,
}

impl Default for TrueSkillParams {
    fn default() -> Self {
        let sigma0 = 25.0 / 3.0;
        TrueSkillParams {
            mu0: 25.0,
            sigma0,
            beta: sigma0 / 2.0,
            epochs: 5,
            seed: 0,
            score: TrueSkillScore::Mean,
        }
    }
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;

fn norm_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn norm_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / SQRT_2)
}

/// Additive and multiplicative correction factors for a win with normalised
/// performance margin `t`.
fn v_w(t: f64) -> (f64, f64) {
    let cdf = norm_cdf(t);
    if cdf < 1e-300 {
        // deep upset; limits of v and w as t -> -inf
        return (-t, 1.0);
    }
    let v = norm_pdf(t) / cdf;
    (v, v * (v + t))
}

pub fn rank_trueskill(g: &DirectedGraph, params: &TrueSkillParams) -> HierarchyRanking {
    assert!(params.sigma0 > 0.0 && params.beta > 0.0, "sigma0 and beta must be positive");
    assert!(params.epochs >= 1, "epochs must be >= 1");
    let n = g.node_count();
    let mut mu = vec![params.mu0; n];
    let mut var = vec![params.sigma0 * params.sigma0; n];
    let beta2 = params.beta * params.beta;
    let mut order: Vec<usize> = (0..g.edge_count()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &e in &order {
            let (loser, winner) = g.edges()[e];
            let (l, w) = (loser.index(), winner.index());
            let c2 = 2.0 * beta2 + var[l] + var[w];
            let c = c2.sqrt();
            let t = (mu[w] - mu[l]) / c;
            let (v, wf) = v_w(t);
            mu[w] += var[w] / c * v;
            mu[l] -= var[l] / c * v;
            var[w] *= (1.0 - var[w] / c2 * wf).max(f64::EPSILON);
            var[l] *= (1.0 - var[l] / c2 * wf).max(f64::EPSILON);
        }
    }

    let scores = match params.score {
        TrueSkillScore::Mean => mu,
        TrueSkillScore::Conservative => mu
            .iter()
            .zip(&var)
            .map(|(m, v)| m - 3.0 * v.sqrt())
            .collect(),
    };
    HierarchyRanking::new(RankingKind::TrueSkill, scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_match_winner_gains() {
        let g = DirectedGraph::from_labeled_edges(&[("A", "B")]);
        let r = rank_trueskill(&g, &TrueSkillParams::default());
        assert!(r.scores[1] > r.scores[0]);
        assert!(r.scores.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn one_update_matches_hand_computation() {
        // mu = 25, var = (25/3)^2, beta = 25/6, both players fresh
        let p = TrueSkillParams {
            epochs: 1,
            ..Default::default()
        };
        let g = DirectedGraph::from_labeled_edges(&[("A", "B")]);
        let r = rank_trueskill(&g, &p);
        let s2 = (25.0f64 / 3.0).powi(2);
        let c = (2.0 * (25.0f64 / 6.0).powi(2) + 2.0 * s2).sqrt();
        // t = 0: v = pdf(0) / 0.5
        let v = 2.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.scores[1] - (25.0 + s2 / c * v)).abs() < 1e-9);
        assert!((r.scores[0] - (25.0 - s2 / c * v)).abs() < 1e-9);
    }

    #[test]
    fn chain_is_ordered() {
        let g = DirectedGraph::from_labeled_edges(&[("A", "B"), ("B", "C")]);
        let p = TrueSkillParams {
            epochs: 10,
            ..Default::default()
        };
        let r = rank_trueskill(&g, &p);
        assert!(r.scores[0] < r.scores[1] && r.scores[1] < r.scores[2]);
    }

    #[test]
    fn two_cycle_stays_close() {
        let g = DirectedGraph::from_labeled_edges(&[("A", "B"), ("B", "A")]);
        for seed in 0..50 {
            let p = TrueSkillParams {
                seed,
                ..Default::default()
            };
            let r = rank_trueskill(&g, &p);
            assert!((r.scores[0] - r.scores[1]).abs() < 0.5 * p.sigma0, "seed {seed}");
        }
    }

    #[test]
    fn extreme_upset_is_finite() {
        let (v, w) = v_w(-60.0);
        assert!(v.is_finite() && w.is_finite());
        let (v, w) = v_w(60.0);
        assert!((0.0..1e-300).contains(&v) && w >= 0.0);
    }
}
