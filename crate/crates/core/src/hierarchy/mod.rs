//! Node hierarchy scores: TrueSkill and agony rankers for cycle breaking, and
//! exact integer levels on a DAG.

mod agony;
mod levels;
mod trueskill;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, NodeId};
use crate::scalar::format_sig;

pub use agony::{agony_baseline, rank_agony, total_agony, AgonyConfig, AgonyMode};
pub use levels::assign_levels;
pub use trueskill::{rank_trueskill, TrueSkillParams, TrueSkillScore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingKind {
    TrueSkill,
    Agony,
    Level,
}

impl RankingKind {
    pub fn name(self) -> &'static str {
        match self {
            RankingKind::TrueSkill => "trueskill",
            RankingKind::Agony => "agony",
            RankingKind::Level => "level",
        }
    }

    /// Integer-valued rankings.
    pub fn is_integer(self) -> bool {
        !matches!(self, RankingKind::TrueSkill)
    }
}

impl std::str::FromStr for RankingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trueskill" => Ok(RankingKind::TrueSkill),
            "agony" => Ok(RankingKind::Agony),
            "level" => Ok(RankingKind::Level),
            other => Err(Error::param("ranker", format!("unknown ranker `{other}`"))),
        }
    }
}

/// Per-node hierarchy score. Lower scores sit lower in the hierarchy; edges
/// are expected to point upwards.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyRanking {
    pub kind: RankingKind,
    pub scores: Vec<f64>,
}

impl HierarchyRanking {
    pub fn new(kind: RankingKind, scores: Vec<f64>) -> Self {
        HierarchyRanking { kind, scores }
    }

    pub fn from_integers(kind: RankingKind, scores: &[i64]) -> Self {
        HierarchyRanking::new(kind, scores.iter().map(|&s| s as f64).collect())
    }

    #[inline]
    pub fn score(&self, n: NodeId) -> f64 {
        self.scores[n.index()]
    }

    /// Integer view, for `agony` and `level` rankings.
    pub fn as_integers(&self) -> Vec<i64> {
        self.scores.iter().map(|&s| s as i64).collect()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Debug dump: `node<TAB>score` per line.
    pub fn write_tsv(&self, g: &DirectedGraph, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for n in g.nodes() {
            writeln!(w, "{}\t{}", g.label(n), format_sig(self.score(n), 9))
                .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
