use crate::error::{Error, Result};
use crate::graph::DirectedGraph;

use super::{HierarchyRanking, RankingKind};

/// Peels zero in-degree nodes round by round: round `o` (starting at 1)
/// assigns level `o` to every node whose in-degree has dropped to zero.
/// Each node therefore ends at `1 + longest path from a source`.
pub fn assign_levels(dag: &DirectedGraph) -> Result<HierarchyRanking> {
    let n = dag.node_count();
    let mut indeg: Vec<usize> = dag.nodes().map(|v| dag.in_neighbors(v).len()).collect();
    let mut level = vec![0i64; n];
    let mut frontier: Vec<_> = dag.nodes().filter(|v| indeg[v.index()] == 0).collect();
    let mut assigned = 0;
    let mut o = 1i64;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &v in &frontier {
            level[v.index()] = o;
            assigned += 1;
            for &w in dag.out_neighbors(v) {
                indeg[w.index()] -= 1;
                if indeg[w.index()] == 0 {
                    next.push(w);
                }
            }
        }
        frontier = next;
        o += 1;
    }
    if assigned != n {
        return Err(Error::Cyclic("level assignment"));
    }
    Ok(HierarchyRanking::from_integers(RankingKind::Level, &level))
}
