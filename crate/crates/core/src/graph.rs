//! Directed graph storage, node interning, edge-list I/O and strongly
//! connected components.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Dense node index assigned at intern time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("node index exceeds u32"))
    }
}

pub type Edge = (NodeId, NodeId);

/// Outcome of inserting one edge through a [`GraphBuilder`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Insert {
    Added,
    Duplicate,
    SelfLoop,
}

/// Counters collected while building a graph from raw input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct LoadReport {
    pub duplicates: usize,
    pub self_loops: usize,
}

/// Incremental builder: interns labels in first-appearance order, drops
/// duplicate edges and self-loops.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    labels: Vec<String>,
    index: HashMap<String, NodeId>,
    edges: Vec<Edge>,
    seen: HashSet<Edge>,
    report: LoadReport,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, label: &str) -> NodeId {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = NodeId::from_index(self.labels.len());
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    pub fn add_edge(&mut self, src: &str, dst: &str) -> Insert {
        let s = self.intern(src);
        let d = self.intern(dst);
        self.add_edge_ids(s, d)
    }

    pub fn add_edge_ids(&mut self, s: NodeId, d: NodeId) -> Insert {
        if s == d {
            self.report.self_loops += 1;
            return Insert::SelfLoop;
        }
        if !self.seen.insert((s, d)) {
            self.report.duplicates += 1;
            return Insert::Duplicate;
        }
        self.edges.push((s, d));
        Insert::Added
    }

    pub fn report(&self) -> LoadReport {
        self.report
    }

    pub fn build(self) -> DirectedGraph {
        DirectedGraph::from_parts(self.labels, self.edges)
    }
}

/// Simple directed graph (no self-loops, no parallel edges) with labelled
/// nodes. Immutable once built.
#[derive(Clone, Debug)]
pub struct DirectedGraph {
    labels: Vec<String>,
    index: HashMap<String, NodeId>,
    edges: Vec<Edge>,
    edge_set: HashSet<Edge>,
    out_adj: Vec<Vec<NodeId>>,
    in_adj: Vec<Vec<NodeId>>,
}

impl DirectedGraph {
    /// Builds a graph from a label table and edge list. Edges must be
    /// distinct, loop-free and refer to valid indices.
    pub fn from_parts(labels: Vec<String>, edges: Vec<Edge>) -> Self {
        let n = labels.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        let mut edge_set = HashSet::with_capacity(edges.len());
        for &(s, d) in &edges {
            assert!(s != d, "self-loop {s:?}");
            assert!(edge_set.insert((s, d)), "duplicate edge {s:?}->{d:?}");
            out_adj[s.index()].push(d);
            in_adj[d.index()].push(s);
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_unstable();
        }
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), NodeId::from_index(i)))
            .collect();
        DirectedGraph {
            labels,
            index,
            edges,
            edge_set,
            out_adj,
            in_adj,
        }
    }

    /// Convenience constructor from label pairs.
    pub fn from_labeled_edges<S: AsRef<str>>(edges: &[(S, S)]) -> Self {
        let mut b = GraphBuilder::new();
        for (s, d) in edges {
            b.add_edge(s.as_ref(), d.as_ref());
        }
        b.build()
    }

    /// Anonymous graph whose labels are the decimal node indices.
    pub fn from_index_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            b.intern(&i.to_string());
        }
        for (s, d) in edges {
            b.add_edge_ids(NodeId::from_index(s), NodeId::from_index(d));
        }
        b.build()
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.labels.len()).map(NodeId::from_index)
    }

    /// Edges in insertion order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn has_edge(&self, s: NodeId, d: NodeId) -> bool {
        self.edge_set.contains(&(s, d))
    }

    pub fn out_neighbors(&self, n: NodeId) -> &[NodeId] {
        &self.out_adj[n.index()]
    }

    pub fn in_neighbors(&self, n: NodeId) -> &[NodeId] {
        &self.in_adj[n.index()]
    }

    pub fn label(&self, n: NodeId) -> &str {
        &self.labels[n.index()]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn node(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    /// Same node set, with the given edges dropped.
    pub fn without_edges(&self, removed: &HashSet<Edge>) -> DirectedGraph {
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|e| !removed.contains(e))
            .collect();
        DirectedGraph::from_parts(self.labels.clone(), edges)
    }

    /// Subgraph induced by `nodes`. Node `i` of the result is `nodes[i]`.
    pub fn induced(&self, nodes: &[NodeId]) -> DirectedGraph {
        let mut local = HashMap::with_capacity(nodes.len());
        for (i, &n) in nodes.iter().enumerate() {
            local.insert(n, NodeId::from_index(i));
        }
        let labels = nodes.iter().map(|&n| self.label(n).to_string()).collect();
        let mut edges = Vec::new();
        for &n in nodes {
            let ln = local[&n];
            for &m in self.out_neighbors(n) {
                if let Some(&lm) = local.get(&m) {
                    edges.push((ln, lm));
                }
            }
        }
        DirectedGraph::from_parts(labels, edges)
    }

    /// Topological order (Kahn, smallest id first), or `None` if cyclic.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let n = self.node_count();
        let mut indeg: Vec<usize> = self.in_adj.iter().map(Vec::len).collect();
        let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<NodeId>> = self
            .nodes()
            .filter(|v| indeg[v.index()] == 0)
            .map(std::cmp::Reverse)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(v)) = heap.pop() {
            order.push(v);
            for &w in self.out_neighbors(v) {
                indeg[w.index()] -= 1;
                if indeg[w.index()] == 0 {
                    heap.push(std::cmp::Reverse(w));
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Weakly connected component id per node, numbered by smallest member.
    pub fn weak_components(&self) -> (Vec<u32>, usize) {
        let n = self.node_count();
        let mut comp = vec![u32::MAX; n];
        let mut count = 0u32;
        let mut stack = Vec::new();
        for start in 0..n {
            if comp[start] != u32::MAX {
                continue;
            }
            comp[start] = count;
            stack.push(start);
            while let Some(v) = stack.pop() {
                let v = NodeId::from_index(v);
                for &w in self.out_neighbors(v).iter().chain(self.in_neighbors(v)) {
                    if comp[w.index()] == u32::MAX {
                        comp[w.index()] = count;
                        stack.push(w.index());
                    }
                }
            }
            count += 1;
        }
        (comp, count as usize)
    }
}

/// Accepted edge-list dialects.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EdgeListFormat {
    /// Tokens separated by any run of spaces or tabs.
    #[default]
    Whitespace,
    /// Tokens separated by single tab characters.
    Tsv,
}

/// Reads an edge list. Lines starting with `#` and blank lines are skipped;
/// tokens after the second one are ignored.
pub fn load_edge_list(path: &Path, format: EdgeListFormat) -> Result<(DirectedGraph, LoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_edge_list(BufReader::new(file), path, format)
}

pub fn read_edge_list<R: BufRead>(
    reader: R,
    path: &Path,
    format: EdgeListFormat,
) -> Result<(DirectedGraph, LoadReport)> {
    let mut builder = GraphBuilder::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let mut tokens: Box<dyn Iterator<Item = &str>> = match format {
            EdgeListFormat::Whitespace => Box::new(trimmed.split_whitespace()),
            EdgeListFormat::Tsv => Box::new(trimmed.split('\t')),
        };
        match (tokens.next(), tokens.next()) {
            (Some(s), Some(d)) if !s.is_empty() && !d.is_empty() => {
                builder.add_edge(s, d);
            }
            _ => {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected `src dst`, got {trimmed:?}"),
                })
            }
        }
    }
    let report = builder.report();
    if report.duplicates > 0 || report.self_loops > 0 {
        log::warn!(
            "{}: dropped {} duplicate edge(s) and {} self-loop(s)",
            path.display(),
            report.duplicates,
            report.self_loops
        );
    }
    Ok((builder.build(), report))
}

/// Writes `src<TAB>dst` lines using the graph's labels.
pub fn write_edge_list(g: &DirectedGraph, edges: &[Edge], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for &(s, d) in edges {
        writeln!(w, "{}\t{}", g.label(s), g.label(d)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Strongly connected components of a graph.
#[derive(Clone, Debug)]
pub struct SccDecomposition {
    /// Component index per node.
    pub component_id: Vec<u32>,
    /// Members of each component, ascending. Components are numbered in
    /// reverse topological order of the condensation (sinks first).
    pub components: Vec<Vec<NodeId>>,
}

impl SccDecomposition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Components with at least two nodes (self-loops never survive loading).
    pub fn nontrivial(&self) -> impl Iterator<Item = &Vec<NodeId>> {
        self.components.iter().filter(|c| c.len() >= 2)
    }

    pub fn same(&self, a: NodeId, b: NodeId) -> bool {
        self.component_id[a.index()] == self.component_id[b.index()]
    }

    /// Condensation DAG: one node per component, deduplicated edges between
    /// distinct components.
    pub fn condensation(&self, g: &DirectedGraph) -> DirectedGraph {
        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        for &(s, d) in g.edges() {
            let cs = self.component_id[s.index()];
            let cd = self.component_id[d.index()];
            if cs != cd && seen.insert((cs, cd)) {
                edges.push((NodeId(cs), NodeId(cd)));
            }
        }
        let labels = (0..self.len()).map(|c| c.to_string()).collect();
        DirectedGraph::from_parts(labels, edges)
    }
}

/// Iterative Tarjan, roots visited in ascending node id order.
pub fn strongly_connected_components(g: &DirectedGraph) -> SccDecomposition {
    const UNSEEN: u32 = u32::MAX;
    let n = g.node_count();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<NodeId> = Vec::new();
    let mut component_id = vec![UNSEEN; n];
    let mut components: Vec<Vec<NodeId>> = Vec::new();
    let mut next = 0u32;
    // (node, position in its out-neighbour list)
    let mut call: Vec<(NodeId, usize)> = Vec::new();

    for root in g.nodes() {
        if index[root.index()] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root.index()] = next;
        low[root.index()] = next;
        next += 1;
        stack.push(root);
        on_stack[root.index()] = true;

        while let Some(top) = call.last_mut() {
            let v = top.0;
            let succ = g.out_neighbors(v);
            if top.1 < succ.len() {
                let w = succ[top.1];
                top.1 += 1;
                if index[w.index()] == UNSEEN {
                    index[w.index()] = next;
                    low[w.index()] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w.index()] = true;
                    call.push((w, 0));
                } else if on_stack[w.index()] {
                    low[v.index()] = low[v.index()].min(index[w.index()]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent.index()] = low[parent.index()].min(low[v.index()]);
            }
            if low[v.index()] == index[v.index()] {
                let cid = components.len() as u32;
                let mut members = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w.index()] = false;
                    component_id[w.index()] = cid;
                    members.push(w);
                    if w == v {
                        break;
                    }
                }
                members.sort_unstable();
                components.push(members);
            }
        }
    }
    SccDecomposition {
        component_id,
        components,
    }
}

pub fn is_acyclic(g: &DirectedGraph) -> bool {
    g.topological_order().is_some()
}
