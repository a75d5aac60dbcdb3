//! Reachability closure of the reduced DAG and the proximity matrix built from
//! it.
//!
//! For every reachable pair `(i, j)` the hierarchical difference is
//! `delta = level(j) - level(i) >= 1`. The proximity matrix keeps the support
//! of the closure and maps `delta` through one of four transforms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, NodeId};
use crate::hierarchy::{HierarchyRanking, RankingKind};
use crate::scalar::{format_sig, Scalar};

/// Row-bitset transitive closure. Bit `(i, j)` is set iff `j` is reachable
/// from `i` by a non-empty path; the diagonal is always clear.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReachabilityClosure {
    n: usize,
    words: usize,
    bits: Vec<u64>,
    nnz: u64,
}

impl ReachabilityClosure {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> u64 {
        self.nnz
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    #[inline]
    pub fn contains(&self, i: NodeId, j: NodeId) -> bool {
        let (i, j) = (i.index(), j.index());
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    /// Nodes reachable from `i`, ascending.
    pub fn reachable_from(&self, i: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.row(i.index())
            .iter()
            .enumerate()
            .flat_map(|(w, &word)| BitIter { word, base: w * 64 })
            .map(NodeId::from_index)
    }

    pub fn row_count(&self, i: NodeId) -> usize {
        self.row(i.index()).iter().map(|w| w.count_ones() as usize).sum()
    }
}

struct BitIter {
    word: u64,
    base: usize,
}

impl Iterator for BitIter {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.word == 0 {
            return None;
        }
        let tz = self.word.trailing_zeros() as usize;
        self.word &= self.word - 1;
        Some(self.base + tz)
    }
}

/// Upper bounds on closure size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClosureLimits {
    /// Maximum number of reachable pairs.
    pub max_nnz: u64,
    /// Maximum bytes for the bit rows (`n * ceil(n / 64) * 8`).
    pub max_bytes: u64,
}

impl Default for ClosureLimits {
    fn default() -> Self {
        ClosureLimits {
            max_nnz: 1 << 32,
            max_bytes: 8 << 30,
        }
    }
}

pub fn transitive_closure(dag: &DirectedGraph) -> Result<ReachabilityClosure> {
    transitive_closure_with(dag, ClosureLimits::default())
}

/// Rows are filled in reverse topological order: `row(v)` is the union of
/// `{w} | row(w)` over the out-neighbours `w` of `v`.
pub fn transitive_closure_with(dag: &DirectedGraph, limits: ClosureLimits) -> Result<ReachabilityClosure> {
    let order = dag
        .topological_order()
        .ok_or(Error::Cyclic("transitive closure"))?;
    let n = dag.node_count();
    let words = n.div_ceil(64);
    let bytes = (n as u64) * (words as u64) * 8;
    if bytes > limits.max_bytes {
        return Err(Error::ClosureTooLarge {
            nnz: (n as u64) * (n as u64),
            cap: limits.max_nnz,
        });
    }
    let mut bits = vec![0u64; n * words];
    let mut scratch = vec![0u64; words];
    for &v in order.iter().rev() {
        scratch.fill(0);
        for &w in dag.out_neighbors(v) {
            let w = w.index();
            scratch[w / 64] |= 1 << (w % 64);
            let row = &bits[w * words..(w + 1) * words];
            for (s, r) in scratch.iter_mut().zip(row) {
                *s |= *r;
            }
        }
        bits[v.index() * words..(v.index() + 1) * words].copy_from_slice(&scratch);
    }
    let nnz = bits.iter().map(|w| w.count_ones() as u64).sum();
    if nnz > limits.max_nnz {
        return Err(Error::ClosureTooLarge {
            nnz,
            cap: limits.max_nnz,
        });
    }
    Ok(ReachabilityClosure {
        n,
        words,
        bits,
        nnz,
    })
}

/// Transform applied to each hierarchical difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `1` on every reachable pair (the closure itself).
    Constant,
    /// `delta`
    Linear,
    /// `1 + 1/2 + ... + 1/delta`
    Harmonic,
    /// `c + ln(e + delta)`
    Log,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Constant,
        Variant::Linear,
        Variant::Harmonic,
        Variant::Log,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Constant => "constant",
            Variant::Linear => "linear",
            Variant::Harmonic => "harmonic",
            Variant::Log => "log",
        }
    }

    pub fn transform<F: Scalar>(self, delta: u32, c: F) -> F {
        match self {
            Variant::Constant => F::one(),
            Variant::Linear => F::of(delta as f64),
            Variant::Harmonic => harmonic(delta),
            Variant::Log => c + (F::of(std::f64::consts::E) + F::of(delta as f64)).ln(),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "constant" => Ok(Variant::Constant),
            "linear" => Ok(Variant::Linear),
            "harmonic" => Ok(Variant::Harmonic),
            "log" => Ok(Variant::Log),
            other => Err(Error::param("variant", format!("unknown variant `{other}`"))),
        }
    }
}

pub fn harmonic<F: Scalar>(delta: u32) -> F {
    (1..=delta).map(|t| F::one() / F::of(t as f64)).sum()
}

/// Square coordinate-sparse matrix in CSR layout with strictly positive
/// stored values.
#[derive(Clone, Debug, PartialEq)]
pub struct ProximityMatrix<F> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    values: Vec<F>,
    pub variant: Variant,
    pub c: F,
}

impl<F: Scalar> ProximityMatrix<F> {
    /// Builds from `(row, col, value)` triplets; duplicates are not allowed.
    pub fn from_entries(n: usize, mut entries: Vec<(usize, usize, F)>, variant: Variant) -> Self {
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for w in entries.windows(2) {
            assert!((w[0].0, w[0].1) != (w[1].0, w[1].1), "duplicate entry");
        }
        for &(i, j, v) in &entries {
            assert!(i < n && j < n, "entry out of range");
            row_ptr[i + 1] += 1;
            cols.push(u32::try_from(j).expect("column index"));
            values.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        ProximityMatrix {
            n,
            row_ptr,
            cols,
            values,
            variant,
            c: F::zero(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn cols(&self) -> &[u32] {
        &self.cols
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    /// Entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, F)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .zip(&self.values[range])
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, F)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<F> {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        let cols = &self.cols[range.clone()];
        cols.binary_search(&(j as u32))
            .ok()
            .map(|k| self.values[range.start + k])
    }

    pub fn max_value(&self) -> Option<F> {
        self.values.iter().copied().reduce(F::max)
    }

    pub fn min_value(&self) -> Option<F> {
        self.values.iter().copied().reduce(F::min)
    }

    /// Dump as `i<TAB>j<TAB>value` using node labels, 9 significant digits.
    pub fn write_tsv(&self, labels: &[String], path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (i, j, v) in self.iter() {
            writeln!(
                w,
                "{}\t{}\t{}",
                labels[i],
                labels[j],
                format_sig(v.to_f64_lossy(), 9)
            )
            .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Linear matrix: `delta(i, j) = level(j) - level(i)` on every reachable pair.
pub fn build_l<F: Scalar>(
    closure: &ReachabilityClosure,
    levels: &HierarchyRanking,
    labels: &[String],
) -> Result<ProximityMatrix<F>> {
    if levels.kind != RankingKind::Level {
        return Err(Error::param("levels", "expected a level ranking"));
    }
    if levels.len() != closure.node_count() {
        return Err(Error::param(
            "levels",
            format!(
                "{} levels for {} closure rows",
                levels.len(),
                closure.node_count()
            ),
        ));
    }
    let n = closure.node_count();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut cols = Vec::with_capacity(closure.nnz() as usize);
    let mut values = Vec::with_capacity(closure.nnz() as usize);
    let lv = levels.as_integers();
    for i in 0..n {
        let src = NodeId::from_index(i);
        for j in closure.reachable_from(src) {
            let delta = lv[j.index()] - lv[i];
            if delta < 1 {
                return Err(Error::LevelMismatch {
                    src: labels.get(i).cloned().unwrap_or_else(|| i.to_string()),
                    dst: labels
                        .get(j.index())
                        .cloned()
                        .unwrap_or_else(|| j.index().to_string()),
                    delta,
                });
            }
            cols.push(j.0);
            values.push(F::of(delta as f64));
        }
        row_ptr.push(cols.len());
    }
    Ok(ProximityMatrix {
        n,
        row_ptr,
        cols,
        values,
        variant: Variant::Linear,
        c: F::zero(),
    })
}

/// Applies `variant` to every stored difference of a linear matrix.
pub fn build_m<F: Scalar>(l: &ProximityMatrix<F>, variant: Variant, c: F) -> Result<ProximityMatrix<F>> {
    if l.variant != Variant::Linear {
        return Err(Error::param("L", "build_m expects the linear matrix"));
    }
    let max_delta = l
        .values
        .iter()
        .map(|v| v.to_f64_lossy() as u32)
        .max()
        .unwrap_or(0);
    // harmonic numbers by table: H(d) = H(d - 1) + 1/d
    let table: Vec<F> = if variant == Variant::Harmonic {
        let mut t = Vec::with_capacity(max_delta as usize + 1);
        t.push(F::zero());
        for d in 1..=max_delta {
            let prev = t[d as usize - 1];
            t.push(prev + F::one() / F::of(d as f64));
        }
        t
    } else {
        Vec::new()
    };
    let values = l
        .values
        .iter()
        .map(|&delta| {
            let d = delta.to_f64_lossy() as u32;
            match variant {
                Variant::Harmonic => table[d as usize],
                other => other.transform(d, c),
            }
        })
        .collect();
    let m = ProximityMatrix {
        n: l.n,
        row_ptr: l.row_ptr.clone(),
        cols: l.cols.clone(),
        values,
        variant,
        c: if variant == Variant::Log { c } else { F::zero() },
    };
    if let Some(bad) = m.values.iter().position(|v| !(*v > F::zero()) || !v.is_finite()) {
        let row = m.row_ptr.partition_point(|&p| p <= bad) - 1;
        return Err(Error::NonFinite {
            row,
            col: m.cols[bad] as usize,
        });
    }
    Ok(m)
}
