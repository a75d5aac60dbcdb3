//! Non-negative factorization `M ~ S T` by cyclic coordinate descent.
//!
//! The objective is
//!
//! ```text
//! J = sum_{(i,j) in supp(M)} (M_ij - s_i . t_j)^2
//!   + rho * sum_{(i,j) not in supp(M)} (s_i . t_j)^2
//!   + lambda * (|S|_F^2 + |T|_F^2)
//! ```
//!
//! Each sweep visits the latent dimensions in order and, for dimension `d`,
//! replaces every `S[i][d]` and then every `T[d][j]` by its clamped closed-form
//! minimiser. Residuals are kept only on the support; the down-weighted
//! zero part is evaluated through the `k x k` Gram matrices `S^T S` and `T T^T`,
//! so a sweep costs `O((nnz + n k) k)`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::proximity::ProximityMatrix;
use crate::scalar::{format_sig, sigmoid, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorizationConfig<F> {
    /// Embedding dimension.
    pub k: usize,
    /// L2 weight on both factors.
    pub lambda: F,
    /// Maximum number of sweeps.
    pub sweeps: usize,
    /// Weight `rho` of the squared predictions on unobserved pairs.
    pub zero_weight: F,
    pub seed: u64,
    /// Stop once the relative objective decrease of a sweep drops below this.
    pub tol: F,
    /// Decision threshold stored in the model.
    pub alpha: F,
}

impl<F: Scalar> Default for FactorizationConfig<F> {
    fn default() -> Self {
        FactorizationConfig {
            k: 128,
            lambda: F::of(0.1),
            sweeps: 100,
            zero_weight: F::of(0.05),
            seed: 0,
            tol: F::of(1e-5),
            alpha: F::of(0.5),
        }
    }
}

impl<F: Scalar> FactorizationConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if self.sweeps == 0 {
            return Err(Error::param("sweeps", "must be at least 1"));
        }
        if !(self.lambda >= F::zero()) {
            return Err(Error::param("lambda", "must be non-negative"));
        }
        if !(self.zero_weight >= F::zero() && self.zero_weight <= F::one()) {
            return Err(Error::param("zero_weight", "must lie in [0, 1]"));
        }
        if !(self.tol >= F::zero()) {
            return Err(Error::param("tol", "must be non-negative"));
        }
        check_alpha(self.alpha)
    }
}

fn check_alpha<F: Scalar>(alpha: F) -> Result<()> {
    if alpha >= F::of(0.5) && alpha < F::one() {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("{alpha} is outside [0.5, 1)")))
    }
}

/// Source vectors (rows of `S`) and target vectors (columns of `T`) per node.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel<F> {
    k: usize,
    labels: Vec<String>,
    index: HashMap<String, usize>,
    /// `n x k`, row-major.
    source: Vec<F>,
    /// `k x n`, row-major.
    target: Vec<F>,
    pub alpha: F,
    /// Objective at initialisation followed by one value per sweep.
    pub objective_trace: Vec<F>,
}

impl<F: Scalar> EmbeddingModel<F> {
    /// Assembles a model from raw factors (`source` is `n x k`, `target` is
    /// `k x n`, both row-major).
    pub fn from_factors(
        labels: Vec<String>,
        k: usize,
        source: Vec<F>,
        target: Vec<F>,
        alpha: F,
    ) -> Result<Self> {
        let n = labels.len();
        if source.len() != n * k || target.len() != n * k {
            return Err(Error::param("factors", format!("expected {n} x {k} factors")));
        }
        check_alpha(alpha)?;
        let index = index_labels(&labels);
        Ok(EmbeddingModel {
            k,
            labels,
            index,
            source,
            target,
            alpha,
            objective_trace: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn node(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).map(|&i| NodeId::from_index(i))
    }

    /// Replaces the label table; the length must match.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.node_count() {
            return Err(Error::param(
                "labels",
                format!("{} labels for {} nodes", labels.len(), self.node_count()),
            ));
        }
        self.index = index_labels(&labels);
        self.labels = labels;
        Ok(self)
    }

    fn check(&self, n: NodeId) -> Result<usize> {
        let i = n.index();
        if i < self.node_count() {
            Ok(i)
        } else {
            Err(Error::UnknownNode(format!("#{i}")))
        }
    }

    pub fn source_matrix(&self) -> &[F] {
        &self.source
    }

    pub fn target_matrix(&self) -> &[F] {
        &self.target
    }

    pub fn source_vector(&self, i: NodeId) -> Result<Vec<F>> {
        let i = self.check(i)?;
        Ok(self.source[i * self.k..(i + 1) * self.k].to_vec())
    }

    pub fn target_vector(&self, j: NodeId) -> Result<Vec<F>> {
        let j = self.check(j)?;
        let n = self.node_count();
        Ok((0..self.k).map(|d| self.target[d * n + j]).collect())
    }

    /// `<s_i, t_j>`
    pub fn dot(&self, i: NodeId, j: NodeId) -> Result<F> {
        let (i, j) = (self.check(i)?, self.check(j)?);
        Ok(self.dot_unchecked(i, j))
    }

    fn dot_unchecked(&self, i: usize, j: usize) -> F {
        let n = self.node_count();
        let s = &self.source[i * self.k..(i + 1) * self.k];
        s.iter()
            .enumerate()
            .map(|(d, &x)| x * self.target[d * n + j])
            .sum()
    }

    /// `<s, t_j>` for an external source vector.
    pub fn dot_with_target(&self, s: &[F], j: NodeId) -> Result<F> {
        let j = self.check(j)?;
        let n = self.node_count();
        Ok(s.iter()
            .enumerate()
            .map(|(d, &x)| x * self.target[d * n + j])
            .sum())
    }

    /// `sigmoid(<s_i, t_j>)`; never below 0.5 since both factors are
    /// non-negative.
    pub fn score(&self, i: NodeId, j: NodeId) -> Result<F> {
        self.dot(i, j).map(sigmoid)
    }

    pub fn score_labels(&self, i: &str, j: &str) -> Result<F> {
        let i = self.node(i).ok_or_else(|| Error::UnknownNode(i.to_string()))?;
        let j = self.node(j).ok_or_else(|| Error::UnknownNode(j.to_string()))?;
        self.score(i, j)
    }

    /// Whether a path `i -> j` is predicted: `score(i, j) > alpha`.
    pub fn predict_path(&self, i: NodeId, j: NodeId, alpha: F) -> Result<bool> {
        check_alpha(alpha)?;
        Ok(self.score(i, j)? > alpha)
    }
}

fn index_labels(labels: &[String]) -> HashMap<String, usize> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), i))
        .collect()
}

/// Factor matrices during training.
struct Factors<F> {
    n: usize,
    k: usize,
    s: Vec<F>,
    t: Vec<F>,
    /// `S^T S`, k x k
    hs: Vec<F>,
    /// `T T^T`, k x k
    gt: Vec<F>,
}

impl<F: Scalar> Factors<F> {
    fn gram_entry(m: &[F], n: usize, k: usize, row_major_nk: bool, d: usize, e: usize) -> F {
        if row_major_nk {
            (0..n).map(|i| m[i * k + d] * m[i * k + e]).sum()
        } else {
            (0..n).map(|j| m[d * n + j] * m[e * n + j]).sum()
        }
    }

    fn refresh_hs(&mut self, d: usize) {
        for e in 0..self.k {
            let v = Self::gram_entry(&self.s, self.n, self.k, true, d, e);
            self.hs[d * self.k + e] = v;
            self.hs[e * self.k + d] = v;
        }
    }

    fn refresh_gt(&mut self, d: usize) {
        for e in 0..self.k {
            let v = Self::gram_entry(&self.t, self.n, self.k, false, d, e);
            self.gt[d * self.k + e] = v;
            self.gt[e * self.k + d] = v;
        }
    }
}

/// One orientation of the support with values and residuals stored in
/// that order, so both update passes stream through memory.
struct Layout<F> {
    ptr: Vec<usize>,
    idx: Vec<u32>,
    vals: Vec<F>,
    resid: Vec<F>,
}

fn layouts<F: Scalar>(m: &ProximityMatrix<F>) -> (Layout<F>, Layout<F>) {
    let n = m.node_count();
    let mut col_ptr = vec![0usize; n + 1];
    for &j in m.cols() {
        col_ptr[j as usize + 1] += 1;
    }
    for j in 0..n {
        col_ptr[j + 1] += col_ptr[j];
    }
    let mut fill = col_ptr.clone();
    let mut rows = vec![0u32; m.nnz()];
    let mut cvals = vec![F::zero(); m.nnz()];
    for (i, j, v) in m.iter() {
        rows[fill[j]] = i as u32;
        cvals[fill[j]] = v;
        fill[j] += 1;
    }
    let by_row = Layout {
        ptr: m.row_ptr().to_vec(),
        idx: m.cols().to_vec(),
        vals: m.values().to_vec(),
        resid: m.values().to_vec(),
    };
    let by_col = Layout {
        ptr: col_ptr,
        idx: rows,
        resid: cvals.clone(),
        vals: cvals,
    };
    (by_row, by_col)
}

/// Calls `body(major, minor, &mut resid)` for every stored entry, in
/// parallel over blocks of major indices.
fn for_each_entry<F: Scalar>(lay: &mut Layout<F>, body: impl Fn(usize, usize, &mut F) + Sync) {
    const BLOCK: usize = 256;
    let n = lay.ptr.len() - 1;
    let mut blocks = Vec::with_capacity(n / BLOCK + 1);
    let mut rest: &mut [F] = &mut lay.resid;
    let mut lo = 0;
    while lo < n {
        let hi = (lo + BLOCK).min(n);
        let (head, tail) = rest.split_at_mut(lay.ptr[hi] - lay.ptr[lo]);
        blocks.push((lo, hi, head));
        rest = tail;
        lo = hi;
    }
    let (ptr, idx) = (&lay.ptr, &lay.idx);
    blocks.into_par_iter().for_each(|(lo, hi, resid)| {
        let base = ptr[lo];
        for i in lo..hi {
            for p in ptr[i]..ptr[i + 1] {
                body(i, idx[p] as usize, &mut resid[p - base]);
            }
        }
    });
}

/// New values of one factor column: `own[i]` is the current value for major
/// index `i`, `other[j]` the fixed factor's value for minor index `j`,
/// `cross(i)` the Gram coupling with the other dimensions.
#[allow(clippy::too_many_arguments)]
fn solve<F: Scalar>(
    lay: &Layout<F>,
    own: &[F],
    other: &[F],
    cross: impl Fn(usize) -> F + Sync,
    gram_dd: F,
    rho: F,
    lambda: F,
    out: &mut [F],
) {
    let one_minus_rho = F::one() - rho;
    out.par_iter_mut().enumerate().with_min_len(256).for_each(|(i, out)| {
        let (mut a, mut b, mut oo) = (F::zero(), F::zero(), F::zero());
        for p in lay.ptr[i]..lay.ptr[i + 1] {
            let o = other[lay.idx[p] as usize];
            let rhat = lay.resid[p] + own[i] * o;
            a += o * rhat;
            b += o * (lay.vals[p] - rhat);
            oo += o * o;
        }
        let num = a - rho * (cross(i) - b);
        let den = one_minus_rho * oo + rho * gram_dd + lambda;
        *out = clamp_update(num, den);
    });
}

/// Applies `own -> new` to both residual copies; `major` is the layout
/// indexed by the updated factor.
fn shift<F: Scalar>(major: &mut Layout<F>, minor: &mut Layout<F>, own: &[F], new: &[F], other: &[F]) {
    let delta: Vec<F> = own.iter().zip(new).map(|(&o, &n)| o - n).collect();
    let delta = &delta;
    for_each_entry(major, |i, j, r| *r += delta[i] * other[j]);
    for_each_entry(minor, |j, i, r| *r += delta[i] * other[j]);
}

fn objective<F: Scalar>(f: &Factors<F>, lay: &Layout<F>, rho: F, lambda: F) -> F {
    let fit: F = lay.resid.iter().map(|&r| r * r).sum();
    // squared predictions on the support: p = M - R
    let pred_on_support: F = lay
        .vals
        .iter()
        .zip(&lay.resid)
        .map(|(&v, &r)| (v - r) * (v - r))
        .sum();
    let pred_all: F = f.hs.iter().zip(&f.gt).map(|(&a, &b)| a * b).sum();
    let norms: F = f.s.iter().chain(&f.t).map(|&x| x * x).sum();
    fit + rho * (pred_all - pred_on_support) + lambda * norms
}

/// Minimiser of `den * x^2 - 2 num * x` over `x >= 0`.
#[inline]
fn clamp_update<F: Scalar>(num: F, den: F) -> F {
    let den = den.max(F::of(1e-12));
    (num / den).max(F::zero())
}

pub fn factorize<F: Scalar>(m: &ProximityMatrix<F>, cfg: &FactorizationConfig<F>) -> Result<EmbeddingModel<F>> {
    factorize_observed(m, cfg, |_, _, _, _| {})
}

/// Like [`factorize`], calling `observer(sweep, dim, S, T)` after every
/// rank-one column/row update.
pub fn factorize_observed<F, O>(
    m: &ProximityMatrix<F>,
    cfg: &FactorizationConfig<F>,
    mut observer: O,
) -> Result<EmbeddingModel<F>>
where
    F: Scalar,
    O: FnMut(usize, usize, &[F], &[F]),
{
    cfg.validate()?;
    let n = m.node_count();
    if n == 0 || m.nnz() == 0 {
        return Err(Error::Empty("proximity matrix has no entries"));
    }
    for (i, j, v) in m.iter() {
        if !v.is_finite() || v < F::zero() {
            return Err(Error::NonFinite { row: i, col: j });
        }
    }
    let k = cfg.k;
    let rho = cfg.zero_weight;
    let lambda = cfg.lambda;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = 1.0 / (k as f64).sqrt();
    // uniform on (0, 1/sqrt(k)]
    let mut draw = |_| F::of((1.0 - rng.gen::<f64>()) * scale);
    let s: Vec<F> = (0..n * k).map(&mut draw).collect();
    let t: Vec<F> = (0..n * k).map(&mut draw).collect();
    let mut f = Factors {
        n,
        k,
        s,
        t,
        hs: vec![F::zero(); k * k],
        gt: vec![F::zero(); k * k],
    };
    for d in 0..k {
        f.refresh_hs(d);
        f.refresh_gt(d);
    }

    let (mut by_row, mut by_col) = layouts(m);
    for_each_entry(&mut by_row, |i, j, r| {
        let pred: F = (0..k).map(|d| f.s[i * k + d] * f.t[d * n + j]).sum();
        *r -= pred;
    });
    for_each_entry(&mut by_col, |j, i, r| {
        let pred: F = (0..k).map(|d| f.s[i * k + d] * f.t[d * n + j]).sum();
        *r -= pred;
    });

    let mut trace = vec![objective(&f, &by_row, rho, lambda)];
    let mut new_vals = vec![F::zero(); n];
    let mut own = vec![F::zero(); n];

    for sweep in 0..cfg.sweeps {
        for d in 0..k {
            // S[., d] with T fixed
            for (o, row) in own.iter_mut().zip(f.s.chunks_exact(k)) {
                *o = row[d];
            }
            {
                let (s, gt) = (&f.s, &f.gt);
                let cross = |i: usize| -> F {
                    (0..k)
                        .filter(|&e| e != d)
                        .map(|e| s[i * k + e] * gt[d * k + e])
                        .sum()
                };
                let t_d = &f.t[d * n..(d + 1) * n];
                solve(&by_row, &own, t_d, cross, gt[d * k + d], rho, lambda, &mut new_vals);
                shift(&mut by_row, &mut by_col, &own, &new_vals, t_d);
            }
            for (row, &x) in f.s.chunks_exact_mut(k).zip(&new_vals) {
                row[d] = x;
            }
            f.refresh_hs(d);
            observer(sweep, d, &f.s, &f.t);

            // T[d, .] with S fixed
            for (o, row) in own.iter_mut().zip(f.s.chunks_exact(k)) {
                *o = row[d];
            }
            {
                let (t, hs) = (&f.t, &f.hs);
                let cross = |j: usize| -> F {
                    (0..k)
                        .filter(|&e| e != d)
                        .map(|e| t[e * n + j] * hs[d * k + e])
                        .sum()
                };
                let t_d = &t[d * n..(d + 1) * n];
                solve(&by_col, t_d, &own, cross, hs[d * k + d], rho, lambda, &mut new_vals);
                shift(&mut by_col, &mut by_row, t_d, &new_vals, &own);
            }
            f.t[d * n..(d + 1) * n].copy_from_slice(&new_vals);
            f.refresh_gt(d);
            observer(sweep, d, &f.s, &f.t);
        }

        let j = objective(&f, &by_row, rho, lambda);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(j);
        let decrease = (prev - j) / prev.abs().max(F::min_positive_value());
        if decrease < cfg.tol {
            break;
        }
    }

    let labels = (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
    let index = index_labels(&labels);
    Ok(EmbeddingModel {
        k,
        labels,
        index,
        source: f.s,
        target: f.t,
        alpha: cfg.alpha,
        objective_trace: trace,
    })
}

const MAGIC: &[u8; 4] = b"ATPM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Binary layout (little-endian): magic `ATPM`, `u32` version, `u32` k,
/// `u64` node count, label table (`u32` byte length + UTF-8 each), `S` as
/// `n x k` f64 row-major, `T` as `k x n` f64 row-major, `f64` alpha.
pub fn save_model<F: Scalar>(model: &EmbeddingModel<F>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_model(model, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_model<F: Scalar, W: Write>(model: &EmbeddingModel<F>, w: &mut W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(model.k as u32).to_le_bytes())?;
    w.write_all(&(model.node_count() as u64).to_le_bytes())?;
    for label in &model.labels {
        w.write_all(&(label.len() as u32).to_le_bytes())?;
        w.write_all(label.as_bytes())?;
    }
    for &x in model.source.iter().chain(&model.target) {
        w.write_all(&x.to_f64_lossy().to_le_bytes())?;
    }
    w.write_all(&model.alpha.to_f64_lossy().to_le_bytes())
}

pub fn load_model<F: Scalar>(path: &Path) -> Result<EmbeddingModel<F>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    parse_model(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptModel(format!("truncated at byte {}", self.at)))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn parse_model<F: Scalar>(bytes: &[u8]) -> Result<EmbeddingModel<F>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut c = Cursor { bytes, at: 4 };
    let version = c.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let k = c.u32()? as usize;
    let n = usize::try_from(c.u64()?).map_err(|_| Error::CorruptModel("node count".into()))?;
    if k == 0 || n.checked_mul(k).is_none_or(|nk| nk.saturating_mul(16) > bytes.len()) {
        return Err(Error::CorruptModel(format!("implausible shape {n} x {k}")));
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let len = c.u32()? as usize;
        let raw = c.take(len)?;
        let label = std::str::from_utf8(raw)
            .map_err(|_| Error::CorruptModel("label is not UTF-8".into()))?;
        labels.push(label.to_string());
    }
    let mut read_block = |count: usize| -> Result<Vec<F>> {
        (0..count).map(|_| c.f64().map(F::of)).collect()
    };
    let source = read_block(n * k)?;
    let target = read_block(n * k)?;
    let alpha = F::of(c.f64()?);
    if c.at != bytes.len() {
        return Err(Error::CorruptModel("trailing bytes".into()));
    }
    if source.iter().chain(&target).any(|x| !x.is_finite() || *x < F::zero()) {
        return Err(Error::CorruptModel("negative or non-finite factor".into()));
    }
    EmbeddingModel::from_factors(labels, k, source, target, alpha)
}

/// Writes `label<TAB>v1<TAB>...<TAB>vk` lines for sources and targets.
pub fn export_embeddings<F: Scalar>(model: &EmbeddingModel<F>, sources: &Path, targets: &Path) -> Result<()> {
    for (path, is_source) in [(sources, true), (targets, false)] {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (i, label) in model.labels.iter().enumerate() {
            let v = if is_source {
                model.source_vector(NodeId::from_index(i))?
            } else {
                model.target_vector(NodeId::from_index(i))?
            };
            let mut line = label.clone();
            for x in v {
                line.push('\t');
                line.push_str(&format_sig(x.to_f64_lossy(), 9));
            }
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
