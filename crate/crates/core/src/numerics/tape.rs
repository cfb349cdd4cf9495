//! Reverse-mode gradient tape.
//!
//! Every operation appends a node holding its output value and enough
//! information to push gradients back to its inputs. [`Tape::backward`]
//! walks the nodes in exact reverse order of construction.

use super::matrix::{dot, sigmoid, softplus, Matrix, Real};
use super::params::{ParamId, ParamSet};
use crate::error::{CasmError, Result};

/// Additive logit for disallowed attention entries.
pub const MASK_VALUE: f64 = -1e9;

/// Smallest probability allowed inside a logarithm of the loss.
pub const LOG_CLAMP: f64 = 1e-24;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Value<'a, T> {
    Owned(Matrix<T>),
    Borrowed(&'a Matrix<T>),
}

impl<T> Value<'_, T> {
    fn get(&self) -> &Matrix<T> {
        match self {
            Value::Owned(m) => m,
            Value::Borrowed(m) => m,
        }
    }
}

enum Op<T> {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Affine { x: Var, scale: T },
    MulConst { x: Var, factor: Matrix<T> },
    Gather { table: Var, ids: Vec<usize> },
    ConcatCols(Vec<Var>),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, eps: T },
    RowDot(Var, Var),
    Attention(Box<AttentionCache<T>>),
    WeightedBce { pos: Var, neg: Var, pos_w: Vec<T>, neg_w: Vec<T> },
    Sum(Var),
}

struct AttentionCache<T> {
    q: Var,
    k: Var,
    v: Var,
    seq_len: usize,
    causal: bool,
    scale: T,
    /// Per-sequence `seq_len × seq_len` attention weights, zero where disallowed.
    probs: Vec<T>,
}

struct Node<'a, T> {
    value: Value<'a, T>,
    op: Op<T>,
}

/// Ordered record of primitive operations.
pub struct Tape<'a, T> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Self { nodes: Vec::new() }
    }
}

/// Gradients for every node of a tape after a backward pass.
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `v` (`None` if `v` did not influence it).
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads[v.0].as_ref()
    }
}

fn shape_err(op: &str, detail: String) -> CasmError {
    CasmError::Config(format!("{op}: {detail}"))
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        self.nodes[v.0].value.get()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, name: &str) -> Result<Var> {
        value.ensure_finite(name)?;
        self.nodes.push(Node { value: Value::Owned(value), op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input; receives a gradient but belongs to no parameter.
    pub fn input(&mut self, m: Matrix<T>) -> Result<Var> {
        self.push(m, Op::Input, "input")
    }

    /// Registers a parameter without copying it.
    pub fn param(&mut self, set: &'a ParamSet<T>, id: ParamId) -> Result<Var> {
        let m = set.get(id);
        m.ensure_finite(set.name(id))?;
        self.nodes.push(Node { value: Value::Borrowed(m), op: Op::Param(id) });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        self.push(out, Op::MatMulNt(a, b), "matmul_nt")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        self.push(out, Op::Add(a, b), "add")
    }

    /// Adds a `1 × cols` row (bias) to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let out = self.value(a).add_row_broadcast(self.value(row))?;
        self.push(out, Op::AddRow(a, row), "add_row")
    }

    /// `scale · x + offset` where `offset` is a constant (e.g. an attention mask).
    pub fn affine(&mut self, x: Var, scale: T, offset: Option<&Matrix<T>>) -> Result<Var> {
        let mut out = self.value(x).scale(scale);
        if let Some(off) = offset {
            out.add_assign(off)?;
        }
        self.push(out, Op::Affine { x, scale }, "affine")
    }

    /// Elementwise product with a constant matrix (dropout masks).
    pub fn mul_const(&mut self, x: Var, factor: Matrix<T>) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != factor.shape() {
            return Err(shape_err(
                "mul_const",
                format!("{:?} vs {:?}", xv.shape(), factor.shape()),
            ));
        }
        let data = xv.data().iter().zip(factor.data()).map(|(&a, &b)| a * b).collect();
        let out = Matrix::new(xv.rows(), xv.cols(), data)?;
        self.push(out, Op::MulConst { x, factor }, "mul_const")
    }

    /// Row lookup: output row `i` is `table[ids[i]]`. Backward scatter-adds.
    pub fn gather(&mut self, table: Var, ids: Vec<usize>) -> Result<Var> {
        let t = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * t.cols());
        for &id in &ids {
            if id >= t.rows() {
                return Err(CasmError::Data(format!(
                    "gather: row {id} out of range for table with {} rows",
                    t.rows()
                )));
            }
            data.extend_from_slice(t.row(id));
        }
        let out = Matrix::new(ids.len(), t.cols(), data)?;
        self.push(out, Op::Gather { table, ids }, "gather")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if let Some(p) = parts.iter().find(|&&p| self.value(p).rows() != rows) {
            return Err(shape_err(
                "concat_cols",
                format!("row count {} vs {}", self.value(*p).rows(), rows),
            ));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Matrix::new(rows, cols, data)?;
        self.push(out, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).relu();
        self.push(out, Op::Relu(x), "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x), "sigmoid")
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).softmax_rows();
        self.push(out, Op::SoftmaxRows(x), "softmax_rows")
    }

    /// Row-wise layer normalisation with `1 × cols` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let xv = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        if g.shape() != (1, xv.cols()) || b.shape() != (1, xv.cols()) {
            return Err(shape_err(
                "layer_norm",
                format!("gain {:?} / bias {:?} for width {}", g.shape(), b.shape(), xv.cols()),
            ));
        }
        let mut out = Matrix::zeros(xv.rows(), xv.cols());
        for r in 0..xv.rows() {
            let (mean, rstd) = row_stats(xv.row(r), eps);
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = (xv.get(r, c) - mean) * rstd * g.get(0, c) + b.get(0, c);
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, eps }, "layer_norm")
    }

    /// Per-row dot product, producing an `n × 1` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("row_dot", format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = (0..av.rows()).map(|r| dot(av.row(r), bv.row(r))).collect();
        let out = Matrix::new(av.rows(), 1, data)?;
        self.push(out, Op::RowDot(a, b), "row_dot")
    }

    /// Scaled dot-product attention over a batch of equal-length sequences
    /// stacked row-wise in `q`, `k`, `v` (`batch·seq_len × width`).
    ///
    /// Query `t` attends to key `j` iff `key_valid[j]` and (when `causal`)
    /// `j <= t`. Allowed logits are `scale · q_t·k_j`; disallowed entries
    /// carry weight exactly zero, which is what adding [`MASK_VALUE`]
    /// before the softmax yields whenever a row has at least one allowed
    /// key. A row with no allowed key outputs zeros.
    pub fn masked_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        seq_len: usize,
        key_valid: &[bool],
        causal: bool,
        scale: T,
    ) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        if qv.shape() != kv.shape() || qv.rows() != vv.rows() {
            return Err(shape_err(
                "attention",
                format!("q {:?}, k {:?}, v {:?}", qv.shape(), kv.shape(), vv.shape()),
            ));
        }
        if seq_len == 0 || qv.rows() % seq_len != 0 || key_valid.len() != qv.rows() {
            return Err(shape_err(
                "attention",
                format!("{} rows not a multiple of sequence length {seq_len} with {} mask entries", qv.rows(), key_valid.len()),
            ));
        }
        let batch = qv.rows() / seq_len;
        let width = vv.cols();
        let mut probs = vec![T::zero(); batch * seq_len * seq_len];
        let mut out = Matrix::zeros(qv.rows(), width);
        let mut logits = vec![T::zero(); seq_len];
        for b in 0..batch {
            let base = b * seq_len;
            for t in 0..seq_len {
                let limit = if causal { t + 1 } else { seq_len };
                let qt = qv.row(base + t);
                let mut max = T::neg_infinity();
                let mut any = false;
                for j in 0..limit {
                    if key_valid[base + j] {
                        let s = scale * dot(qt, kv.row(base + j));
                        logits[j] = s;
                        max = max.max(s);
                        any = true;
                    }
                }
                if !any {
                    continue;
                }
                let p_row = &mut probs[(base + t) * seq_len..(base + t + 1) * seq_len];
                let mut total = T::zero();
                for j in 0..limit {
                    if key_valid[base + j] {
                        let e = (logits[j] - max).exp();
                        p_row[j] = e;
                        total += e;
                    }
                }
                let out_row = out.row_mut(base + t);
                for j in 0..limit {
                    if p_row[j] != T::zero() {
                        p_row[j] /= total;
                        let p = p_row[j];
                        for (o, &x) in out_row.iter_mut().zip(vv.row(base + j)) {
                            *o += p * x;
                        }
                    }
                }
            }
        }
        let cache = AttentionCache { q, k, v, seq_len, causal, scale, probs };
        self.push(out, Op::Attention(Box::new(cache)), "attention")
    }

    /// Weighted binary cross-entropy on logits:
    /// `-Σ_i [pos_w_i · ln σ(pos_i) + neg_w_i · ln(1 − σ(neg_i))]`, with each
    /// log clamped below at `ln(1e-24)`. Produces a `1 × 1` scalar.
    pub fn weighted_bce(&mut self, pos: Var, neg: Var, pos_w: Vec<T>, neg_w: Vec<T>) -> Result<Var> {
        let (pv, nv) = (self.value(pos), self.value(neg));
        let n = pv.len();
        if nv.len() != n || pos_w.len() != n || neg_w.len() != n {
            return Err(shape_err(
                "weighted_bce",
                format!("{} positive, {} negative, {}/{} weights", n, nv.len(), pos_w.len(), neg_w.len()),
            ));
        }
        let cap = T::of(-LOG_CLAMP.ln());
        let mut total = T::zero();
        for i in 0..n {
            if pos_w[i] != T::zero() {
                total += pos_w[i] * softplus(-pv.data()[i]).min(cap);
            }
            if neg_w[i] != T::zero() {
                total += neg_w[i] * softplus(nv.data()[i]).min(cap);
            }
        }
        let out = Matrix::new(1, 1, vec![total])?;
        self.push(out, Op::WeightedBce { pos, neg, pos_w, neg_w }, "weighted_bce")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Matrix::new(1, 1, vec![self.value(x).sum()])?;
        self.push(out, Op::Sum(x), "sum")
    }

    /// Reverse pass from a `1 × 1` loss. Gradient buffers start at zero and
    /// nodes are visited in exact reverse order of the forward pass.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(shape_err("backward", format!("loss must be 1x1, got {:?}", lv.shape())));
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, T::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Tape::backward`] and collects gradients aligned with `params`
    /// (zeros for parameters the loss does not depend on).
    pub fn param_grads(&self, loss: Var, params: &ParamSet<T>) -> Result<Vec<Matrix<T>>> {
        let grads = self.backward(loss)?;
        let mut out = params.zeros_like();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, grads.grads[idx].as_ref()) {
                out[id.0].add_assign(g)?;
            }
        }
        Ok(out)
    }

    fn backprop_node(&self, idx: usize, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let ga = g.matmul_nt(self.value(*b))?;
                let gb = self.value(*a).matmul_tn(g)?;
                accumulate(grads, *a, ga)?;
                accumulate(grads, *b, gb)?;
            }
            Op::MatMulNt(a, b) => {
                let ga = g.matmul(self.value(*b))?;
                let gb = g.matmul_tn(self.value(*a))?;
                accumulate(grads, *a, ga)?;
                accumulate(grads, *b, gb)?;
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.clone())?;
            }
            Op::AddRow(a, row) => {
                let mut sums = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (s, &x) in sums.row_mut(0).iter_mut().zip(g.row(r)) {
                        *s += x;
                    }
                }
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *row, sums)?;
            }
            Op::Affine { x, scale } => accumulate(grads, *x, g.scale(*scale))?,
            Op::MulConst { x, factor } => {
                let data = g.data().iter().zip(factor.data()).map(|(&a, &b)| a * b).collect();
                accumulate(grads, *x, Matrix::new(g.rows(), g.cols(), data)?)?;
            }
            Op::Gather { table, ids } => {
                let t = self.value(*table);
                let mut gt = Matrix::zeros(t.rows(), t.cols());
                for (i, &id) in ids.iter().enumerate() {
                    for (d, &x) in gt.row_mut(id).iter_mut().zip(g.row(i)) {
                        *d += x;
                    }
                }
                accumulate(grads, *table, gt)?;
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let gp = Matrix::from_fn(g.rows(), w, |r, c| g.get(r, offset + c));
                    accumulate(grads, p, gp)?;
                    offset += w;
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
                    .collect();
                accumulate(grads, *x, Matrix::new(g.rows(), g.cols(), data)?)?;
            }
            Op::Sigmoid(x) => {
                let s = node.value.get();
                let data =
                    g.data().iter().zip(s.data()).map(|(&gi, &si)| gi * si * (T::one() - si)).collect();
                accumulate(grads, *x, Matrix::new(g.rows(), g.cols(), data)?)?;
            }
            Op::SoftmaxRows(x) => {
                let s = node.value.get();
                let mut gx = Matrix::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let inner = dot(g.row(r), s.row(r));
                    for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                        *o = s.get(r, c) * (g.get(r, c) - inner);
                    }
                }
                accumulate(grads, *x, gx)?;
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let (xv, gv) = (self.value(*x), self.value(*gain));
                let cols = xv.cols();
                let n = T::of(cols as f64);
                let mut gx = Matrix::zeros(xv.rows(), cols);
                let mut ggain = Matrix::zeros(1, cols);
                let mut gbias = Matrix::zeros(1, cols);
                let mut xhat = vec![T::zero(); cols];
                let mut dxhat = vec![T::zero(); cols];
                for r in 0..xv.rows() {
                    let (mean, rstd) = row_stats(xv.row(r), *eps);
                    for c in 0..cols {
                        xhat[c] = (xv.get(r, c) - mean) * rstd;
                        let gy = g.get(r, c);
                        dxhat[c] = gy * gv.get(0, c);
                        ggain.data_mut()[c] += gy * xhat[c];
                        gbias.data_mut()[c] += gy;
                    }
                    let mean_d: T = dxhat.iter().copied().sum::<T>() / n;
                    let mean_dx: T = dot(&dxhat, &xhat) / n;
                    for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                        *o = rstd * (dxhat[c] - mean_d - xhat[c] * mean_dx);
                    }
                }
                accumulate(grads, *x, gx)?;
                accumulate(grads, *gain, ggain)?;
                accumulate(grads, *bias, gbias)?;
            }
            Op::RowDot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = Matrix::from_fn(av.rows(), av.cols(), |r, c| g.get(r, 0) * bv.get(r, c));
                let gb = Matrix::from_fn(av.rows(), av.cols(), |r, c| g.get(r, 0) * av.get(r, c));
                accumulate(grads, *a, ga)?;
                accumulate(grads, *b, gb)?;
            }
            Op::Attention(cache) => {
                let (gq, gk, gv) = self.attention_backward(cache, g);
                accumulate(grads, cache.q, gq)?;
                accumulate(grads, cache.k, gk)?;
                accumulate(grads, cache.v, gv)?;
            }
            Op::WeightedBce { pos, neg, pos_w, neg_w } => {
                let upstream = g.get(0, 0);
                let cap = T::of(-LOG_CLAMP.ln());
                let (pv, nv) = (self.value(*pos), self.value(*neg));
                let gp = pv
                    .data()
                    .iter()
                    .zip(pos_w)
                    .map(|(&x, &w)| {
                        if w == T::zero() || softplus(-x) >= cap {
                            T::zero()
                        } else {
                            -upstream * w * (T::one() - sigmoid(x))
                        }
                    })
                    .collect();
                let gn = nv
                    .data()
                    .iter()
                    .zip(neg_w)
                    .map(|(&y, &w)| {
                        if w == T::zero() || softplus(y) >= cap {
                            T::zero()
                        } else {
                            upstream * w * sigmoid(y)
                        }
                    })
                    .collect();
                accumulate(grads, *pos, Matrix::new(pv.rows(), pv.cols(), gp)?)?;
                accumulate(grads, *neg, Matrix::new(nv.rows(), nv.cols(), gn)?)?;
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                accumulate(grads, *x, Matrix::filled(xv.rows(), xv.cols(), g.get(0, 0)))?;
            }
        }
        Ok(())
    }

    fn attention_backward(&self, cache: &AttentionCache<T>, g: &Matrix<T>) -> (Matrix<T>, Matrix<T>, Matrix<T>) {
        let (qv, kv, vv) = (self.value(cache.q), self.value(cache.k), self.value(cache.v));
        let l = cache.seq_len;
        let mut gq = Matrix::zeros(qv.rows(), qv.cols());
        let mut gk = Matrix::zeros(kv.rows(), kv.cols());
        let mut gv = Matrix::zeros(vv.rows(), vv.cols());
        let mut dp = vec![T::zero(); l];
        for b in 0..qv.rows() / l {
            let base = b * l;
            for t in 0..l {
                let p_row = &cache.probs[(base + t) * l..(base + t + 1) * l];
                let gt = g.row(base + t);
                let mut inner = T::zero();
                let limit = if cache.causal { t + 1 } else { l };
                for j in 0..limit {
                    if p_row[j] != T::zero() {
                        dp[j] = dot(gt, vv.row(base + j));
                        inner += p_row[j] * dp[j];
                        let p = p_row[j];
                        for (o, &x) in gv.row_mut(base + j).iter_mut().zip(gt) {
                            *o += p * x;
                        }
                    }
                }
                for j in 0..limit {
                    let p = p_row[j];
                    if p == T::zero() {
                        continue;
                    }
                    let ds = p * (dp[j] - inner) * cache.scale;
                    for (o, &x) in gq.row_mut(base + t).iter_mut().zip(kv.row(base + j)) {
                        *o += ds * x;
                    }
                    for (o, &x) in gk.row_mut(base + j).iter_mut().zip(qv.row(base + t)) {
                        *o += ds * x;
                    }
                }
            }
        }
        (gq, gk, gv)
    }
}

fn row_stats<T: Real>(row: &[T], eps: T) -> (T, T) {
    let n = T::of(row.len() as f64);
    let mean = row.iter().copied().sum::<T>() / n;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    (mean, T::one() / (var + eps).sqrt())
}

fn accumulate<T: Real>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
