//! Dense 2-D tensors with reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every forward operation together with the data its
//! backward pass needs; [`Tape::backward`] then walks the record once in
//! reverse creation order, which is a valid topological order because the
//! graph is append-only. Everything is `f64`; every forward result is
//! checked for NaN/Inf and a failure reports the offending operation.
//!
//! A tape and its tensors form one single-threaded unit of work. Parameter
//! snapshots ([`Tensor`] values) are plain data and can be shared freely.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod lstm;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes ({detail})")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: non-finite result")]
    NonFinite { op: &'static str },
    #[error("{op}: row {row} has no valid entries")]
    EmptyMask { op: &'static str, row: usize },
    #[error("{op}: zero-norm vector")]
    ZeroNorm { op: &'static str },
    #[error("backward already ran on this tape; rebuild the forward pass first")]
    BackwardReplay,
    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
}

/// Row-major dense matrix of `f64`. Vectors are `1xN` or `Nx1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must match shape");
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(1, 1, vec![v])
    }

    pub fn row(data: Vec<f64>) -> Self {
        Tensor { rows: 1, cols: data.len(), data }
    }

    pub fn col(data: Vec<f64>) -> Self {
        Tensor { rows: data.len(), cols: 1, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() needs a scalar tensor");
        self.data[0]
    }

    pub fn transposed(&self) -> Tensor {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Tensor { rows: self.cols, cols: self.rows, data }
    }
}

// Fused multiply-add when the target has it; the fallback keeps builds on
// baseline targets from hitting the soft-float fma libcall.
#[cfg(target_feature = "fma")]
#[inline(always)]
fn fma(a: f64, b: f64, c: f64) -> f64 {
    a.mul_add(b, c)
}

#[cfg(not(target_feature = "fma"))]
#[inline(always)]
fn fma(a: f64, b: f64, c: f64) -> f64 {
    a * b + c
}

/// Dot product with eight running sums so the loop vectorizes without
/// reassociating across runs (results stay bit-deterministic).
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let xc = x.chunks_exact(8);
    let yc = y.chunks_exact(8);
    let rx = xc.remainder();
    let ry = yc.remainder();
    for (a, b) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] = fma(a[l], b[l], acc[l]);
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (a, b) in rx.iter().zip(ry) {
        s += a * b;
    }
    s
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o = fma(a, *v, *o);
    }
}

// The batch dimension `m` is small (<= 16) everywhere while the other two
// dimensions reach 256/1024, so each kernel walks the large operand exactly
// once and keeps the small one cache-resident.

/// `out += a[m x k] * b[k x n]`
fn mm_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for l in 0..k {
        let b_row = &b[l * n..(l + 1) * n];
        for i in 0..m {
            axpy(&mut out[i * n..(i + 1) * n], a[i * k + l], b_row);
        }
    }
}

/// `out += a[m x k] * b[n x k]^T`
fn mm_nt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    const JB: usize = 8;
    let mut j0 = 0;
    while j0 < n {
        let j1 = (j0 + JB).min(n);
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for j in j0..j1 {
                out_row[j] += dot(a_row, &b[j * k..(j + 1) * k]);
            }
        }
        j0 = j1;
    }
}

/// `out += a[m x k]^T * b[m x n]`
fn mm_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for l in 0..k {
        let out_row = &mut out[l * n..(l + 1) * n];
        for i in 0..m {
            axpy(out_row, a[i * k + l], &b[i * n..(i + 1) * n]);
        }
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<(), TensorError> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Matmul(Var, Var),
    MatmulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    MeanAll(Var),
    RowScale(Var, Var),
    MaskedSoftmaxRows(Var, Vec<bool>),
    WeightedSqErrSum { pred: Var, target: Tensor, weights: Vec<f64> },
    MeanCosDistRows(Var, Var),
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
    op: Op,
}

/// Append-only record of forward operations with their backward closures.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` loss w.r.t. a leaf, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, op: &'static str, value: Tensor, needs_grad: bool, node_op: Op) -> Result<Var, TensorError> {
        check_finite(op, &value.data)?;
        self.nodes.push(Node { value, grad: None, needs_grad, op: node_op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// New leaf holding `value`; gradients are collected here when
    /// `needs_grad` is set.
    pub fn leaf(&mut self, value: Tensor, needs_grad: bool) -> Result<Var, TensorError> {
        self.push("leaf", value, needs_grad, Op::Leaf)
    }

    /// Constant input: participates in the forward pass only.
    pub fn constant(&mut self, value: Tensor) -> Result<Var, TensorError> {
        self.leaf(value, false)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Result<Var, TensorError> {
        self.constant(Tensor::zeros(rows, cols))
    }

    fn shape_err(op: &'static str, detail: String) -> TensorError {
        TensorError::Shape { op, detail }
    }

    /// `a[m x k] * b[k x n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.value(a).shape();
        let (k2, n) = self.value(b).shape();
        if k != k2 {
            return Err(Self::shape_err("matmul", format!("{m}x{k} * {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        mm_acc(&self.nodes[a.0].value.data, &self.nodes[b.0].value.data, m, k, n, &mut out);
        let needs = self.needs(a) || self.needs(b);
        self.push("matmul", Tensor::from_vec(m, n, out), needs, Op::Matmul(a, b))
    }

    /// `a[m x k] * b[n x k]^T`, the weight-on-the-right orientation used by
    /// the recurrent cells.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.value(a).shape();
        let (n, k2) = self.value(b).shape();
        if k != k2 {
            return Err(Self::shape_err("matmul_nt", format!("{m}x{k} * ({n}x{k2})^T")));
        }
        let mut out = vec![0.0; m * n];
        mm_nt_acc(&self.nodes[a.0].value.data, &self.nodes[b.0].value.data, m, k, n, &mut out);
        let needs = self.needs(a) || self.needs(b);
        self.push("matmul_nt", Tensor::from_vec(m, n, out), needs, Op::MatmulNt(a, b))
    }

    fn zip_same_shape(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        node_op: Op,
    ) -> Result<Var, TensorError> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa != sb {
            return Err(Self::shape_err(op, format!("{}x{} vs {}x{}", sa.0, sa.1, sb.0, sb.1)));
        }
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let needs = self.needs(a) || self.needs(b);
        self.push(op, Tensor::from_vec(sa.0, sa.1, data), needs, node_op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same_shape("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same_shape("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same_shape("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `a[m x n] + b[1 x n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, n) = self.value(a).shape();
        let sb = self.value(b).shape();
        if sb != (1, n) {
            return Err(Self::shape_err("add_row", format!("{m}x{n} + {}x{}", sb.0, sb.1)));
        }
        let brow = &self.nodes[b.0].value.data;
        let mut out = self.nodes[a.0].value.data.clone();
        for r in 0..m {
            for (o, &bv) in out[r * n..(r + 1) * n].iter_mut().zip(brow) {
                *o += bv;
            }
        }
        let needs = self.needs(a) || self.needs(b);
        self.push("add_row", Tensor::from_vec(m, n, out), needs, Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var, TensorError> {
        let (m, n) = self.value(a).shape();
        let data = self.nodes[a.0].value.data.iter().map(|&x| x * k).collect();
        let needs = self.needs(a);
        self.push("scale", Tensor::from_vec(m, n, data), needs, Op::Scale(a, k))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        let (m, n) = self.value(a).shape();
        let data = self.nodes[a.0].value.data.iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect();
        let needs = self.needs(a);
        self.push("sigmoid", Tensor::from_vec(m, n, data), needs, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        let (m, n) = self.value(a).shape();
        let data = self.nodes[a.0].value.data.iter().map(|&x| x.tanh()).collect();
        let needs = self.needs(a);
        self.push("tanh", Tensor::from_vec(m, n, data), needs, Op::Tanh(a))
    }

    /// Columns `lo..hi` as a new tensor.
    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Result<Var, TensorError> {
        let (m, n) = self.value(a).shape();
        if lo >= hi || hi > n {
            return Err(Self::shape_err("slice_cols", format!("{lo}..{hi} of {m}x{n}")));
        }
        let w = hi - lo;
        let src = &self.nodes[a.0].value.data;
        let mut out = Vec::with_capacity(m * w);
        for r in 0..m {
            out.extend_from_slice(&src[r * n + lo..r * n + hi]);
        }
        let needs = self.needs(a);
        self.push("slice_cols", Tensor::from_vec(m, w, out), needs, Op::SliceCols(a, lo))
    }

    /// Concatenate along columns; all parts share the row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(Self::shape_err("concat_cols", "no inputs".into()));
        }
        let m = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.0 != m {
                return Err(Self::shape_err("concat_cols", format!("row mismatch {m} vs {}", s.0)));
            }
            total += s.1;
        }
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                let t = &self.nodes[p.0].value;
                out.extend_from_slice(t.row_slice(r));
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push("concat_cols", Tensor::from_vec(m, total, out), needs, Op::ConcatCols(parts.to_vec()))
    }

    /// Column means: `[m x n] -> [1 x n]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let (m, n) = self.value(a).shape();
        if m == 0 {
            return Err(Self::shape_err("mean_rows", "empty input".into()));
        }
        let src = &self.nodes[a.0].value.data;
        let mut out = vec![0.0; n];
        for r in 0..m {
            axpy(&mut out, 1.0 / m as f64, &src[r * n..(r + 1) * n]);
        }
        let needs = self.needs(a);
        self.push("mean_rows", Tensor::from_vec(1, n, out), needs, Op::MeanRows(a))
    }

    /// Mean of every entry: `[m x n] -> scalar`.
    pub fn mean_all(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Self::shape_err("mean_all", "empty input".into()));
        }
        let mean = t.data.iter().sum::<f64>() / t.len() as f64;
        let needs = self.needs(a);
        self.push("mean_all", Tensor::scalar(mean), needs, Op::MeanAll(a))
    }

    /// Scale row `i` of `a[m x n]` by `s[i]` where `s` is `[m x 1]`.
    pub fn row_scale(&mut self, a: Var, s: Var) -> Result<Var, TensorError> {
        let (m, n) = self.value(a).shape();
        let ss = self.value(s).shape();
        if ss != (m, 1) {
            return Err(Self::shape_err("row_scale", format!("{m}x{n} rows by {}x{}", ss.0, ss.1)));
        }
        let sv = self.nodes[s.0].value.data.clone();
        let src = &self.nodes[a.0].value.data;
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            out.extend(src[r * n..(r + 1) * n].iter().map(|&x| x * sv[r]));
        }
        let needs = self.needs(a) || self.needs(s);
        self.push("row_scale", Tensor::from_vec(m, n, out), needs, Op::RowScale(a, s))
    }

    /// Row-wise softmax over the entries where `mask` is true; masked
    /// entries get weight zero. Uses max-subtraction for stability.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: &[bool]) -> Result<Var, TensorError> {
        let (m, n) = self.value(a).shape();
        if mask.len() != m * n {
            return Err(Self::shape_err(
                "masked_softmax_rows",
                format!("mask length {} for {m}x{n}", mask.len()),
            ));
        }
        let src = &self.nodes[a.0].value.data;
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &src[r * n..(r + 1) * n];
            let rmask = &mask[r * n..(r + 1) * n];
            let mut hi = f64::NEG_INFINITY;
            for (v, &ok) in row.iter().zip(rmask) {
                if ok && *v > hi {
                    hi = *v;
                }
            }
            if hi == f64::NEG_INFINITY {
                return Err(TensorError::EmptyMask { op: "masked_softmax_rows", row: r });
            }
            let mut z = 0.0;
            for (j, (&v, &ok)) in row.iter().zip(rmask).enumerate() {
                if ok {
                    let e = (v - hi).exp();
                    out[r * n + j] = e;
                    z += e;
                }
            }
            for v in &mut out[r * n..(r + 1) * n] {
                *v /= z;
            }
        }
        let needs = self.needs(a);
        self.push(
            "masked_softmax_rows",
            Tensor::from_vec(m, n, out),
            needs,
            Op::MaskedSoftmaxRows(a, mask.to_vec()),
        )
    }

    /// Row-wise softmax with every entry valid.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let (m, n) = self.value(a).shape();
        self.masked_softmax_rows(a, &vec![true; m * n])
    }

    /// `sum_i w_i * sum_j (pred_ij - target_ij)^2` against a constant
    /// target; the per-row weights fold masking and averaging into one op.
    pub fn weighted_sq_err_sum(
        &mut self,
        pred: Var,
        target: &Tensor,
        weights: &[f64],
    ) -> Result<Var, TensorError> {
        let (m, n) = self.value(pred).shape();
        if target.shape() != (m, n) || weights.len() != m {
            return Err(Self::shape_err(
                "weighted_sq_err_sum",
                format!(
                    "pred {m}x{n}, target {}x{}, {} weights",
                    target.rows, target.cols, weights.len()
                ),
            ));
        }
        let src = &self.nodes[pred.0].value.data;
        let mut total = 0.0;
        for r in 0..m {
            if weights[r] == 0.0 {
                continue;
            }
            let mut s = 0.0;
            for (p, t) in src[r * n..(r + 1) * n].iter().zip(target.row_slice(r)) {
                let d = p - t;
                s += d * d;
            }
            total += weights[r] * s;
        }
        let needs = self.needs(pred);
        self.push(
            "weighted_sq_err_sum",
            Tensor::scalar(total),
            needs,
            Op::WeightedSqErrSum { pred, target: target.clone(), weights: weights.to_vec() },
        )
    }

    /// Mean squared error between `pred` and a constant `target` over the
    /// steps (rows) flagged valid in `mask`, averaged over valid entries.
    pub fn mse_steps(&mut self, pred: Var, target: &Tensor, mask: &[bool]) -> Result<Var, TensorError> {
        let (m, n) = self.value(pred).shape();
        if mask.len() != m {
            return Err(Self::shape_err("mse", format!("{} mask flags for {m} rows", mask.len())));
        }
        let valid = mask.iter().filter(|&&b| b).count();
        if valid == 0 {
            return Err(TensorError::EmptyMask { op: "mse", row: 0 });
        }
        let w = 1.0 / (valid * n) as f64;
        let weights: Vec<f64> = mask.iter().map(|&b| if b { w } else { 0.0 }).collect();
        self.weighted_sq_err_sum(pred, target, &weights)
    }

    /// Mean over rows of the cosine distance between row `i` of `a` and row
    /// `i` of `b` (or `b`'s single row when it is `1 x n`).
    pub fn mean_cosine_distance_rows(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, n) = self.value(a).shape();
        let sb = self.value(b).shape();
        if sb.1 != n || (sb.0 != m && sb.0 != 1) {
            return Err(Self::shape_err(
                "mean_cosine_distance_rows",
                format!("{m}x{n} vs {}x{}", sb.0, sb.1),
            ));
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut total = 0.0;
        for r in 0..m {
            let ar = av.row_slice(r);
            let br = bv.row_slice(if sb.0 == 1 { 0 } else { r });
            let na = dot(ar, ar).sqrt();
            let nb = dot(br, br).sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(TensorError::ZeroNorm { op: "mean_cosine_distance_rows" });
            }
            total += 1.0 - dot(ar, br) / (na * nb);
        }
        let needs = self.needs(a) || self.needs(b);
        self.push(
            "mean_cosine_distance_rows",
            Tensor::scalar(total / m as f64),
            needs,
            Op::MeanCosDistRows(a, b),
        )
    }

    /// Reverse pass from a scalar loss. Each reachable node is visited
    /// exactly once; leaf gradients are kept for [`Tape::grad`]. Running it
    /// twice without rebuilding the forward pass is an error.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.backward_done {
            return Err(TensorError::BackwardReplay);
        }
        let (r, c) = self.value(loss).shape();
        if (r, c) != (1, 1) {
            return Err(TensorError::NonScalarLoss { rows: r, cols: c });
        }
        self.backward_done = true;
        if !self.needs(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if matches!(self.nodes[id].op, Op::Leaf) {
                self.nodes[id].grad = Some(g);
                continue;
            }
            self.backprop_node(id, &g, &mut grads);
        }
        Ok(())
    }

    fn acc_grad<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.needs(v) {
            return None;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(vec![0.0; self.nodes[v.0].value.len()]);
        }
        slot.as_mut()
    }

    fn backprop_node(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.nodes[id].op {
            Op::Leaf => unreachable!("leaves are handled by the caller"),
            Op::Matmul(a, b) => {
                let (m, k) = self.value(*a).shape();
                let n = self.value(*b).cols();
                if self.needs(*a) {
                    let bv = &self.nodes[b.0].value.data;
                    let ga = self.acc_grad(grads, *a).unwrap();
                    mm_nt_acc(g, bv, m, n, k, ga);
                }
                if self.needs(*b) {
                    let av = &self.nodes[a.0].value.data;
                    let gb = self.acc_grad(grads, *b).unwrap();
                    mm_tn_acc(av, g, m, k, n, gb);
                }
            }
            Op::MatmulNt(a, b) => {
                let (m, k) = self.value(*a).shape();
                let n = self.value(*b).rows();
                if self.needs(*a) {
                    let bv = &self.nodes[b.0].value.data;
                    let ga = self.acc_grad(grads, *a).unwrap();
                    mm_acc(g, bv, m, n, k, ga);
                }
                if self.needs(*b) {
                    let av = &self.nodes[a.0].value.data;
                    let gb = self.acc_grad(grads, *b).unwrap();
                    mm_tn_acc(g, av, m, k, n, gb);
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.acc_grad(grads, *a) {
                    axpy(ga, 1.0, g);
                }
                if let Some(gb) = self.acc_grad(grads, *b) {
                    axpy(gb, 1.0, g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc_grad(grads, *a) {
                    axpy(ga, 1.0, g);
                }
                if let Some(gb) = self.acc_grad(grads, *b) {
                    axpy(gb, -1.0, g);
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let bv = &self.nodes[b.0].value.data;
                    let ga = self.acc_grad(grads, *a).unwrap();
                    for ((o, &gv), &bvv) in ga.iter_mut().zip(g).zip(bv) {
                        *o = fma(gv, bvv, *o);
                    }
                }
                if self.needs(*b) {
                    let av = &self.nodes[a.0].value.data;
                    let gb = self.acc_grad(grads, *b).unwrap();
                    for ((o, &gv), &avv) in gb.iter_mut().zip(g).zip(av) {
                        *o = fma(gv, avv, *o);
                    }
                }
            }
            Op::AddRow(a, b) => {
                let (m, n) = self.value(*a).shape();
                if let Some(ga) = self.acc_grad(grads, *a) {
                    axpy(ga, 1.0, g);
                }
                if let Some(gb) = self.acc_grad(grads, *b) {
                    for r in 0..m {
                        axpy(gb, 1.0, &g[r * n..(r + 1) * n]);
                    }
                }
            }
            Op::Scale(a, k) => {
                if let Some(ga) = self.acc_grad(grads, *a) {
                    axpy(ga, *k, g);
                }
            }
            Op::Sigmoid(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[id].value.data;
                    let ga = self.acc_grad(grads, *a).unwrap();
                    for ((o, &gv), &yv) in ga.iter_mut().zip(g).zip(y) {
                        *o = fma(gv, yv * (1.0 - yv), *o);
                    }
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[id].value.data;
                    let ga = self.acc_grad(grads, *a).unwrap();
                    for ((o, &gv), &yv) in ga.iter_mut().zip(g).zip(y) {
                        *o = fma(gv, 1.0 - yv * yv, *o);
                    }
                }
            }
            Op::SliceCols(a, lo) => {
                let (m, w) = self.nodes[id].value.shape();
                let n = self.value(*a).cols();
                let lo = *lo;
                if let Some(ga) = self.acc_grad(grads, *a) {
                    for r in 0..m {
                        axpy(&mut ga[r * n + lo..r * n + lo + w], 1.0, &g[r * w..(r + 1) * w]);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let m = self.nodes[id].value.rows();
                let total = self.nodes[id].value.cols();
                let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
                let mut off = 0;
                for (&p, &w) in parts.iter().zip(&widths) {
                    if let Some(gp) = self.acc_grad(grads, p) {
                        for r in 0..m {
                            axpy(&mut gp[r * w..(r + 1) * w], 1.0, &g[r * total + off..r * total + off + w]);
                        }
                    }
                    off += w;
                }
            }
            Op::MeanRows(a) => {
                let (m, n) = self.value(*a).shape();
                if let Some(ga) = self.acc_grad(grads, *a) {
                    for r in 0..m {
                        axpy(&mut ga[r * n..(r + 1) * n], 1.0 / m as f64, g);
                    }
                }
            }
            Op::MeanAll(a) => {
                let len = self.value(*a).len();
                if let Some(ga) = self.acc_grad(grads, *a) {
                    let gv = g[0] / len as f64;
                    for o in ga.iter_mut() {
                        *o += gv;
                    }
                }
            }
            Op::RowScale(a, s) => {
                let (m, n) = self.value(*a).shape();
                if self.needs(*a) {
                    let sv = &self.nodes[s.0].value.data;
                    let ga = self.acc_grad(grads, *a).unwrap();
                    for r in 0..m {
                        axpy(&mut ga[r * n..(r + 1) * n], sv[r], &g[r * n..(r + 1) * n]);
                    }
                }
                if self.needs(*s) {
                    let av = &self.nodes[a.0].value.data;
                    let gs = self.acc_grad(grads, *s).unwrap();
                    for r in 0..m {
                        gs[r] += dot(&g[r * n..(r + 1) * n], &av[r * n..(r + 1) * n]);
                    }
                }
            }
            Op::MaskedSoftmaxRows(a, mask) => {
                let (m, n) = self.nodes[id].value.shape();
                if self.needs(*a) {
                    let y = &self.nodes[id].value.data;
                    let ga = self.acc_grad(grads, *a).unwrap();
                    for r in 0..m {
                        let yr = &y[r * n..(r + 1) * n];
                        let gr = &g[r * n..(r + 1) * n];
                        let inner = dot(gr, yr);
                        for j in 0..n {
                            if mask[r * n + j] {
                                ga[r * n + j] += yr[j] * (gr[j] - inner);
                            }
                        }
                    }
                }
            }
            Op::WeightedSqErrSum { pred, target, weights } => {
                let (m, n) = self.value(*pred).shape();
                if self.needs(*pred) {
                    let pv = &self.nodes[pred.0].value.data;
                    let gp = self.acc_grad(grads, *pred).unwrap();
                    let up = g[0];
                    for r in 0..m {
                        let w = weights[r];
                        if w == 0.0 {
                            continue;
                        }
                        let scale = up * 2.0 * w;
                        for j in 0..n {
                            gp[r * n + j] = fma(scale, pv[r * n + j] - target.get(r, j), gp[r * n + j]);
                        }
                    }
                }
            }
            Op::MeanCosDistRows(a, b) => {
                let (m, n) = self.value(*a).shape();
                let b_broadcast = self.value(*b).rows() == 1;
                let av = &self.nodes[a.0].value.data;
                let bv = &self.nodes[b.0].value.data;
                let up = g[0] / m as f64;
                for r in 0..m {
                    let ar = &av[r * n..(r + 1) * n];
                    let boff = if b_broadcast { 0 } else { r * n };
                    let br = &bv[boff..boff + n];
                    let na = dot(ar, ar).sqrt();
                    let nb = dot(br, br).sqrt();
                    let cos = dot(ar, br) / (na * nb);
                    if self.needs(*a) {
                        let ga = self.acc_grad(grads, *a).unwrap();
                        let gr = &mut ga[r * n..(r + 1) * n];
                        for j in 0..n {
                            let dcos = br[j] / (na * nb) - cos * ar[j] / (na * na);
                            gr[j] += -up * dcos;
                        }
                    }
                    if self.needs(*b) {
                        let gb = self.acc_grad(grads, *b).unwrap();
                        let gr = &mut gb[boff..boff + n];
                        for j in 0..n {
                            let dcos = ar[j] / (na * nb) - cos * br[j] / (nb * nb);
                            gr[j] += -up * dcos;
                        }
                    }
                }
            }
        }
    }
}

/// Eager cosine distance `1 - u.v/(|u||v|)`, in `[0, 2]`.
///
/// A zero-norm input is an error rather than a convention value so that a
/// collapsed encoding surfaces during training instead of clustering
/// silently.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, TensorError> {
    if u.len() != v.len() {
        return Err(TensorError::Shape {
            op: "cosine_distance",
            detail: format!("{} vs {}", u.len(), v.len()),
        });
    }
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(TensorError::ZeroNorm { op: "cosine_distance" });
    }
    Ok(1.0 - dot(u, v) / (nu * nv))
}

/// Eager mean squared error over the steps flagged valid in `mask`.
pub fn mse(a: &[Vec<f64>], b: &[Vec<f64>], mask: &[bool]) -> Result<f64, TensorError> {
    if a.len() != b.len() || a.len() != mask.len() {
        return Err(TensorError::Shape {
            op: "mse",
            detail: format!("{} vs {} steps, {} flags", a.len(), b.len(), mask.len()),
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for ((av, bv), &ok) in a.iter().zip(b).zip(mask) {
        if !ok {
            continue;
        }
        if av.len() != bv.len() {
            return Err(TensorError::Shape {
                op: "mse",
                detail: format!("step dims {} vs {}", av.len(), bv.len()),
            });
        }
        for (x, y) in av.iter().zip(bv) {
            let d = x - y;
            total += d * d;
        }
        count += av.len();
    }
    if count == 0 {
        return Err(TensorError::EmptyMask { op: "mse", row: 0 });
    }
    Ok(total / count as f64)
}
