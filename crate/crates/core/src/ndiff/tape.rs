use std::rc::Rc;

use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    /// `a / (b + eps)`
    Div(f64),
}

/// How the right operand of a binary op is broadcast against the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// rhs holds one value per column.
    Row,
    /// rhs holds one value per row.
    Col,
    Scalar,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Bmm {
        a: Var,
        b: Var,
        trans_a: bool,
        batch: usize,
        n: usize,
        m: usize,
        p: usize,
    },
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
        bcast: Broadcast,
    },
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Sqrt(Var),
    Log {
        x: Var,
        eps: f64,
    },
    Pow {
        x: Var,
        p: f64,
    },
    Affine {
        x: Var,
        scale: f64,
    },
    SumAll(Var),
    SumAxis {
        x: Var,
        axis: usize,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Reshape(Var),
    GatherRows {
        x: Var,
        idx: Rc<Vec<usize>>,
    },
    SegmentSum {
        x: Var,
        seg: Rc<Vec<usize>>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    NormSoftmax {
        x: Var,
        argmax: Vec<usize>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        row_mask: Vec<bool>,
        training: bool,
    },
    EdgeAggregate {
        x: Var,
        weights: Option<Var>,
        src: Rc<Vec<usize>>,
        dst: Rc<Vec<usize>>,
    },
    Pick {
        x: Var,
        idx: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Batch statistics of one training-mode batch-norm call, returned so the
/// caller can fold them into running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance when more than one row contributed.
    pub var: Vec<f64>,
}

/// Running statistics used by batch norm in evaluation mode.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(dim: usize) -> Self {
        Self {
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn update(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, &b) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(&stats.var) {
            *r = (1.0 - m) * *r + m * b;
        }
    }
}

/// Gradients of a scalar root with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// Records operations during a forward pass and replays them in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// `c = a·b (+ c if accumulate)` for row-major blocks with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    // SAFETY: callers pass slices whose extents cover the strided m×k, k×n and
    // m×n blocks; `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn rc(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.rows_cols()
    }

    /// Records a constant (or a differentiable input when gradients are read
    /// back through [`Gradients::wrt`]).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.get(id).value.clone();
        self.push(value, Op::Param(id))
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (n, m, p) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; n * p];
        gemm(
            n,
            m,
            p,
            self.value(a).data(),
            m as isize,
            1,
            self.value(b).data(),
            p as isize,
            1,
            &mut out,
            false,
        );
        Ok(self.push(Tensor::new(vec![n, p], out)?, Op::MatMul(a, b)))
    }

    /// Batched matrix product of `[B, n, m]` by `[B, m, p]`. With `trans_a`
    /// the left operand is stored as `[B, m, n]` and used transposed.
    pub fn bmm(&mut self, a: Var, b: Var, trans_a: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(Error::shape("bmm", &sa, &sb));
        }
        let (batch, n, m) = if trans_a {
            (sa[0], sa[2], sa[1])
        } else {
            (sa[0], sa[1], sa[2])
        };
        if m != sb[1] {
            return Err(Error::shape("bmm", &sa, &sb));
        }
        let p = sb[2];
        let mut out = vec![0.0; batch * n * p];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for t in 0..batch {
            let ablk = &ad[t * n * m..(t + 1) * n * m];
            let bblk = &bd[t * m * p..(t + 1) * m * p];
            let (rsa, csa) = if trans_a { (1, n as isize) } else { (m as isize, 1) };
            gemm(
                n,
                m,
                p,
                ablk,
                rsa,
                csa,
                bblk,
                p as isize,
                1,
                &mut out[t * n * p..(t + 1) * n * p],
                false,
            );
        }
        let op = Op::Bmm {
            a,
            b,
            trans_a,
            batch,
            n,
            m,
            p,
        };
        Ok(self.push(Tensor::new(vec![batch, n, p], out)?, op))
    }

    // ---- elementwise ----

    fn broadcast_kind(&self, a: Var, b: Var, op: &'static str) -> Result<Broadcast> {
        let ta = self.value(a);
        let tb = self.value(b);
        if ta.shape() == tb.shape() {
            return Ok(Broadcast::Same);
        }
        if tb.len() == 1 {
            return Ok(Broadcast::Scalar);
        }
        let (rows, cols) = ta.rows_cols();
        let sb = tb.shape();
        let is_row = tb.len() == cols && (sb.len() == 1 || (sb.len() == 2 && sb[0] == 1));
        let is_col = tb.len() == rows && *sb.last().unwrap() == 1;
        if is_row && !ta.is_empty() {
            Ok(Broadcast::Row)
        } else if is_col {
            Ok(Broadcast::Col)
        } else if ta.len() == tb.len() {
            Ok(Broadcast::Same)
        } else {
            Err(Error::shape(op, ta.shape(), sb))
        }
    }

    pub fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let bcast = self.broadcast_kind(a, b, "binary")?;
        let ta = self.value(a);
        let tb = self.value(b).data();
        let (_, cols) = ta.rows_cols();
        let f = |x: f64, y: f64| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
            BinaryKind::Div(eps) => x / (y + eps),
        };
        let out: Vec<f64> = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match bcast {
                    Broadcast::Same => tb[i],
                    Broadcast::Row => tb[i % cols],
                    Broadcast::Col => tb[i / cols],
                    Broadcast::Scalar => tb[0],
                };
                f(x, y)
            })
            .collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Binary { kind, a, b, bcast }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    /// `a / (b + eps)`.
    pub fn div(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        self.binary(BinaryKind::Div(eps), a, b)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let out: Vec<f64> = t.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        self.push(value, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, stable_sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    /// Square root with a zero subgradient at 0.
    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0).sqrt(), Op::Sqrt(x))
    }

    /// `ln(x + eps)`; inputs are clamped at `-eps` side to stay finite.
    pub fn log(&mut self, x: Var, eps: f64) -> Var {
        self.unary(x, move |v| (v + eps).max(f64::MIN_POSITIVE).ln(), Op::Log { x, eps })
    }

    /// `x^p` for non-negative `x`.
    pub fn pow(&mut self, x: Var, p: f64) -> Var {
        self.unary(x, move |v| v.max(0.0).powf(p), Op::Pow { x, p })
    }

    /// `scale·x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.unary(x, move |v| scale * v + shift, Op::Affine { x, scale })
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 0.0)
    }

    // ---- reductions and reshaping ----

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Sums a matrix over `axis` (0: down the rows → `[1, cols]`,
    /// 1: across the columns → `[rows, 1]`).
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = t.rows_cols();
        let d = t.data();
        let value = match axis {
            0 => {
                let mut out = vec![0.0; cols];
                for r in 0..rows {
                    for (o, v) in out.iter_mut().zip(&d[r * cols..(r + 1) * cols]) {
                        *o += v;
                    }
                }
                Tensor::new(vec![1, cols], out)?
            }
            1 => {
                let out = (0..rows).map(|r| d[r * cols..(r + 1) * cols].iter().sum()).collect();
                Tensor::new(vec![rows, 1], out)?
            }
            _ => return Err(Error::shape("sum_axis", t.shape(), &[axis])),
        };
        Ok(self.push(value, Op::SumAxis { x, axis }))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (rows, cols) = self.rc(x);
        let n = if axis == 0 { rows } else { cols };
        let s = self.sum_axis(x, axis)?;
        Ok(self.scale(s, 1.0 / n.max(1) as f64))
    }

    /// Concatenates matrices along rows (`axis = 0`) or columns (`axis = 1`).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        let dims: Vec<(usize, usize)> = parts.iter().map(|&p| self.rc(p)).collect();
        let value = match axis {
            0 => {
                let cols = dims[0].1;
                let mut out = Vec::new();
                for (&p, &(_, c)) in parts.iter().zip(&dims) {
                    if c != cols {
                        return Err(Error::shape("concat", &[cols], &[c]));
                    }
                    out.extend_from_slice(self.value(p).data());
                }
                let rows = dims.iter().map(|d| d.0).sum();
                Tensor::new(vec![rows, cols], out)?
            }
            1 => {
                let rows = dims[0].0;
                if let Some(&(r, _)) = dims.iter().find(|d| d.0 != rows) {
                    return Err(Error::shape("concat", &[rows], &[r]));
                }
                let total: usize = dims.iter().map(|d| d.1).sum();
                let mut out = vec![0.0; rows * total];
                let mut offset = 0;
                for (&p, &(_, c)) in parts.iter().zip(&dims) {
                    let d = self.value(p).data();
                    for r in 0..rows {
                        out[r * total + offset..r * total + offset + c].copy_from_slice(&d[r * c..(r + 1) * c]);
                    }
                    offset += c;
                }
                Tensor::new(vec![rows, total], out)?
            }
            _ => return Err(Error::shape("concat", &[axis], &[0, 1])),
        };
        let op = Op::Concat {
            parts: parts.to_vec(),
            axis,
        };
        Ok(self.push(value, op))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.rc(x);
        if start + len > cols {
            return Err(Error::shape("slice_cols", &[rows, cols], &[start, len]));
        }
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&d[r * cols + start..r * cols + start + len]);
        }
        Ok(self.push(Tensor::new(vec![rows, len], out)?, Op::SliceCols { x, start }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// `out[r] = x[idx[r]]` (rows of a matrix).
    pub fn gather_rows(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Result<Var> {
        let (rows, cols) = self.rc(x);
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &i in idx.iter() {
            if i >= rows {
                return Err(Error::shape("gather_rows", &[rows], &[i]));
            }
            out.extend_from_slice(&d[i * cols..(i + 1) * cols]);
        }
        let value = Tensor::new(vec![idx.len(), cols], out)?;
        Ok(self.push(value, Op::GatherRows { x, idx }))
    }

    /// `out[seg[r]] += x[r]`, producing `segments` rows.
    pub fn segment_sum(&mut self, x: Var, seg: Rc<Vec<usize>>, segments: usize) -> Result<Var> {
        let (rows, cols) = self.rc(x);
        if seg.len() != rows {
            return Err(Error::shape("segment_sum", &[rows], &[seg.len()]));
        }
        let d = self.value(x).data();
        let mut out = vec![0.0; segments * cols];
        for (r, &s) in seg.iter().enumerate() {
            if s >= segments {
                return Err(Error::shape("segment_sum", &[segments], &[s]));
            }
            for c in 0..cols {
                out[s * cols + c] += d[r * cols + c];
            }
        }
        let value = Tensor::new(vec![segments, cols], out)?;
        Ok(self.push(value, Op::SegmentSum { x, seg }))
    }

    /// Picks one entry per row: `out[r] = x[r, idx[r]]`, shape `[rows, 1]`.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (rows, cols) = self.rc(x);
        if idx.len() != rows {
            return Err(Error::shape("pick", &[rows], &[idx.len()]));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= cols) {
            return Err(Error::Contract(format!("index {bad} out of range for {cols} columns")));
        }
        let d = self.value(x).data();
        let out = idx.iter().enumerate().map(|(r, &i)| d[r * cols + i]).collect();
        let value = Tensor::new(vec![rows, 1], out)?;
        Ok(self.push(value, Op::Pick { x, idx: idx.to_vec() }))
    }

    // ---- normalisations ----

    fn expand_mask(&self, x: Var, mask: Option<&[bool]>, op: &'static str) -> Result<Vec<bool>> {
        let (rows, cols) = self.rc(x);
        match mask {
            None => Ok(vec![true; rows * cols]),
            Some(m) if m.len() == rows => Ok((0..rows * cols).map(|i| m[i / cols]).collect()),
            Some(m) if m.len() == rows * cols => Ok(m.to_vec()),
            Some(m) => Err(Error::shape(op, &[rows, cols], &[m.len()])),
        }
    }

    /// Softmax over the last dimension. `mask` is either one flag per row or
    /// one per entry; excluded entries output 0, and a row with no valid
    /// entries is all zeros.
    pub fn softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let valid = self.expand_mask(x, mask, "softmax")?;
        let t = self.value(x);
        let (rows, cols) = t.rows_cols();
        let d = t.data();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &d[r * cols..(r + 1) * cols];
            let ok = &valid[r * cols..(r + 1) * cols];
            let max = row
                .iter()
                .zip(ok)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for c in 0..cols {
                if ok[c] {
                    let e = (row[c] - max).exp();
                    out[r * cols + c] = e;
                    total += e;
                }
            }
            for v in &mut out[r * cols..(r + 1) * cols] {
                *v /= total;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Softmax(x)))
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (rows, cols) = t.rows_cols();
        let d = t.data();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &d[r * cols..(r + 1) * cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for c in 0..cols {
                out[r * cols + c] = row[c] - lse;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::LogSoftmax(x))
    }

    /// Softmax divided by its row maximum, i.e. `exp(x - max(x))` per row:
    /// entries in (0, 1] with the dominant entry exactly 1. Rows excluded by
    /// `row_mask` are zero.
    pub fn normalized_softmax(&mut self, x: Var, row_mask: Option<&[bool]>) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = t.rows_cols();
        if let Some(m) = row_mask {
            if m.len() != rows {
                return Err(Error::shape("normalized_softmax", &[rows], &[m.len()]));
            }
        }
        let d = t.data();
        let mut out = vec![0.0; rows * cols];
        let mut argmax = vec![usize::MAX; rows];
        for r in 0..rows {
            if row_mask.is_some_and(|m| !m[r]) || cols == 0 {
                continue;
            }
            let row = &d[r * cols..(r + 1) * cols];
            let mut best = 0;
            for c in 1..cols {
                if row[c] > row[best] {
                    best = c;
                }
            }
            argmax[r] = best;
            for c in 0..cols {
                out[r * cols + c] = if c == best { 1.0 } else { (row[c] - row[best]).exp() };
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        Ok(self.push(value, Op::NormSoftmax { x, argmax }))
    }

    /// Batch normalisation over the rows of `x` selected by `row_mask`.
    ///
    /// Training mode normalises by the masked batch statistics and returns
    /// them; evaluation mode uses `state`'s running statistics. Masked rows
    /// output zero.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        row_mask: &[bool],
        state: &BatchNormState,
        training: bool,
    ) -> Result<(Var, Option<BatchStats>)> {
        let (rows, d) = self.rc(x);
        if state.running_mean.len() != d || self.value(gamma).len() != d || self.value(beta).len() != d {
            return Err(Error::shape("batch_norm", &[rows, d], &[state.running_mean.len()]));
        }
        if row_mask.len() != rows {
            return Err(Error::shape("batch_norm", &[rows], &[row_mask.len()]));
        }
        let xd = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let count = row_mask.iter().filter(|&&m| m).count();
        let (mean, inv_std, stats) = if training {
            if count == 0 {
                return Err(Error::Contract("batch norm over zero rows".into()));
            }
            let mut mean = vec![0.0; d];
            for r in (0..rows).filter(|&r| row_mask[r]) {
                for c in 0..d {
                    mean[c] += xd[r * d + c];
                }
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            let mut var = vec![0.0; d];
            for r in (0..rows).filter(|&r| row_mask[r]) {
                for c in 0..d {
                    let dv = xd[r * d + c] - mean[c];
                    var[c] += dv * dv;
                }
            }
            let inv_std: Vec<f64> = var
                .iter()
                .map(|v| 1.0 / (v / count as f64 + state.eps).sqrt())
                .collect();
            let unbiased = var.iter().map(|v| v / (count.max(2) - 1) as f64).collect();
            let stats = BatchStats {
                mean: mean.clone(),
                var: unbiased,
            };
            (mean, inv_std, Some(stats))
        } else {
            let inv_std = state.running_var.iter().map(|v| 1.0 / (v + state.eps).sqrt()).collect();
            (state.running_mean.clone(), inv_std, None)
        };
        let mut xhat = vec![0.0; rows * d];
        let mut out = vec![0.0; rows * d];
        for r in (0..rows).filter(|&r| row_mask[r]) {
            for c in 0..d {
                let h = (xd[r * d + c] - mean[c]) * inv_std[c];
                xhat[r * d + c] = h;
                out[r * d + c] = g[c] * h + b[c];
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            row_mask: row_mask.to_vec(),
            training,
        };
        Ok((self.push(value, op), stats))
    }

    /// Weighted neighbourhood sum over an edge list:
    /// `out[dst[e]] += w[e] · x[src[e]]` (unit weights when `weights` is None).
    pub fn edge_aggregate(
        &mut self,
        x: Var,
        weights: Option<Var>,
        src: Rc<Vec<usize>>,
        dst: Rc<Vec<usize>>,
    ) -> Result<Var> {
        let (rows, cols) = self.rc(x);
        if src.len() != dst.len() {
            return Err(Error::shape("edge_aggregate", &[src.len()], &[dst.len()]));
        }
        if let Some(w) = weights {
            if self.value(w).len() != src.len() {
                return Err(Error::shape("edge_aggregate", &[src.len()], self.shape(w)));
            }
        }
        if src.iter().chain(dst.iter()).any(|&i| i >= rows) {
            return Err(Error::Contract("edge endpoint out of range".into()));
        }
        let d = self.value(x).data();
        let w = weights.map(|w| self.value(w).data());
        let mut out = vec![0.0; rows * cols];
        for e in 0..src.len() {
            let we = w.map_or(1.0, |w| w[e]);
            let (s, t) = (src[e], dst[e]);
            for c in 0..cols {
                out[t * cols + c] += we * d[s * cols + c];
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        let op = Op::EdgeAggregate { x, weights, src, dst };
        Ok(self.push(value, op))
    }

    // ---- reverse pass ----

    /// Reverse-mode sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Tape::backward`] and adds each parameter's gradient into the store.
    pub fn backward_params(&self, root: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(root)?;
        for (i, node) in self.nodes.iter().enumerate().take(root.0 + 1) {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                let p = store.get_mut(*id);
                for (a, b) in p.grad.data_mut().iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        Ok(grads)
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let sa = self.shape(*a);
                let (n, m) = (sa[0], sa[1]);
                let p = self.shape(*b)[1];
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                // dA = G·Bᵀ
                let ga = accumulate(grads, *a, n * m);
                gemm(n, p, m, g, p as isize, 1, bd, 1, p as isize, ga, true);
                // dB = Aᵀ·G
                let gb = accumulate(grads, *b, m * p);
                gemm(m, n, p, ad, 1, m as isize, g, p as isize, 1, gb, true);
            }
            Op::Bmm {
                a,
                b,
                trans_a,
                batch,
                n,
                m,
                p,
            } => {
                let (batch, n, m, p) = (*batch, *n, *m, *p);
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                {
                    let ga = accumulate(grads, *a, batch * n * m);
                    for t in 0..batch {
                        let gblk = &g[t * n * p..(t + 1) * n * p];
                        let bblk = &bd[t * m * p..(t + 1) * m * p];
                        let gablk = &mut ga[t * n * m..(t + 1) * n * m];
                        if *trans_a {
                            // stored [m×n]: dA = B·Gᵀ
                            gemm(m, p, n, bblk, p as isize, 1, gblk, 1, p as isize, gablk, true);
                        } else {
                            gemm(n, p, m, gblk, p as isize, 1, bblk, 1, p as isize, gablk, true);
                        }
                    }
                }
                let gb = accumulate(grads, *b, batch * m * p);
                for t in 0..batch {
                    let gblk = &g[t * n * p..(t + 1) * n * p];
                    let ablk = &ad[t * n * m..(t + 1) * n * m];
                    let gbblk = &mut gb[t * m * p..(t + 1) * m * p];
                    if *trans_a {
                        // A_eff = storedᵀ, so A_effᵀ = stored [m×n]
                        gemm(m, n, p, ablk, n as isize, 1, gblk, p as isize, 1, gbblk, true);
                    } else {
                        gemm(m, n, p, ablk, 1, m as isize, gblk, p as isize, 1, gbblk, true);
                    }
                }
            }
            Op::Binary { kind, a, b, bcast } => {
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                let (_, cols) = self.value(*a).rows_cols();
                let bidx = |i: usize| match bcast {
                    Broadcast::Same => i,
                    Broadcast::Row => i % cols,
                    Broadcast::Col => i / cols,
                    Broadcast::Scalar => 0,
                };
                {
                    let ga = accumulate(grads, *a, ad.len());
                    for i in 0..g.len() {
                        ga[i] += match kind {
                            BinaryKind::Add | BinaryKind::Sub => g[i],
                            BinaryKind::Mul => g[i] * bd[bidx(i)],
                            BinaryKind::Div(eps) => g[i] / (bd[bidx(i)] + eps),
                        };
                    }
                }
                let gb = accumulate(grads, *b, bd.len());
                for i in 0..g.len() {
                    let j = bidx(i);
                    gb[j] += match kind {
                        BinaryKind::Add => g[i],
                        BinaryKind::Sub => -g[i],
                        BinaryKind::Mul => g[i] * ad[i],
                        BinaryKind::Div(eps) => {
                            let den = bd[j] + eps;
                            -g[i] * ad[i] / (den * den)
                        }
                    };
                }
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                let gx = accumulate(grads, *x, xd.len());
                for k in 0..g.len() {
                    if xd[k] > 0.0 {
                        gx[k] += g[k];
                    }
                }
            }
            Op::Sigmoid(x) => {
                let gx = accumulate(grads, *x, y.len());
                for k in 0..g.len() {
                    gx[k] += g[k] * y[k] * (1.0 - y[k]);
                }
            }
            Op::Exp(x) => {
                let gx = accumulate(grads, *x, y.len());
                for k in 0..g.len() {
                    gx[k] += g[k] * y[k];
                }
            }
            Op::Sqrt(x) => {
                let gx = accumulate(grads, *x, y.len());
                for k in 0..g.len() {
                    if y[k] > 0.0 {
                        gx[k] += g[k] / (2.0 * y[k]);
                    }
                }
            }
            Op::Log { x, eps } => {
                let xd = self.value(*x).data();
                let gx = accumulate(grads, *x, xd.len());
                for k in 0..g.len() {
                    gx[k] += g[k] / (xd[k] + eps).max(f64::MIN_POSITIVE);
                }
            }
            Op::Pow { x, p } => {
                let xd = self.value(*x).data();
                let gx = accumulate(grads, *x, xd.len());
                for k in 0..g.len() {
                    let v = xd[k].max(0.0);
                    if v > 0.0 || *p >= 1.0 {
                        gx[k] += g[k] * p * v.powf(p - 1.0);
                    }
                }
            }
            Op::Affine { x, scale } => {
                let gx = accumulate(grads, *x, g.len());
                for k in 0..g.len() {
                    gx[k] += g[k] * scale;
                }
            }
            Op::SumAll(x) => {
                let n = self.value(*x).len();
                let gx = accumulate(grads, *x, n);
                gx.iter_mut().for_each(|v| *v += g[0]);
            }
            Op::SumAxis { x, axis } => {
                let (rows, cols) = self.rc(*x);
                let gx = accumulate(grads, *x, rows * cols);
                for r in 0..rows {
                    for c in 0..cols {
                        gx[r * cols + c] += if *axis == 0 { g[c] } else { g[r] };
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let (_, total) = node.value.rows_cols();
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.rc(p);
                    let gp = accumulate(grads, p, rows * cols);
                    if *axis == 0 {
                        for k in 0..rows * cols {
                            gp[k] += g[offset + k];
                        }
                        offset += rows * cols;
                    } else {
                        for r in 0..rows {
                            for c in 0..cols {
                                gp[r * cols + c] += g[r * total + offset + c];
                            }
                        }
                        offset += cols;
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let (rows, cols) = self.rc(*x);
                let (_, len) = node.value.rows_cols();
                let gx = accumulate(grads, *x, rows * cols);
                for r in 0..rows {
                    for c in 0..len {
                        gx[r * cols + start + c] += g[r * len + c];
                    }
                }
            }
            Op::Reshape(x) => {
                let gx = accumulate(grads, *x, g.len());
                for k in 0..g.len() {
                    gx[k] += g[k];
                }
            }
            Op::GatherRows { x, idx } => {
                let (rows, cols) = self.rc(*x);
                let gx = accumulate(grads, *x, rows * cols);
                for (r, &i) in idx.iter().enumerate() {
                    for c in 0..cols {
                        gx[i * cols + c] += g[r * cols + c];
                    }
                }
            }
            Op::SegmentSum { x, seg } => {
                let (rows, cols) = self.rc(*x);
                let gx = accumulate(grads, *x, rows * cols);
                for (r, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        gx[r * cols + c] += g[s * cols + c];
                    }
                }
            }
            Op::Pick { x, idx } => {
                let (rows, cols) = self.rc(*x);
                let gx = accumulate(grads, *x, rows * cols);
                for (r, &i) in idx.iter().enumerate() {
                    gx[r * cols + i] += g[r];
                }
            }
            Op::Softmax(x) => {
                let (rows, cols) = self.rc(*x);
                let gx = accumulate(grads, *x, rows * cols);
                for r in 0..rows {
                    let yr = &y[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        gx[r * cols + c] += yr[c] * (gr[c] - dot);
                    }
                }
            }
            Op::LogSoftmax(x) => {
                let (rows, cols) = self.rc(*x);
                let gx = accumulate(grads, *x, rows * cols);
                for r in 0..rows {
                    let gr = &g[r * cols..(r + 1) * cols];
                    let total: f64 = gr.iter().sum();
                    for c in 0..cols {
                        gx[r * cols + c] += gr[c] - y[r * cols + c].exp() * total;
                    }
                }
            }
            Op::NormSoftmax { x, argmax } => {
                let (rows, cols) = self.rc(*x);
                let gx = accumulate(grads, *x, rows * cols);
                for r in 0..rows {
                    let best = argmax[r];
                    if best == usize::MAX {
                        continue;
                    }
                    let yr = &y[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        gx[r * cols + c] += gr[c] * yr[c];
                    }
                    gx[r * cols + best] -= dot;
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                row_mask,
                training,
            } => {
                let (rows, d) = self.rc(*x);
                let gam = self.value(*gamma).data();
                let valid: Vec<usize> = (0..rows).filter(|&r| row_mask[r]).collect();
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for &r in &valid {
                    for c in 0..d {
                        dgamma[c] += g[r * d + c] * xhat[r * d + c];
                        dbeta[c] += g[r * d + c];
                    }
                }
                {
                    let gx = accumulate(grads, *x, rows * d);
                    if *training {
                        let m = valid.len() as f64;
                        for &r in &valid {
                            for c in 0..d {
                                let dxhat = g[r * d + c] * gam[c];
                                // Σ dxhat = γ·dβ, Σ dxhat·xhat = γ·dγ
                                gx[r * d + c] += inv_std[c] / m
                                    * (m * dxhat - gam[c] * dbeta[c] - xhat[r * d + c] * gam[c] * dgamma[c]);
                            }
                        }
                    } else {
                        for &r in &valid {
                            for c in 0..d {
                                gx[r * d + c] += g[r * d + c] * gam[c] * inv_std[c];
                            }
                        }
                    }
                }
                let gg = accumulate(grads, *gamma, d);
                for c in 0..d {
                    gg[c] += dgamma[c];
                }
                let gb = accumulate(grads, *beta, d);
                for c in 0..d {
                    gb[c] += dbeta[c];
                }
            }
            Op::EdgeAggregate { x, weights, src, dst } => {
                let (rows, cols) = self.rc(*x);
                let w = weights.map(|w| self.value(w).data());
                {
                    let gx = accumulate(grads, *x, rows * cols);
                    for e in 0..src.len() {
                        let we = w.map_or(1.0, |w| w[e]);
                        let (s, t) = (src[e], dst[e]);
                        for c in 0..cols {
                            gx[s * cols + c] += we * g[t * cols + c];
                        }
                    }
                }
                if let Some(wv) = weights {
                    let xd = self.value(*x).data();
                    let gw = accumulate(grads, *wv, src.len());
                    for e in 0..src.len() {
                        let (s, t) = (src[e], dst[e]);
                        let mut acc = 0.0;
                        for c in 0..cols {
                            acc += g[t * cols + c] * xd[s * cols + c];
                        }
                        gw[e] += acc;
                    }
                }
            }
        }
    }
}
