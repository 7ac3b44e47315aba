//! Tape-based reverse-mode differentiation over 2-D tensors.

use std::collections::HashMap;

use super::params::{Gradients, ParamId, ParamStore};
use super::{gelu, gemm, shape_err, NnError, Scalar, Tensor};

const LN_EPS: f64 = 1e-5;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Attention mask for [`Graph::softmax`].
#[derive(Debug, Clone, PartialEq)]
pub enum Mask {
    None,
    /// Row `i` may see columns `j <= i + (cols - rows)`.
    Causal,
    /// Row-major `[rows x cols]`, true where attention is allowed.
    Allowed(Vec<bool>),
}

impl Mask {
    fn allowed(&self, rows: usize, cols: usize, i: usize, j: usize) -> bool {
        match self {
            Mask::None => true,
            Mask::Causal => j + rows <= i + cols,
            Mask::Allowed(m) => m[i * cols + j],
        }
    }
}

enum Value<'p, T> {
    Owned(Tensor<T>),
    Borrowed(&'p Tensor<T>),
}

enum Op<T> {
    Leaf,
    Param,
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Gelu(usize),
    LayerNorm { a: usize, gamma: usize, beta: usize, xhat: Vec<T>, rstd: Vec<T> },
    Softmax(usize),
    Gather { table: usize, idx: Vec<usize> },
    Scatter { base: usize, src: usize, rows: Vec<usize> },
    SliceRows { a: usize, start: usize },
    SliceCols { a: usize, start: usize },
    ConcatCols(Vec<usize>),
    Sum(usize),
    CrossEntropy { logits: usize, targets: Vec<usize>, probs: Vec<T> },
    RelSq { pred: usize, diff: Vec<T>, denom: T },
}

struct Node<'p, T> {
    value: Value<'p, T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a forward computation. Parameters are borrowed from a
/// [`ParamStore`]; intermediate values are owned.
///
/// `backward` may run once per graph; a second call returns
/// [`NnError::BackwardTwice`].
pub struct Graph<'p, T: Scalar> {
    nodes: Vec<Node<'p, T>>,
    params: HashMap<usize, Var>,
    grads: Vec<Option<Tensor<T>>>,
    done: bool,
}

impl<'p, T: Scalar> Default for Graph<'p, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn acc<T: Scalar>(grads: &mut [Option<Tensor<T>>], i: usize, rows: usize, cols: usize) -> &mut Tensor<T> {
    grads[i].get_or_insert_with(|| Tensor::zeros(rows, cols))
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            grads: Vec::new(),
            done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn needs(&self, v: usize) -> bool {
        self.nodes[v].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input whose gradient is wanted; read it with [`Graph::grad`].
    pub fn input_with_grad(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable parameter, recorded once per graph.
    pub fn param(&mut self, store: &'p ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id.0) {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Borrowed(store.get(id)),
            op: Op::Param,
            needs_grad: store.trainable(),
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id.0, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a) op(b)`, with `op` the transpose when the flag is set.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var, NnError> {
        let (x, y) = (self.value(a), self.value(b));
        let (m, k) = if ta { (x.cols, x.rows) } else { x.shape() };
        let (k2, n) = if tb { (y.cols, y.rows) } else { y.shape() };
        if k != k2 {
            return Err(shape_err("matmul", format!("{m}x{k} times {k2}x{n}")));
        }
        let mut out = Tensor::zeros(m, n);
        gemm(x, ta, y, tb, T::zero(), &mut out.data);
        Ok(self.push(out, Op::MatMul { a: a.0, b: b.0, ta, tb }, &[a.0, b.0]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("add", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let data = x.data.iter().zip(&y.data).map(|(&p, &q)| p + q).collect();
        let out = Tensor { rows: x.rows, cols: x.cols, data };
        Ok(self.push(out, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows != 1 || r.cols != x.cols {
            return Err(shape_err("add_row", format!("{:?} + {:?}", x.shape(), r.shape())));
        }
        let mut out = x.clone();
        for chunk in out.data.chunks_mut(x.cols.max(1)) {
            chunk.iter_mut().zip(&r.data).for_each(|(v, &b)| *v = *v + b);
        }
        Ok(self.push(out, Op::AddRow(a.0, row.0), &[a.0, row.0]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("mul", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let data = x.data.iter().zip(&y.data).map(|(&p, &q)| p * q).collect();
        let out = Tensor { rows: x.rows, cols: x.cols, data };
        Ok(self.push(out, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let x = self.value(a);
        let data = x.data.iter().map(|&v| v * s).collect();
        let out = Tensor { rows: x.rows, cols: x.cols, data };
        self.push(out, Op::Scale(a.0, s), &[a.0])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = x.data.iter().map(|&v| gelu(v).0).collect();
        let out = Tensor { rows: x.rows, cols: x.cols, data };
        self.push(out, Op::Gelu(a.0), &[a.0])
    }

    /// Row-wise normalization followed by the affine map `gamma * xhat + beta`.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var) -> Result<Var, NnError> {
        let (x, g, b) = (self.value(a), self.value(gamma), self.value(beta));
        let c = x.cols;
        if g.shape() != (1, c) || b.shape() != (1, c) {
            return Err(shape_err("layer_norm", format!("{:?} with gain {:?}", x.shape(), g.shape())));
        }
        let n = T::lit(c as f64);
        let eps = T::lit(LN_EPS);
        let mut xhat = Vec::with_capacity(x.data.len());
        let mut rstd = Vec::with_capacity(x.rows);
        let mut out = Tensor::zeros(x.rows, c);
        for i in 0..x.rows {
            let row = x.row(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let r = (var + eps).sqrt().recip();
            rstd.push(r);
            for j in 0..c {
                let h = (row[j] - mean) * r;
                xhat.push(h);
                out.data[i * c + j] = h * g.data[j] + b.data[j];
            }
        }
        let op = Op::LayerNorm {
            a: a.0,
            gamma: gamma.0,
            beta: beta.0,
            xhat,
            rstd,
        };
        Ok(self.push(out, op, &[a.0, gamma.0, beta.0]))
    }

    /// Row-wise softmax; disallowed entries get weight exactly zero.
    pub fn softmax(&mut self, a: Var, mask: &Mask) -> Result<Var, NnError> {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        if let Mask::Allowed(m) = mask {
            if m.len() != rows * cols {
                return Err(shape_err("softmax", format!("mask of {} for {rows}x{cols}", m.len())));
            }
        }
        let mut out = Tensor::zeros(rows, cols);
        for i in 0..rows {
            let row = x.row(i);
            let mut mx = T::neg_infinity();
            for (j, &v) in row.iter().enumerate() {
                if mask.allowed(rows, cols, i, j) && v > mx {
                    mx = v;
                }
            }
            let o = &mut out.data[i * cols..(i + 1) * cols];
            let mut s = T::zero();
            for (j, &v) in row.iter().enumerate() {
                if mask.allowed(rows, cols, i, j) {
                    let e = (v - mx).exp();
                    o[j] = e;
                    s = s + e;
                }
            }
            o.iter_mut().for_each(|v| *v = *v / s);
        }
        Ok(self.push(out, Op::Softmax(a.0), &[a.0]))
    }

    /// Rows `idx` of `table`.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var, NnError> {
        let t = self.value(table);
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows) {
            return Err(shape_err("gather_rows", format!("row {bad} of {}", t.rows)));
        }
        let mut data = Vec::with_capacity(idx.len() * t.cols);
        for &i in idx {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor {
            rows: idx.len(),
            cols: t.cols,
            data,
        };
        let op = Op::Gather {
            table: table.0,
            idx: idx.to_vec(),
        };
        Ok(self.push(out, op, &[table.0]))
    }

    /// Copy of `base` with row `rows[k]` replaced by row `k` of `src`.
    pub fn scatter_rows(&mut self, base: Var, src: Var, rows: &[usize]) -> Result<Var, NnError> {
        let (b, s) = (self.value(base), self.value(src));
        if s.cols != b.cols || s.rows != rows.len() || rows.iter().any(|&r| r >= b.rows) {
            return Err(shape_err("scatter_rows", format!("{:?} into {:?}", s.shape(), b.shape())));
        }
        let mut out = b.clone();
        let c = b.cols;
        for (k, &r) in rows.iter().enumerate() {
            out.data[r * c..(r + 1) * c].copy_from_slice(s.row(k));
        }
        let op = Op::Scatter {
            base: base.0,
            src: src.0,
            rows: rows.to_vec(),
        };
        Ok(self.push(out, op, &[base.0, src.0]))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let x = self.value(a);
        if start + len > x.rows {
            return Err(shape_err("slice_rows", format!("{start}..{} of {}", start + len, x.rows)));
        }
        let out = Tensor {
            rows: len,
            cols: x.cols,
            data: x.data[start * x.cols..(start + len) * x.cols].to_vec(),
        };
        Ok(self.push(out, Op::SliceRows { a: a.0, start }, &[a.0]))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let x = self.value(a);
        if start + len > x.cols {
            return Err(shape_err("slice_cols", format!("{start}..{} of {}", start + len, x.cols)));
        }
        let mut data = Vec::with_capacity(x.rows * len);
        for i in 0..x.rows {
            data.extend_from_slice(&x.row(i)[start..start + len]);
        }
        let out = Tensor { rows: x.rows, cols: len, data };
        Ok(self.push(out, Op::SliceCols { a: a.0, start }, &[a.0]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = parts.first().map(|&p| self.value(p).rows).unwrap_or(0);
        if parts.iter().any(|&p| self.value(p).rows != rows) {
            return Err(shape_err("concat_cols", "row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let out = Tensor { rows, cols, data };
        Ok(self.push(out, Op::ConcatCols(ids.clone()), &ids))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a.0), &[a.0])
    }

    /// Mean next-token cross-entropy of `logits [n x V]` against `targets`.
    /// Zero when `targets` is empty.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, NnError> {
        let x = self.value(logits);
        if x.rows != targets.len() || targets.iter().any(|&t| t >= x.cols) {
            return Err(shape_err(
                "cross_entropy",
                format!("{:?} logits for {} targets", x.shape(), targets.len()),
            ));
        }
        let v = x.cols;
        let mut probs = Vec::with_capacity(x.data.len());
        let mut loss = T::zero();
        for (i, &t) in targets.iter().enumerate() {
            let row = x.row(i);
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let s: T = row.iter().map(|&z| (z - mx).exp()).sum();
            let lse = mx + s.ln();
            loss = loss + lse - row[t];
            probs.extend(row.iter().map(|&z| (z - lse).exp()));
        }
        debug_assert_eq!(probs.len(), targets.len() * v);
        let n = targets.len();
        let value = if n == 0 { T::zero() } else { loss / T::lit(n as f64) };
        let op = Op::CrossEntropy {
            logits: logits.0,
            targets: targets.to_vec(),
            probs,
        };
        Ok(self.push(Tensor::scalar(value), op, &[logits.0]))
    }

    /// `sum_mask (pred - target)^2 / sum_mask target^2`, with `channels`
    /// selecting the valid columns.
    pub fn relative_squared_error(
        &mut self,
        pred: Var,
        target: &Tensor<T>,
        channels: &[bool],
    ) -> Result<Var, NnError> {
        let p = self.value(pred);
        if p.shape() != target.shape() || channels.len() != p.cols {
            return Err(shape_err(
                "relative_squared_error",
                format!("{:?} vs {:?}", p.shape(), target.shape()),
            ));
        }
        let mut diff = vec![T::zero(); p.data.len()];
        let (mut num, mut den) = (T::zero(), T::zero());
        for (k, (&a, &b)) in p.data.iter().zip(&target.data).enumerate() {
            if channels[k % p.cols] {
                let d = a - b;
                diff[k] = d;
                num = num + d * d;
                den = den + b * b;
            }
        }
        let op = Op::RelSq {
            pred: pred.0,
            diff,
            denom: den,
        };
        Ok(self.push(Tensor::scalar(num / den), op, &[pred.0]))
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds the parameter gradients of the last backward pass into `out`.
    pub fn accumulate_param_grads(&self, out: &mut Gradients<T>) {
        for (&pid, &v) in &self.params {
            if let Some(g) = self.grad(v) {
                out.add(ParamId(pid), g);
            }
        }
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        if self.done {
            return Err(NnError::BackwardTwice);
        }
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(NnError::NonScalarLoss { rows, cols });
        }
        if !self.needs(loss.0) {
            return Err(NnError::DisconnectedGraph);
        }
        self.done = true;
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let val = |k: usize| self.value(Var(k));
        match &node.op {
            Op::Leaf | Op::Param => {}
            &Op::MatMul { a, b, ta, tb } => {
                let (x, y) = (val(a), val(b));
                if self.needs(a) {
                    let d = acc(grads, a, x.rows, x.cols);
                    if ta {
                        gemm(y, tb, g, true, T::one(), &mut d.data);
                    } else {
                        gemm(g, false, y, !tb, T::one(), &mut d.data);
                    }
                }
                if self.needs(b) {
                    let d = acc(grads, b, y.rows, y.cols);
                    if tb {
                        gemm(g, true, x, ta, T::one(), &mut d.data);
                    } else {
                        gemm(x, !ta, g, false, T::one(), &mut d.data);
                    }
                }
            }
            &Op::Add(a, b) => {
                for k in [a, b] {
                    if self.needs(k) {
                        let d = acc(grads, k, g.rows, g.cols);
                        d.data.iter_mut().zip(&g.data).for_each(|(d, &v)| *d = *d + v);
                    }
                }
            }
            &Op::AddRow(a, r) => {
                if self.needs(a) {
                    let d = acc(grads, a, g.rows, g.cols);
                    d.data.iter_mut().zip(&g.data).for_each(|(d, &v)| *d = *d + v);
                }
                if self.needs(r) {
                    let d = acc(grads, r, 1, g.cols);
                    for row in g.data.chunks(g.cols.max(1)) {
                        d.data.iter_mut().zip(row).for_each(|(d, &v)| *d = *d + v);
                    }
                }
            }
            &Op::Mul(a, b) => {
                let (x, y) = (val(a), val(b));
                if self.needs(a) {
                    let d = acc(grads, a, g.rows, g.cols);
                    for ((d, &gv), &yv) in d.data.iter_mut().zip(&g.data).zip(&y.data) {
                        *d = *d + gv * yv;
                    }
                }
                if self.needs(b) {
                    let d = acc(grads, b, g.rows, g.cols);
                    for ((d, &gv), &xv) in d.data.iter_mut().zip(&g.data).zip(&x.data) {
                        *d = *d + gv * xv;
                    }
                }
            }
            &Op::Scale(a, s) => {
                if self.needs(a) {
                    let d = acc(grads, a, g.rows, g.cols);
                    d.data.iter_mut().zip(&g.data).for_each(|(d, &v)| *d = *d + v * s);
                }
            }
            &Op::Gelu(a) => {
                if self.needs(a) {
                    let x = val(a);
                    let d = acc(grads, a, g.rows, g.cols);
                    for ((d, &gv), &xv) in d.data.iter_mut().zip(&g.data).zip(&x.data) {
                        *d = *d + gv * gelu(xv).1;
                    }
                }
            }
            Op::LayerNorm {
                a,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let (a, gamma, beta) = (*a, *gamma, *beta);
                let c = g.cols;
                let gm = val(gamma);
                if self.needs(gamma) {
                    let d = acc(grads, gamma, 1, c);
                    for (k, &gv) in g.data.iter().enumerate() {
                        d.data[k % c] = d.data[k % c] + gv * xhat[k];
                    }
                }
                if self.needs(beta) {
                    let d = acc(grads, beta, 1, c);
                    for (k, &gv) in g.data.iter().enumerate() {
                        d.data[k % c] = d.data[k % c] + gv;
                    }
                }
                if self.needs(a) {
                    let n = T::lit(c as f64);
                    let d = acc(grads, a, g.rows, c);
                    let mut dxh = vec![T::zero(); c];
                    for r in 0..g.rows {
                        let (mut m1, mut m2) = (T::zero(), T::zero());
                        for j in 0..c {
                            let v = g.data[r * c + j] * gm.data[j];
                            dxh[j] = v;
                            m1 = m1 + v;
                            m2 = m2 + v * xhat[r * c + j];
                        }
                        m1 = m1 / n;
                        m2 = m2 / n;
                        for j in 0..c {
                            let k = r * c + j;
                            d.data[k] = d.data[k] + rstd[r] * (dxh[j] - m1 - xhat[k] * m2);
                        }
                    }
                }
            }
            &Op::Softmax(a) => {
                if self.needs(a) {
                    let p = val(i);
                    let c = p.cols;
                    let d = acc(grads, a, p.rows, c);
                    for r in 0..p.rows {
                        let pr = p.row(r);
                        let gr = &g.data[r * c..(r + 1) * c];
                        let dot: T = pr.iter().zip(gr).map(|(&x, &y)| x * y).sum();
                        for j in 0..c {
                            d.data[r * c + j] = d.data[r * c + j] + pr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::Gather { table, idx } => {
                if self.needs(*table) {
                    let t = val(*table);
                    let c = t.cols;
                    let d = acc(grads, *table, t.rows, c);
                    for (k, &r) in idx.iter().enumerate() {
                        for j in 0..c {
                            d.data[r * c + j] = d.data[r * c + j] + g.data[k * c + j];
                        }
                    }
                }
            }
            Op::Scatter { base, src, rows } => {
                let c = g.cols;
                if self.needs(*base) {
                    let d = acc(grads, *base, g.rows, c);
                    d.data.iter_mut().zip(&g.data).for_each(|(d, &v)| *d = *d + v);
                    for &r in rows {
                        // Overwritten rows do not reach the output; undo their share.
                        for j in 0..c {
                            d.data[r * c + j] = d.data[r * c + j] - g.data[r * c + j];
                        }
                    }
                }
                if self.needs(*src) {
                    let d = acc(grads, *src, rows.len(), c);
                    for (k, &r) in rows.iter().enumerate() {
                        for j in 0..c {
                            d.data[k * c + j] = d.data[k * c + j] + g.data[r * c + j];
                        }
                    }
                }
            }
            &Op::SliceRows { a, start } => {
                if self.needs(a) {
                    let x = val(a);
                    let c = x.cols;
                    let d = acc(grads, a, x.rows, c);
                    let dst = &mut d.data[start * c..start * c + g.data.len()];
                    dst.iter_mut().zip(&g.data).for_each(|(d, &v)| *d = *d + v);
                }
            }
            &Op::SliceCols { a, start } => {
                if self.needs(a) {
                    let x = val(a);
                    let c = x.cols;
                    let d = acc(grads, a, x.rows, c);
                    for r in 0..g.rows {
                        for j in 0..g.cols {
                            let k = r * c + start + j;
                            d.data[k] = d.data[k] + g.data[r * g.cols + j];
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let x = val(p);
                    if self.needs(p) {
                        let d = acc(grads, p, x.rows, x.cols);
                        for r in 0..x.rows {
                            for j in 0..x.cols {
                                let k = r * x.cols + j;
                                d.data[k] = d.data[k] + g.data[r * g.cols + off + j];
                            }
                        }
                    }
                    off += x.cols;
                }
            }
            &Op::Sum(a) => {
                if self.needs(a) {
                    let x = val(a);
                    let gv = g.item();
                    let d = acc(grads, a, x.rows, x.cols);
                    d.data.iter_mut().for_each(|d| *d = *d + gv);
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                if self.needs(*logits) && !targets.is_empty() {
                    let x = val(*logits);
                    let v = x.cols;
                    let scale = g.item() / T::lit(targets.len() as f64);
                    let d = acc(grads, *logits, x.rows, v);
                    for (r, &t) in targets.iter().enumerate() {
                        for j in 0..v {
                            let k = r * v + j;
                            let onehot = if j == t { T::one() } else { T::zero() };
                            d.data[k] = d.data[k] + scale * (probs[k] - onehot);
                        }
                    }
                }
            }
            Op::RelSq { pred, diff, denom } => {
                if self.needs(*pred) {
                    let x = val(*pred);
                    let s = T::lit(2.0) * g.item() / *denom;
                    let d = acc(grads, *pred, x.rows, x.cols);
                    d.data.iter_mut().zip(diff).for_each(|(d, &v)| *d = *d + s * v);
                }
            }
        }
    }
}
