use std::sync::Arc;

use super::{gemm, gemm_at, gemm_bt, transpose, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-column batch mean and biased variance observed by a training-mode
/// batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBias(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    SoftmaxRows(Var),
    Transpose(Var),
    Reshape(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Gather(Var, Arc<Vec<Option<usize>>>),
    Sum(Var),
    Mean(Var),
    Mse(Var, Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch: bool,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run tape: every operation evaluates eagerly and records itself
/// so that [`Tape::backward`] can replay the graph in reverse.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order of the DAG.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Option<Vec<Option<Tensor>>>,
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

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that is treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.grads = None;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims(&self, v: Var) -> Result<(usize, usize)> {
        self.value(v).dims2()
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| f(a)).collect();
        let value = Tensor {
            shape: v.shape().to_vec(),
            data,
        };
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a)?;
        let (k2, n) = self.dims(b)?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul: [{m},{k}] x [{k2},{n}]")));
        }
        let data = gemm(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::MatMul(a, b), rg))
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor {
            shape: va.shape().to_vec(),
            data,
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |a| a * c)
    }

    /// `x[n×m] + bias[m]` broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (n, m) = self.dims(x)?;
        let b = self.value(bias);
        if b.len() != m {
            return Err(Error::Shape(format!("bias of {} for {m} columns", b.len())));
        }
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(m) {
            for (v, bv) in row.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(Tensor::matrix(n, m, data)?, Op::AddRowBias(x, bias), rg))
    }

    /// Dense layer `x · w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row_bias(xw, b)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |a| if a > 0.0 { a } else { 0.0 })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, Op::LeakyRelu(x, slope), |a| if a > 0.0 { a } else { slope * a })
    }

    /// Softmax along the last axis of a matrix.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (n, m) = self.dims(x)?;
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(m) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(n, m, data)?, Op::SoftmaxRows(x), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (n, m) = self.dims(x)?;
        let data = transpose(self.value(x).data(), n, m);
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::Transpose(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().with_shape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (n, m) = self.dims(x)?;
        if start >= end || end > n {
            return Err(Error::Shape(format!("row slice {start}..{end} of {n}")));
        }
        let data = self.value(x).data()[start * m..end * m].to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(end - start, m, data)?, Op::SliceRows(x, start), rg))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (n, m) = self.dims(x)?;
        if start >= end || end > m {
            return Err(Error::Shape(format!("column slice {start}..{end} of {m}")));
        }
        let w = end - start;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(n * w);
        for r in 0..n {
            data.extend_from_slice(&src[r * m + start..r * m + end]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(n, w, data)?, Op::SliceCols(x, start), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let (_, m) = self.dims(*first)?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (n, mp) = self.dims(p)?;
            if mp != m {
                return Err(Error::Shape(format!("concat_rows: {mp} vs {m} columns")));
            }
            rows += n;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(rows, m, data)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let (n, _) = self.dims(*first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (np, m) = self.dims(p)?;
            if np != n {
                return Err(Error::Shape(format!("concat_cols: {np} vs {n} rows")));
            }
            widths.push(m);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(n, total, data)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// `out[i] = x[index[i]]`, or zero where the index is `None`.
    pub fn gather(&mut self, x: Var, index: Arc<Vec<Option<usize>>>, shape: Vec<usize>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != index.len() {
            return Err(Error::Shape(format!(
                "gather index of {} for shape {shape:?}",
                index.len()
            )));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(n);
        for ix in index.iter() {
            data.push(match ix {
                Some(i) => *src
                    .get(*i)
                    .ok_or_else(|| Error::Shape(format!("gather index {i} out of {}", src.len())))?,
                None => 0.0,
            });
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, data)?, Op::Gather(x, index), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Mean squared error between two equally-shaped tensors.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target, "mse")?;
        let (p, t) = (self.value(pred), self.value(target));
        if p.is_empty() {
            return Err(Error::Shape("mse of empty tensors".into()));
        }
        let s = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / p.len() as f64;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(s), Op::Mse(pred, target), rg))
    }

    /// Training-mode batch norm over the rows of `x[n×c]`, normalising each
    /// column with its batch mean and biased variance.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        let (n, c) = self.dims(x)?;
        self.check_bn_affine(gamma, beta, c)?;
        let xs = self.value(x).data();
        let mut mean = vec![0.0; c];
        for row in xs.chunks(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; c];
        for row in xs.chunks(c) {
            for j in 0..c {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let out = self.bn_apply(x, gamma, beta, &mean, inv_std, true)?;
        Ok((out, BatchStats { mean, var, count: n }))
    }

    /// Eval-mode batch norm with fixed (running) statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let (_, c) = self.dims(x)?;
        self.check_bn_affine(gamma, beta, c)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::Shape("running statistics width".into()));
        }
        let inv_std = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        self.bn_apply(x, gamma, beta, running_mean, inv_std, false)
    }

    fn check_bn_affine(&self, gamma: Var, beta: Var, c: usize) -> Result<()> {
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(Error::Shape(format!("batch norm affine width != {c}")));
        }
        Ok(())
    }

    fn bn_apply(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], inv_std: Vec<f64>, batch: bool) -> Result<Var> {
        let (n, c) = self.dims(x)?;
        let xs = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = Vec::with_capacity(n * c);
        let mut out = Vec::with_capacity(n * c);
        for row in xs.chunks(c) {
            for j in 0..c {
                let h = (row[j] - mean[j]) * inv_std[j];
                xhat.push(h);
                out.push(g[j] * h + b[j]);
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            batch,
        };
        Ok(self.push(Tensor::matrix(n, c, out)?, op, rg))
    }

    /// Sign pattern of every rectifier input on the tape. Two evaluations with
    /// the same signature lie on the same smooth piece of the function.
    pub fn kink_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) | Op::LeakyRelu(x, _) = node.op {
                sig.extend(self.value(x).data().iter().map(|&v| v > 0.0));
            }
        }
        sig
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape("backward() needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape().to_vec(), 1.0));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        self.grads = Some(grads);
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`; zeros when `v`
    /// did not influence the loss.
    pub fn grad(&self, v: Var) -> Result<Tensor> {
        let grads = self.grads.as_ref().ok_or(Error::NoBackward)?;
        Ok(match grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.value(v).shape().to_vec()),
        })
    }

    fn accum(&self, grads: &mut [Option<Tensor>], v: Var, delta: Vec<f64>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, d) in g.data.iter_mut().zip(delta) {
                    *a += d;
                }
            }
            slot @ None => {
                *slot = Some(Tensor {
                    shape: self.value(v).shape().to_vec(),
                    data: delta,
                })
            }
        }
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let gd = g.data();
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a)?;
                let (_, n) = self.dims(*b)?;
                if self.rg(*a) {
                    let da = gemm_bt(gd, self.value(*b).data(), m, n, k);
                    self.accum(grads, *a, da);
                }
                if self.rg(*b) {
                    let db = gemm_at(self.value(*a).data(), gd, m, k, n);
                    self.accum(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accum(grads, *a, gd.to_vec());
                self.accum(grads, *b, gd.to_vec());
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, gd.to_vec());
                self.accum(grads, *b, gd.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.rg(*a) {
                    self.accum(grads, *a, gd.iter().zip(vb).map(|(g, y)| g * y).collect());
                }
                if self.rg(*b) {
                    self.accum(grads, *b, gd.iter().zip(va).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale(x, c) => self.accum(grads, *x, gd.iter().map(|v| v * c).collect()),
            Op::AddRowBias(x, bias) => {
                self.accum(grads, *x, gd.to_vec());
                if self.rg(*bias) {
                    let m = self.value(*bias).len();
                    let mut db = vec![0.0; m];
                    for row in gd.chunks(m) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.accum(grads, *bias, db);
                }
            }
            Op::Sigmoid(x) => {
                let d = gd.iter().zip(out).map(|(g, y)| g * y * (1.0 - y)).collect();
                self.accum(grads, *x, d);
            }
            Op::Tanh(x) => {
                let d = gd.iter().zip(out).map(|(g, y)| g * (1.0 - y * y)).collect();
                self.accum(grads, *x, d);
            }
            Op::Relu(x) => {
                let xs = self.value(*x).data();
                let d = gd
                    .iter()
                    .zip(xs)
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accum(grads, *x, d);
            }
            Op::LeakyRelu(x, slope) => {
                let xs = self.value(*x).data();
                let d = gd
                    .iter()
                    .zip(xs)
                    .map(|(g, v)| if *v > 0.0 { *g } else { g * slope })
                    .collect();
                self.accum(grads, *x, d);
            }
            Op::SoftmaxRows(x) => {
                let (_, m) = node.value.dims2()?;
                let mut d = vec![0.0; gd.len()];
                for ((drow, grow), yrow) in d.chunks_mut(m).zip(gd.chunks(m)).zip(out.chunks(m)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                    for j in 0..m {
                        drow[j] = yrow[j] * (grow[j] - dot);
                    }
                }
                self.accum(grads, *x, d);
            }
            Op::Transpose(x) => {
                let (n, m) = node.value.dims2()?;
                self.accum(grads, *x, transpose(gd, n, m));
            }
            Op::Reshape(x) => self.accum(grads, *x, gd.to_vec()),
            Op::SliceRows(x, start) => {
                let (_, m) = self.dims(*x)?;
                let mut d = vec![0.0; self.value(*x).len()];
                d[start * m..start * m + gd.len()].copy_from_slice(gd);
                self.accum(grads, *x, d);
            }
            Op::SliceCols(x, start) => {
                let (n, m) = self.dims(*x)?;
                let (_, w) = node.value.dims2()?;
                let mut d = vec![0.0; n * m];
                for r in 0..n {
                    d[r * m + start..r * m + start + w].copy_from_slice(&gd[r * w..(r + 1) * w]);
                }
                self.accum(grads, *x, d);
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.accum(grads, p, gd[off..off + len].to_vec());
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (n, total) = node.value.dims2()?;
                let mut col = 0;
                for &p in parts {
                    let (_, w) = self.dims(p)?;
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(n * w);
                        for r in 0..n {
                            d.extend_from_slice(&gd[r * total + col..r * total + col + w]);
                        }
                        self.accum(grads, p, d);
                    }
                    col += w;
                }
            }
            Op::Gather(x, index) => {
                let mut d = vec![0.0; self.value(*x).len()];
                for (gv, ix) in gd.iter().zip(index.iter()) {
                    if let Some(i) = ix {
                        d[*i] += gv;
                    }
                }
                self.accum(grads, *x, d);
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.accum(grads, *x, vec![gd[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                self.accum(grads, *x, vec![gd[0] / n as f64; n]);
            }
            Op::Mse(p, t) => {
                let (vp, vt) = (self.value(*p).data(), self.value(*t).data());
                let k = 2.0 * gd[0] / vp.len() as f64;
                let d: Vec<f64> = vp.iter().zip(vt).map(|(a, b)| k * (a - b)).collect();
                if self.rg(*t) {
                    self.accum(grads, *t, d.iter().map(|v| -v).collect());
                }
                self.accum(grads, *p, d);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch,
            } => {
                let (n, c) = node.value.dims2()?;
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (grow, hrow) in gd.chunks(c).zip(xhat.chunks(c)) {
                    for j in 0..c {
                        dbeta[j] += grow[j];
                        dgamma[j] += grow[j] * hrow[j];
                    }
                }
                if self.rg(*x) {
                    let mut dx = vec![0.0; n * c];
                    for ((drow, grow), hrow) in dx.chunks_mut(c).zip(gd.chunks(c)).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            drow[j] = if *batch {
                                gam[j] * inv_std[j] / n as f64 * (n as f64 * grow[j] - dbeta[j] - hrow[j] * dgamma[j])
                            } else {
                                gam[j] * inv_std[j] * grow[j]
                            };
                        }
                    }
                    self.accum(grads, *x, dx);
                }
                self.accum(grads, *gamma, dgamma);
                self.accum(grads, *beta, dbeta);
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}
