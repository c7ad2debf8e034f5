//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Graph`] records every operation as it is evaluated. Nodes are pushed in
//! evaluation order, so the tape is topologically sorted by construction and
//! [`Graph::backward`] is a single reverse sweep. Parameters enter the tape as
//! leaves tagged with their [`ParamId`]; [`Gradients::params`] folds the leaf
//! gradients back onto the store layout.

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, softmax_in_place, Tensor};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Swish(Var),
    Glu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    DepthwiseConv {
        x: Var,
        weight: Var,
        bias: Var,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
        frozen_row: Option<usize>,
    },
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    /// Loss node whose gradient with respect to `input` was computed during the forward pass.
    Precomputed { input: Var, grad: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// The tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::DimensionMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A constant leaf; receives gradients but is not a parameter.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// a · bᵀ
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.cols() {
            return Err(mismatch("matmul_nt", av, bv));
        }
        let (m, k, p) = (av.rows(), av.cols(), bv.rows());
        let mut out = vec![0.0; m * p];
        gemm_nt(av.data(), bv.data(), &mut out, m, k, p);
        Ok(self.push(Tensor::matrix(m, p, out), Op::MatMulNt(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("add", av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a length-`cols` bias to every row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.len() != av.cols() {
            return Err(mismatch("add_row", av, bv));
        }
        let c = av.cols();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + bv.data()[i % c])
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("mul", av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * c).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Scale(a, c))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(out, op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    /// x · σ(x)
    pub fn swish(&mut self, a: Var) -> Var {
        self.map(a, |x| x * sigmoid(x), Op::Swish(a))
    }

    /// Gated linear unit over the column halves: `left ⊙ σ(right)`.
    pub fn glu(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let (m, c) = (av.rows(), av.cols());
        if c % 2 != 0 {
            return Err(Error::Shape(format!("glu needs an even column count, got {c}")));
        }
        let h = c / 2;
        let mut out = Vec::with_capacity(m * h);
        for i in 0..m {
            let row = av.row(i);
            for j in 0..h {
                out.push(row[j] * sigmoid(row[h + j]));
            }
        }
        Ok(self.push(Tensor::matrix(m, h, out), Op::Glu(a)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = crate::tensor::softmax_rows(self.value(a))?;
        Ok(self.push(out, Op::SoftmaxRows(a)))
    }

    /// Row-wise layer normalisation with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let (m, c) = (xv.rows(), xv.cols());
        if gv.len() != c || bv.len() != c {
            return Err(mismatch("layer_norm", xv, gv));
        }
        let mut xhat = vec![0.0; m * c];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * c];
        for i in 0..m {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let r = 1.0 / (var + eps).sqrt();
            rstd[i] = r;
            for j in 0..c {
                let h = (row[j] - mean) * r;
                xhat[i * c + j] = h;
                out[i * c + j] = gv.data()[j] * h + bv.data()[j];
            }
        }
        Ok(self.push(
            Tensor::matrix(m, c, out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        ))
    }

    /// Per-channel "same" convolution along time: `x` is n×C, `weight` K×C (K odd).
    ///
    /// Uses the flipped-kernel (true convolution) convention, so an impulse at
    /// frame p reproduces the kernel over frames p−K/2 ..= p+K/2.
    pub fn depthwise_conv1d(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(weight), self.value(bias));
        let (n, c) = (xv.rows(), xv.cols());
        let k = wv.rows();
        if wv.cols() != c || bv.len() != c || k % 2 == 0 {
            return Err(mismatch("depthwise_conv1d", xv, wv));
        }
        let pad = (k - 1) / 2;
        let mut out = vec![0.0; n * c];
        for t in 0..n {
            let o = &mut out[t * c..(t + 1) * c];
            o.copy_from_slice(bv.data());
            for kk in 0..k {
                // source frame t - kk + pad
                let src = t as isize - kk as isize + pad as isize;
                if src < 0 || src >= n as isize {
                    continue;
                }
                let xr = xv.row(src as usize);
                let wr = wv.row(kk);
                for ch in 0..c {
                    o[ch] += wr[ch] * xr[ch];
                }
            }
        }
        Ok(self.push(Tensor::matrix(n, c, out), Op::DepthwiseConv { x, weight, bias }))
    }

    /// Gathers table rows. `frozen_row` (the padding row) always reads as
    /// zeros and never receives gradient.
    pub fn embedding(&mut self, table: Var, ids: &[usize], frozen_row: Option<usize>) -> Result<Var> {
        let tv = self.value(table);
        let (rows, d) = (tv.rows(), tv.cols());
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::IdOutOfRange { id, rows });
            }
            if Some(id) == frozen_row {
                out.resize(out.len() + d, 0.0);
            } else {
                out.extend_from_slice(tv.row(id));
            }
        }
        if ids.is_empty() {
            return Err(Error::EmptyKeyword);
        }
        Ok(self.push(
            Tensor::matrix(ids.len(), d, out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
                frozen_row,
            },
        ))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if len == 0 || start + len > av.rows() {
            return Err(Error::Shape(format!(
                "row slice {start}..{} of {:?}",
                start + len,
                av.shape()
            )));
        }
        let c = av.cols();
        let out = Tensor::matrix(len, c, av.data()[start * c..(start + len) * c].to_vec());
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if len == 0 || start + len > av.cols() {
            return Err(Error::Shape(format!(
                "column slice {start}..{} of {:?}",
                start + len,
                av.shape()
            )));
        }
        let m = av.rows();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&av.row(i)[start..start + len]);
        }
        Ok(self.push(Tensor::matrix(m, len, out), Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != m) {
            return Err(mismatch("concat_cols", self.value(parts[0]), self.value(parts[1])));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        Ok(self.push(Tensor::matrix(m, total, out), Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != c) {
            return Err(mismatch("concat_rows", self.value(parts[0]), self.value(parts[1])));
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let rows = out.len() / c;
        Ok(self.push(Tensor::matrix(rows, c, out), Op::ConcatRows(parts.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).clone().reshape(vec![rows, cols])?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Row-major flatten to 1×(rows·cols).
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let len = self.value(a).len();
        self.reshape(a, 1, len)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean softmax cross-entropy over rows of `logits` against class `targets`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (m, k) = (lv.rows(), lv.cols());
        if targets.len() != m {
            return Err(Error::Shape(format!(
                "{} targets for {m} rows of logits",
                targets.len()
            )));
        }
        let mut probs = lv.data().to_vec();
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= k {
                return Err(Error::IdOutOfRange { id: t, rows: k });
            }
            let row = &lv.data()[i * k..(i + 1) * k];
            loss += crate::tensor::log_sum_exp(row) - row[t];
            softmax_in_place(&mut probs[i * k..(i + 1) * k]);
        }
        Ok(self.push(
            Tensor::scalar(loss / m as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Records a scalar whose gradient with respect to `input` is already known.
    pub fn precomputed_loss(&mut self, input: Var, value: f64, grad: Vec<f64>) -> Var {
        assert_eq!(grad.len(), self.value(input).len());
        self.push(Tensor::scalar(value), Op::Precomputed { input, grad })
    }

    /// Back-propagates from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::NotScalar(self.value(loss).shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            self.backprop_node(idx, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, idx: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, p) = (av.rows(), av.cols(), bv.cols());
                gemm_nt(dy, bv.data(), acc(grads, *a, m * k), m, p, k);
                gemm_tn(av.data(), dy, acc(grads, *b, k * p), m, k, p);
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, p) = (av.rows(), av.cols(), bv.rows());
                gemm_nn(dy, bv.data(), acc(grads, *a, m * k), m, p, k);
                gemm_tn(dy, av.data(), acc(grads, *b, p * k), m, p, k);
            }
            Op::Add(a, b) => {
                add_into(acc(grads, *a, dy.len()), dy);
                add_into(acc(grads, *b, dy.len()), dy);
            }
            Op::AddRow(a, bias) => {
                add_into(acc(grads, *a, dy.len()), dy);
                let c = val(*bias).len();
                let gb = acc(grads, *bias, c);
                for (i, d) in dy.iter().enumerate() {
                    gb[i % c] += d;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                let ga = acc(grads, *a, dy.len());
                for i in 0..dy.len() {
                    ga[i] += dy[i] * bv[i];
                }
                let gb = acc(grads, *b, dy.len());
                for i in 0..dy.len() {
                    gb[i] += dy[i] * av[i];
                }
            }
            Op::Scale(a, c) => {
                let ga = acc(grads, *a, dy.len());
                for i in 0..dy.len() {
                    ga[i] += dy[i] * c;
                }
            }
            Op::Sigmoid(a) => {
                let ga = acc(grads, *a, dy.len());
                for (i, s) in y.data().iter().enumerate() {
                    ga[i] += dy[i] * s * (1.0 - s);
                }
            }
            Op::Swish(a) => {
                let xv = val(*a).data();
                let ga = acc(grads, *a, dy.len());
                for i in 0..dy.len() {
                    let s = sigmoid(xv[i]);
                    ga[i] += dy[i] * (s + xv[i] * s * (1.0 - s));
                }
            }
            Op::Glu(a) => {
                let av = val(*a);
                let (m, c) = (av.rows(), av.cols());
                let h = c / 2;
                let ga = acc(grads, *a, m * c);
                for i in 0..m {
                    let row = av.row(i);
                    for j in 0..h {
                        let s = sigmoid(row[h + j]);
                        let d = dy[i * h + j];
                        ga[i * c + j] += d * s;
                        ga[i * c + h + j] += d * row[j] * s * (1.0 - s);
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let (m, n) = (y.rows(), y.cols());
                let ga = acc(grads, *a, m * n);
                for i in 0..m {
                    let yr = y.row(i);
                    let dr = &dy[i * n..(i + 1) * n];
                    let inner: f64 = yr.iter().zip(dr).map(|(p, d)| p * d).sum();
                    for j in 0..n {
                        ga[i * n + j] += yr[j] * (dr[j] - inner);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let (m, c) = (y.rows(), y.cols());
                let gv = val(*gamma).data().to_vec();
                {
                    let gg = acc(grads, *gamma, c);
                    for i in 0..m * c {
                        gg[i % c] += dy[i] * xhat[i];
                    }
                }
                {
                    let gbeta = acc(grads, *beta, c);
                    for i in 0..m * c {
                        gbeta[i % c] += dy[i];
                    }
                }
                let gx = acc(grads, *x, m * c);
                let mut dxhat = vec![0.0; c];
                for i in 0..m {
                    let mut mean_d = 0.0;
                    let mut mean_dx = 0.0;
                    for j in 0..c {
                        dxhat[j] = dy[i * c + j] * gv[j];
                        mean_d += dxhat[j];
                        mean_dx += dxhat[j] * xhat[i * c + j];
                    }
                    mean_d /= c as f64;
                    mean_dx /= c as f64;
                    for j in 0..c {
                        gx[i * c + j] += rstd[i] * (dxhat[j] - mean_d - xhat[i * c + j] * mean_dx);
                    }
                }
            }
            Op::DepthwiseConv { x, weight, bias } => {
                let (xv, wv) = (val(*x), val(*weight));
                let (n, c, k) = (xv.rows(), xv.cols(), wv.rows());
                let pad = (k - 1) / 2;
                {
                    let gb = acc(grads, *bias, c);
                    for i in 0..n * c {
                        gb[i % c] += dy[i];
                    }
                }
                {
                    let gw = acc(grads, *weight, k * c);
                    for t in 0..n {
                        for kk in 0..k {
                            let src = t as isize - kk as isize + pad as isize;
                            if src < 0 || src >= n as isize {
                                continue;
                            }
                            let xr = xv.row(src as usize);
                            for ch in 0..c {
                                gw[kk * c + ch] += dy[t * c + ch] * xr[ch];
                            }
                        }
                    }
                }
                let gx = acc(grads, *x, n * c);
                for t in 0..n {
                    for kk in 0..k {
                        let src = t as isize - kk as isize + pad as isize;
                        if src < 0 || src >= n as isize {
                            continue;
                        }
                        let s = src as usize;
                        for ch in 0..c {
                            gx[s * c + ch] += dy[t * c + ch] * wv.data()[kk * c + ch];
                        }
                    }
                }
            }
            Op::Embedding {
                table,
                ids,
                frozen_row,
            } => {
                let tv = val(*table);
                let d = tv.cols();
                let gt = acc(grads, *table, tv.len());
                for (i, &id) in ids.iter().enumerate() {
                    if Some(id) == *frozen_row {
                        continue;
                    }
                    add_into(&mut gt[id * d..(id + 1) * d], &dy[i * d..(i + 1) * d]);
                }
            }
            Op::SliceRows(a, start) => {
                let av = val(*a);
                let c = av.cols();
                let ga = acc(grads, *a, av.len());
                add_into(&mut ga[start * c..start * c + dy.len()], dy);
            }
            Op::SliceCols(a, start) => {
                let av = val(*a);
                let (m, c) = (av.rows(), av.cols());
                let len = y.cols();
                let ga = acc(grads, *a, m * c);
                for i in 0..m {
                    add_into(
                        &mut ga[i * c + start..i * c + start + len],
                        &dy[i * len..(i + 1) * len],
                    );
                }
            }
            Op::ConcatCols(parts) => {
                let (m, total) = (y.rows(), y.cols());
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let gp = acc(grads, p, m * w);
                    for i in 0..m {
                        add_into(
                            &mut gp[i * w..(i + 1) * w],
                            &dy[i * total + offset..i * total + offset + w],
                        );
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).len();
                    add_into(acc(grads, p, len), &dy[offset..offset + len]);
                    offset += len;
                }
            }
            Op::Reshape(a) => add_into(acc(grads, *a, dy.len()), dy),
            Op::Sum(a) => {
                let len = val(*a).len();
                for g in acc(grads, *a, len) {
                    *g += dy[0];
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let m = targets.len();
                let k = probs.len() / m;
                let gl = acc(grads, *logits, m * k);
                let w = dy[0] / m as f64;
                for (i, &t) in targets.iter().enumerate() {
                    for j in 0..k {
                        let onehot = if j == t { 1.0 } else { 0.0 };
                        gl[i * k + j] += w * (probs[i * k + j] - onehot);
                    }
                }
            }
            Op::Precomputed { input, grad } => {
                let gi = acc(grads, *input, grad.len());
                for (g, d) in gi.iter_mut().zip(grad) {
                    *g += dy[0] * d;
                }
            }
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to a node, or `None` if it does not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients accumulated per parameter, zero-filled for parameters the loss never touched.
    pub fn params(&self, graph: &Graph, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store.iter().map(|(_, t)| zeros_like(t)).collect();
        self.accumulate_params(graph, &mut out);
        out
    }

    /// Adds parameter gradients into `out` (laid out like the store).
    pub fn accumulate_params(&self, graph: &Graph, out: &mut [Tensor]) {
        for (idx, node) in graph.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &self.grads[idx]) {
                add_into(out[id.index()].data_mut(), g);
            }
        }
    }
}

pub(crate) fn zeros_like(t: &Tensor) -> Tensor {
    Tensor::new(t.shape().to_vec(), vec![0.0; t.len()]).expect("shape of an existing tensor")
}
