//! Reverse-mode differentiation over 2-D tensors.
//!
//! A [`Tape`] records every operation of a forward pass together with the
//! values it produced. [`Tape::backward`] then walks the record in reverse
//! and accumulates the gradient of one scalar node with respect to every
//! earlier node. Parameters enter the tape through [`Tape::bind`], which
//! remembers which leaf belongs to which [`ParamId`] so gradients can be
//! handed back to the optimizer in store order.

use super::loss::{BCE_CLAMP, LAYER_NORM_EPS};
use super::params::{ParamId, ParamStore};
use super::tensor::{matmul, matmul_nt, matmul_tn, Scalar, Tensor};
use crate::error::{contract, Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor<T>),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Tensor<T>,
        rstd: Vec<T>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
    Sum(Var),
    Bce {
        p: Var,
        target: T,
        active: bool,
    },
    SoftmaxXent {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::MulConst(..) => "mul_const",
            Op::Scale(..) => "scale",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Gelu(..) => "gelu",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::LayerNorm { .. } => "layer_norm",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::Gather(..) => "gather",
            Op::Sum(..) => "sum",
            Op::Bce { .. } => "bce",
            Op::SoftmaxXent { .. } => "softmax_xent",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Leaves created by [`Tape::bind`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

impl std::ops::Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

/// Gradients of one scalar with respect to every node of a tape.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of `var`; zero when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Tensor<T> {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    /// Gradients for every bound parameter in store order.
    pub fn for_params(&self, bound: &Bound) -> Vec<Tensor<T>> {
        bound.vars.iter().map(|&v| self.get(v)).collect()
    }
}

#[derive(Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after `len`. Used to reuse bound
    /// parameters across many inference passes.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Copies every tensor of `store` onto the tape as a leaf.
    pub fn bind<S: Scalar>(&mut self, store: &ParamStore<S>) -> Bound {
        let vars = store
            .entries()
            .iter()
            .map(|e| self.leaf(e.tensor.cast()))
            .collect();
        Bound { vars }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = matmul(self.value(a), self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = matmul_nt(self.value(a), self.value(b));
        self.push(value, Op::MatMulNt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        assert_eq!(value.shape(), self.value(b).shape(), "add shape");
        value.add_assign(self.value(b));
        self.push(value, Op::Add(a, b))
    }

    /// Adds the `1 x c` row `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "add_row bias must be a row vector");
        assert_eq!(b.cols(), self.value(x).cols(), "add_row width");
        let b = b.data().to_vec();
        let mut value = self.value(x).clone();
        for r in 0..value.rows() {
            for (o, &bv) in value.row_mut(r).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        self.push(value, Op::AddRow(x, bias))
    }

    /// `x · w + b` for a weight `[in, out]` and bias `[1, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let bv = self.value(b);
        assert_eq!(self.value(a).shape(), bv.shape(), "mul shape");
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let (r, c) = bv.shape();
        self.push(Tensor::from_vec(r, c, data), Op::Mul(a, b))
    }

    /// Elementwise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, x: Var, mask: Tensor<T>) -> Var {
        assert_eq!(self.value(x).shape(), mask.shape(), "mul_const shape");
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(mask.data())
            .map(|(&a, &m)| a * m)
            .collect();
        let (r, c) = mask.shape();
        self.push(Tensor::from_vec(r, c, data), Op::MulConst(x, mask))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let f = T::of(factor);
        let value = self.value(x).map(|v| v * f);
        self.push(value, Op::Scale(x, f))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(stable_sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.tanh());
        self.push(value, Op::Tanh(x))
    }

    /// Tanh-approximated Gaussian error linear unit.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| gelu(v).0);
        self.push(value, Op::Gelu(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        self.push(value, Op::SoftmaxRows(x))
    }

    /// Row-wise layer normalisation with learned `gain` and `bias` rows.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let n = T::of(cols as f64);
        let eps = T::of(LAYER_NORM_EPS);
        let mut xhat = Tensor::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) / n;
            let var = row
                .iter()
                .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
                / n;
            let s = T::one() / (var + eps).sqrt();
            for (o, &v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * s;
            }
            rstd.push(s);
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        assert_eq!(g.len(), cols, "layer_norm gain width");
        let mut value = xhat.clone();
        for r in 0..rows {
            for (c, o) in value.row_mut(r).iter_mut().enumerate() {
                *o = *o * g[c] + b[c];
            }
        }
        self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let pv = self.value(p);
                assert_eq!(pv.rows(), rows, "concat_cols row count");
                let w = pv.cols();
                value.row_mut(r)[offset..offset + w].copy_from_slice(pv.row(r));
                offset += w;
            }
        }
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols, "concat_rows width");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        self.push(
            Tensor::from_vec(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols(), "slice_cols out of range");
        let mut value = Tensor::zeros(xv.rows(), len);
        for r in 0..xv.rows() {
            value
                .row_mut(r)
                .copy_from_slice(&xv.row(r)[start..start + len]);
        }
        self.push(value, Op::SliceCols(x, start))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.rows(), "slice_rows out of range");
        let cols = xv.cols();
        let data = xv.data()[start * cols..(start + len) * cols].to_vec();
        self.push(Tensor::from_vec(len, cols, data), Op::SliceRows(x, start))
    }

    /// Selects rows `ids` of `table` (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let tv = self.value(table);
        let cols = tv.cols();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            assert!(id < tv.rows(), "gather index {id} out of range");
            data.extend_from_slice(tv.row(id));
        }
        self.push(
            Tensor::from_vec(ids.len(), cols, data),
            Op::Gather(table, ids.to_vec()),
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(T::zero(), |a, &v| a + v);
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Binary cross-entropy of a `1 x 1` probability against `target`,
    /// with the probability clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]`.
    pub fn bce(&mut self, p: Var, target: f64) -> Var {
        let pv = self.value(p);
        assert_eq!(pv.shape(), (1, 1), "bce expects a scalar probability");
        let raw = pv.item();
        let lo = T::of(BCE_CLAMP);
        let hi = T::one() - lo;
        let clamped = raw.max(lo).min(hi);
        let y = T::of(target);
        let loss = -(y * clamped.ln() + (T::one() - y) * (T::one() - clamped).ln());
        let active = raw > lo && raw < hi;
        self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                target: y,
                active,
            },
        )
    }

    /// Mean over rows of `-log softmax(logits)[target]`.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), targets.len(), "softmax_xent targets");
        let mut probs = lv.clone();
        let mut total = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            softmax_in_place(probs.row_mut(r));
            total += -probs.get(r, t).max(T::min_positive_value()).ln();
        }
        let loss = total / T::of(targets.len() as f64);
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Name and index of the first node holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<(&'static str, usize)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (n.op.name(), i))
    }

    /// Fails with [`Error::Numeric`] naming the first offending operation
    /// when any recorded value is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some((op, node)) => Err(Error::Numeric { op, node }),
            None => Ok(()),
        }
    }

    /// Gradient of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(contract!(
                "loss must be a scalar, got shape {:?}",
                self.value(loss).shape()
            ));
        }
        self.check_finite()?;
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                accumulate(grads, *a, matmul_nt(g, self.value(*b)));
                accumulate(grads, *b, matmul_tn(self.value(*a), g));
            }
            Op::MatMulNt(a, b) => {
                accumulate(grads, *a, matmul(g, self.value(*b)));
                accumulate(grads, *b, matmul_tn(g, self.value(*a)));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::AddRow(x, bias) => {
                accumulate(grads, *x, g.clone());
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, *bias, gb);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, zip_map(g, bv, |x, y| x * y));
                accumulate(grads, *b, zip_map(g, av, |x, y| x * y));
            }
            Op::MulConst(x, mask) => {
                accumulate(grads, *x, zip_map(g, mask, |x, y| x * y));
            }
            Op::Scale(x, f) => {
                let f = *f;
                accumulate(grads, *x, g.map(|v| v * f));
            }
            Op::Sigmoid(x) => {
                accumulate(grads, *x, zip_map(g, out, |gv, y| gv * y * (T::one() - y)));
            }
            Op::Tanh(x) => {
                accumulate(grads, *x, zip_map(g, out, |gv, y| gv * (T::one() - y * y)));
            }
            Op::Gelu(x) => {
                let xv = self.value(*x);
                accumulate(grads, *x, zip_map(g, xv, |gv, v| gv * gelu(v).1));
            }
            Op::SoftmaxRows(x) => {
                let mut gx = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let dot = y.iter().zip(gr).fold(T::zero(), |a, (&p, &q)| a + p * q);
                    for ((o, &p), &q) in gx.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *o = p * (q - dot);
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (rows, cols) = xhat.shape();
                let n = T::of(cols as f64);
                let gv = self.value(*gain).data();
                let mut gx = Tensor::zeros(rows, cols);
                let mut ggain = Tensor::zeros(1, cols);
                let mut gbias = Tensor::zeros(1, cols);
                for r in 0..rows {
                    let (xh, gr) = (xhat.row(r), g.row(r));
                    let mut sum_d = T::zero();
                    let mut sum_dx = T::zero();
                    for c in 0..cols {
                        let d = gr[c] * gv[c];
                        sum_d += d;
                        sum_dx += d * xh[c];
                        ggain.data_mut()[c] += gr[c] * xh[c];
                        gbias.data_mut()[c] += gr[c];
                    }
                    let s = rstd[r] / n;
                    for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                        let d = gr[c] * gv[c];
                        *o = s * (n * d - sum_d - xh[c] * sum_dx);
                    }
                }
                accumulate(grads, *x, gx);
                accumulate(grads, *gain, ggain);
                accumulate(grads, *bias, gbias);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, w) = self.value(p).shape();
                    let mut gp = Tensor::zeros(rows, w);
                    for r in 0..rows {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    accumulate(grads, p, gp);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.value(p).shape();
                    let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                    accumulate(grads, p, Tensor::from_vec(rows, cols, data));
                    offset += rows;
                }
            }
            Op::SliceCols(x, start) => {
                let (rows, cols) = self.value(*x).shape();
                let mut gx = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    gx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                accumulate(grads, *x, gx);
            }
            Op::SliceRows(x, start) => {
                let (rows, cols) = self.value(*x).shape();
                let mut gx = Tensor::zeros(rows, cols);
                gx.data_mut()[start * cols..(start + g.rows()) * cols].copy_from_slice(g.data());
                accumulate(grads, *x, gx);
            }
            Op::Gather(table, ids) => {
                let (rows, cols) = self.value(*table).shape();
                let mut gt = Tensor::zeros(rows, cols);
                for (r, &id) in ids.iter().enumerate() {
                    for (o, &v) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, *table, gt);
            }
            Op::Sum(x) => {
                let (rows, cols) = self.value(*x).shape();
                let gv = g.item();
                accumulate(grads, *x, Tensor::from_vec(rows, cols, vec![gv; rows * cols]));
            }
            Op::Bce { p, target, active } => {
                let d = if *active {
                    let pv = self.value(*p).item();
                    -*target / pv + (T::one() - *target) / (T::one() - pv)
                } else {
                    T::zero()
                };
                accumulate(grads, *p, Tensor::scalar(d * g.item()));
            }
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            } => {
                let scale = g.item() / T::of(targets.len() as f64);
                let mut gl = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    gl.row_mut(r)[t] -= T::one();
                    for v in gl.row_mut(r) {
                        *v *= scale;
                    }
                }
                accumulate(grads, *logits, gl);
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

pub(crate) fn stable_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

/// Value and derivative of the tanh-form GELU.
fn gelu<T: Scalar>(x: T) -> (T, T) {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let k = T::of(0.044715);
    let half = T::of(0.5);
    let three = T::of(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let value = half * x * (T::one() + t);
    let du = c * (T::one() + three * k * x * x);
    let deriv = half * (T::one() + t) + half * x * (T::one() - t * t) * du;
    (value, deriv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_gradient_two_w() {
        let mut tape = Tape::<f64>::new();
        let w = tape.leaf(Tensor::scalar(3.0));
        let sq = tape.mul(w, w);
        let grads = tape.backward(sq).unwrap();
        assert_eq!(grads.get(w).item(), 6.0);
    }

    #[test]
    fn unused_leaf_gets_exact_zero() {
        let mut tape = Tape::<f64>::new();
        let w = tape.leaf(Tensor::scalar(3.0));
        let unused = tape.leaf(Tensor::from_vec(2, 2, vec![1.0; 4]));
        let loss = tape.scale(w, 2.0);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(unused).data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn non_scalar_loss_is_a_contract_error() {
        let mut tape = Tape::<f64>::new();
        let w = tape.leaf(Tensor::from_vec(1, 2, vec![1.0, 2.0]));
        assert!(matches!(tape.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn nan_is_reported_with_the_producing_op() {
        let mut tape = Tape::<f64>::new();
        let w = tape.leaf(Tensor::scalar(-1.0));
        let big = tape.scale(w, f64::MAX);
        let inf = tape.scale(big, 10.0);
        let loss = tape.sum(inf);
        match tape.backward(loss) {
            Err(Error::Numeric { op, node }) => {
                assert_eq!(op, "scale");
                assert_eq!(node, inf.index());
            }
            other => panic!("expected numeric error, got {:?}", other.err()),
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, -5.0, 0.0, 50.0]));
        let y = tape.softmax_rows(x);
        for r in 0..2 {
            let s: f32 = tape.value(y).row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }
}
