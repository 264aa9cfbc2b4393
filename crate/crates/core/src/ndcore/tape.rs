//! Wengert-list reverse-mode differentiation.
//!
//! Every primitive appends a node holding its output value and the ids of its
//! inputs. Inputs always precede outputs, so walking the list backwards visits
//! nodes in reverse topological order.

use super::tensor::{axis_extents, Tensor};
use super::TensorError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    Ln(Var),
    Exp(Var),
    Sqrt(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Clamp(Var, f64, f64),
    MatMul(Var, Var),
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    Tile {
        input: Var,
        axis: usize,
    },
    Reshape(Var),
    SumAll(Var),
    MeanAll(Var),
    SumAxis(Var, usize),
    MeanAxis(Var, usize),
    ProdAxis(Var, usize),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive applications.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by the leaf handles.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when it did not require gradients or was
    /// not reachable from the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient for `var`, zero-filled when unreachable.
    pub fn get_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

fn mismatch(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &d)| d)
        .collect();
    if out.is_empty() {
        out.push(1);
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a leaf whose gradient is wanted.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, requires_grad)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        Ok(self.push_op(out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Adds a vector along the last axis of `x` (bias broadcast).
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        let (tx, tr) = (self.value(x), self.value(row));
        let n = *tx.shape().last().unwrap();
        if tr.len() != n {
            return Err(mismatch("add_row", tx, tr));
        }
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + tr.data()[i % n])
            .collect();
        let out = Tensor::from_parts(tx.shape().to_vec(), data);
        Ok(self.push_op(out, Op::AddRow(x, row), &[x, row]))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v + c);
        self.push_op(out, Op::AddScalar(x), &[x])
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.push_op(out, Op::MulScalar(x, c), &[x])
    }

    /// `c - x`.
    pub fn rsub_scalar(&mut self, c: f64, x: Var) -> Var {
        let neg = self.mul_scalar(x, -1.0);
        self.add_scalar(neg, c)
    }

    pub fn ln(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        if let Some(&bad) = t.data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(TensorError::Domain { op: "ln", value: bad });
        }
        let out = t.map(f64::ln);
        Ok(self.push_op(out, Op::Ln(x), &[x]))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        self.push_op(out, Op::Exp(x), &[x])
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        if let Some(&bad) = t.data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(TensorError::Domain {
                op: "sqrt",
                value: bad,
            });
        }
        let out = t.map(f64::sqrt);
        Ok(self.push_op(out, Op::Sqrt(x), &[x]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push_op(out, Op::Sigmoid(x), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push_op(out, Op::LeakyRelu(x, slope), &[x])
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        self.push_op(out, Op::Clamp(x, lo, hi), &[x])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let out = Tensor::from_parts(vec![m, n], matmul_nn(ta.data(), tb.data(), m, k, n));
        Ok(self.push_op(out, Op::MatMul(a, b), &[a, b]))
    }

    /// Strided valid 1-D convolution.
    ///
    /// `input` is `[batch, in_ch, len]`, `weight` is `[out_ch, in_ch, kernel]`
    /// and `bias` is `[out_ch]`.
    pub fn conv1d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
    ) -> Result<Var, TensorError> {
        let (tx, tw, tb) = (self.value(input), self.value(weight), self.value(bias));
        if tx.rank() != 3 || tw.rank() != 3 || tx.shape()[1] != tw.shape()[1] {
            return Err(mismatch("conv1d", tx, tw));
        }
        let (batch, cin, len) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (cout, kernel) = (tw.shape()[0], tw.shape()[2]);
        if tb.len() != cout {
            return Err(mismatch("conv1d bias", tw, tb));
        }
        if stride == 0 || kernel > len {
            return Err(TensorError::InvalidShape {
                op: "conv1d",
                shape: tx.shape().to_vec(),
                reason: "kernel longer than input or zero stride",
            });
        }
        let lout = (len - kernel) / stride + 1;
        let (x, w, bvals) = (tx.data(), tw.data(), tb.data());
        let mut out = vec![0.0; batch * cout * lout];
        for b in 0..batch {
            for co in 0..cout {
                let orow = &mut out[(b * cout + co) * lout..(b * cout + co + 1) * lout];
                orow.fill(bvals[co]);
                for ci in 0..cin {
                    let xrow = &x[(b * cin + ci) * len..(b * cin + ci + 1) * len];
                    let wrow = &w[(co * cin + ci) * kernel..(co * cin + ci + 1) * kernel];
                    for (t, o) in orow.iter_mut().enumerate() {
                        let seg = &xrow[t * stride..t * stride + kernel];
                        *o += seg.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
        let out = Tensor::from_parts(vec![batch, cout, lout], out);
        Ok(self.push_op(
            out,
            Op::Conv1d {
                input,
                weight,
                bias,
                stride,
            },
            &[input, weight, bias],
        ))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = self.value(*inputs.first().ok_or(TensorError::Empty { op: "concat" })?);
        if axis >= first.rank() {
            return Err(TensorError::InvalidAxis {
                op: "concat",
                axis,
                rank: first.rank(),
            });
        }
        let mut shape = first.shape().to_vec();
        let mut total = 0;
        for &v in inputs {
            let t = self.value(v);
            let compatible = t.rank() == first.rank()
                && t
                    .shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(mismatch("concat", first, t));
            }
            total += t.shape()[axis];
        }
        shape[axis] = total;
        let (outer, _, inner) = axis_extents(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let out = Tensor::from_parts(shape, data);
        Ok(self.push_op(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Takes `len` consecutive entries along `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(TensorError::InvalidAxis {
                op: "slice",
                axis,
                rank: t.rank(),
            });
        }
        if len == 0 || start + len > t.shape()[axis] {
            return Err(TensorError::InvalidShape {
                op: "slice",
                shape: t.shape().to_vec(),
                reason: "slice range out of bounds",
            });
        }
        let (outer, n, inner) = axis_extents(t.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let out = Tensor::from_parts(shape, data);
        Ok(self.push_op(out, Op::Slice { input: x, axis, start }, &[x]))
    }

    /// Cyclically repeats entries along `axis` until it has length `len`.
    pub fn tile(&mut self, x: Var, axis: usize, len: usize) -> Result<Var, TensorError> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(TensorError::InvalidAxis {
                op: "tile",
                axis,
                rank: t.rank(),
            });
        }
        if len == 0 {
            return Err(TensorError::Empty { op: "tile" });
        }
        let (outer, n, inner) = axis_extents(t.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            for j in 0..len {
                let base = o * n * inner + (j % n) * inner;
                data.extend_from_slice(&t.data()[base..base + inner]);
            }
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let out = Tensor::from_parts(shape, data);
        Ok(self.push_op(out, Op::Tile { input: x, axis }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push_op(out, Op::Reshape(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push_op(Tensor::scalar(s), Op::SumAll(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push_op(Tensor::scalar(m), Op::MeanAll(x), &[x])
    }

    fn reduce_axis(
        &mut self,
        name: &'static str,
        x: Var,
        axis: usize,
        init: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(TensorError::InvalidAxis {
                op: name,
                axis,
                rank: t.rank(),
            });
        }
        let (outer, n, inner) = axis_extents(t.shape(), axis);
        let mut data = vec![init; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                for i in 0..inner {
                    let slot = &mut data[o * inner + i];
                    *slot = f(*slot, t.data()[(o * n + j) * inner + i]);
                }
            }
        }
        Ok(Tensor::from_parts(reduced_shape(t.shape(), axis), data))
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let out = self.reduce_axis("sum_axis", x, axis, 0.0, |a, b| a + b)?;
        Ok(self.push_op(out, Op::SumAxis(x, axis), &[x]))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let n = self.value(x).shape().get(axis).copied().unwrap_or(1) as f64;
        let out = self
            .reduce_axis("mean_axis", x, axis, 0.0, |a, b| a + b)?
            .map(|v| v / n);
        Ok(self.push_op(out, Op::MeanAxis(x, axis), &[x]))
    }

    pub fn prod_axis(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let out = self.reduce_axis("prod_axis", x, axis, 1.0, |a, b| a * b)?;
        Ok(self.push_op(out, Op::ProdAxis(x, axis), &[x]))
    }

    /// Computes d(loss)/d(leaf) for every leaf recorded with [`Tape::param`].
    pub fn backward(self, loss: Var) -> Result<Gradients, TensorError> {
        let nodes = self.nodes;
        let loss_value = &nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(TensorError::NotScalar {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let out = node.value.data();
            let mut acc = Accumulator {
                nodes: &nodes,
                grads: &mut grads,
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    acc.add(*a, |gi| gi.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                    acc.add(*b, |gi| gi.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                }
                Op::Sub(a, b) => {
                    acc.add(*a, |gi| gi.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                    acc.add(*b, |gi| gi.iter_mut().zip(&g).for_each(|(x, y)| *x -= y));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    acc.add(*a, |gi| {
                        for i in 0..gi.len() {
                            gi[i] += g[i] * vb[i];
                        }
                    });
                    acc.add(*b, |gi| {
                        for i in 0..gi.len() {
                            gi[i] += g[i] * va[i];
                        }
                    });
                }
                Op::Div(a, b) => {
                    let vb = nodes[b.0].value.data();
                    acc.add(*a, |gi| {
                        for i in 0..gi.len() {
                            gi[i] += g[i] / vb[i];
                        }
                    });
                    acc.add(*b, |gi| {
                        for i in 0..gi.len() {
                            gi[i] -= g[i] * out[i] / vb[i];
                        }
                    });
                }
                Op::AddRow(x, row) => {
                    acc.add(*x, |gi| gi.iter_mut().zip(&g).for_each(|(a, b)| *a += b));
                    acc.add(*row, |gi| {
                        let n = gi.len();
                        for (i, v) in g.iter().enumerate() {
                            gi[i % n] += v;
                        }
                    });
                }
                Op::AddScalar(x) => {
                    acc.add(*x, |gi| gi.iter_mut().zip(&g).for_each(|(a, b)| *a += b));
                }
                Op::MulScalar(x, c) => {
                    acc.add(*x, |gi| gi.iter_mut().zip(&g).for_each(|(a, b)| *a += c * b));
                }
                Op::Ln(x) => {
                    let vx = nodes[x.0].value.data();
                    acc.add(*x, |gi| {
                        for i in 0..gi.len() {
                            gi[i] += g[i] / vx[i];
                        }
                    });
                }
                Op::Exp(x) => {
                    acc.add(*x, |gi| {
                        for i in 0..gi.len() {
                            gi[i] += g[i] * out[i];
                        }
                    });
                }
                Op::Sqrt(x) => {
                    acc.add(*x, |gi| {
                        for i in 0..gi.len() {
                            gi[i] += g[i] * 0.5 / out[i];
                        }
                    });
                }
                Op::Sigmoid(x) => {
                    acc.add(*x, |gi| {
                        for i in 0..gi.len() {
                            gi[i] += g[i] * out[i] * (1.0 - out[i]);
                        }
                    });
                }
                Op::LeakyRelu(x, slope) => {
                    let vx = nodes[x.0].value.data();
                    acc.add(*x, |gi| {
                        for i in 0..gi.len() {
                            gi[i] += if vx[i] > 0.0 { g[i] } else { slope * g[i] };
                        }
                    });
                }
                Op::Clamp(x, lo, hi) => {
                    let vx = nodes[x.0].value.data();
                    acc.add(*x, |gi| {
                        for i in 0..gi.len() {
                            if vx[i] > *lo && vx[i] < *hi {
                                gi[i] += g[i];
                            }
                        }
                    });
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    acc.add(*a, |gi| matmul_nt_acc(&g, tb.data(), gi, m, n, k));
                    acc.add(*b, |gi| matmul_tn_acc(ta.data(), &g, gi, m, k, n));
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    stride,
                } => {
                    let (tx, tw) = (&nodes[input.0].value, &nodes[weight.0].value);
                    let (batch, cin, len) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                    let (cout, kernel) = (tw.shape()[0], tw.shape()[2]);
                    let lout = node.value.shape()[2];
                    let (x, w) = (tx.data(), tw.data());
                    let stride = *stride;
                    acc.add(*bias, |gb| {
                        for b in 0..batch {
                            for (co, slot) in gb.iter_mut().enumerate() {
                                let base = (b * cout + co) * lout;
                                *slot += g[base..base + lout].iter().sum::<f64>();
                            }
                        }
                    });
                    acc.add(*weight, |gw| {
                        for b in 0..batch {
                            for co in 0..cout {
                                let grow = &g[(b * cout + co) * lout..(b * cout + co + 1) * lout];
                                for ci in 0..cin {
                                    let xrow = &x[(b * cin + ci) * len..(b * cin + ci + 1) * len];
                                    let gwrow = &mut gw
                                        [(co * cin + ci) * kernel..(co * cin + ci + 1) * kernel];
                                    for (t, &gv) in grow.iter().enumerate() {
                                        let seg = &xrow[t * stride..t * stride + kernel];
                                        gwrow.iter_mut().zip(seg).for_each(|(a, s)| *a += gv * s);
                                    }
                                }
                            }
                        }
                    });
                    acc.add(*input, |gx| {
                        for b in 0..batch {
                            for co in 0..cout {
                                let grow = &g[(b * cout + co) * lout..(b * cout + co + 1) * lout];
                                for ci in 0..cin {
                                    let wrow = &w[(co * cin + ci) * kernel..(co * cin + ci + 1) * kernel];
                                    let gxrow = &mut gx[(b * cin + ci) * len..(b * cin + ci + 1) * len];
                                    for (t, &gv) in grow.iter().enumerate() {
                                        let seg = &mut gxrow[t * stride..t * stride + kernel];
                                        seg.iter_mut().zip(wrow).for_each(|(a, wv)| *a += gv * wv);
                                    }
                                }
                            }
                        }
                    });
                }
                Op::Concat { inputs, axis } => {
                    let (outer, total, inner) = axis_extents(node.value.shape(), *axis);
                    let mut offset = 0;
                    for v in inputs {
                        let n = nodes[v.0].value.shape()[*axis];
                        acc.add(*v, |gi| {
                            for o in 0..outer {
                                let src = (o * total + offset) * inner;
                                let dst = o * n * inner;
                                for i in 0..n * inner {
                                    gi[dst + i] += g[src + i];
                                }
                            }
                        });
                        offset += n;
                    }
                }
                Op::Slice { input, axis, start } => {
                    let (outer, n, inner) = axis_extents(nodes[input.0].value.shape(), *axis);
                    let len = node.value.shape()[*axis];
                    acc.add(*input, |gi| {
                        for o in 0..outer {
                            let dst = o * n * inner + start * inner;
                            let src = o * len * inner;
                            for i in 0..len * inner {
                                gi[dst + i] += g[src + i];
                            }
                        }
                    });
                }
                Op::Tile { input, axis } => {
                    let (outer, n, inner) = axis_extents(nodes[input.0].value.shape(), *axis);
                    let len = node.value.shape()[*axis];
                    acc.add(*input, |gi| {
                        for o in 0..outer {
                            for j in 0..len {
                                let dst = o * n * inner + (j % n) * inner;
                                let src = (o * len + j) * inner;
                                for i in 0..inner {
                                    gi[dst + i] += g[src + i];
                                }
                            }
                        }
                    });
                }
                Op::Reshape(x) => {
                    acc.add(*x, |gi| gi.iter_mut().zip(&g).for_each(|(a, b)| *a += b));
                }
                Op::SumAll(x) => {
                    acc.add(*x, |gi| gi.iter_mut().for_each(|a| *a += g[0]));
                }
                Op::MeanAll(x) => {
                    acc.add(*x, |gi| {
                        let n = gi.len() as f64;
                        gi.iter_mut().for_each(|a| *a += g[0] / n)
                    });
                }
                Op::SumAxis(x, axis) | Op::MeanAxis(x, axis) => {
                    let (outer, n, inner) = axis_extents(nodes[x.0].value.shape(), *axis);
                    let scale = if matches!(node.op, Op::MeanAxis(..)) {
                        1.0 / n as f64
                    } else {
                        1.0
                    };
                    acc.add(*x, |gi| {
                        for o in 0..outer {
                            for j in 0..n {
                                for i in 0..inner {
                                    gi[(o * n + j) * inner + i] += scale * g[o * inner + i];
                                }
                            }
                        }
                    });
                }
                Op::ProdAxis(x, axis) => {
                    let tx = &nodes[x.0].value;
                    let (outer, n, inner) = axis_extents(tx.shape(), *axis);
                    let vx = tx.data();
                    acc.add(*x, |gi| {
                        // Exclusive prefix/suffix products avoid dividing by zero entries.
                        let mut prefix = vec![1.0; n];
                        for o in 0..outer {
                            for i in 0..inner {
                                let at = |j: usize| (o * n + j) * inner + i;
                                let mut run = 1.0;
                                for (j, p) in prefix.iter_mut().enumerate() {
                                    *p = run;
                                    run *= vx[at(j)];
                                }
                                let mut suffix = 1.0;
                                for j in (0..n).rev() {
                                    gi[at(j)] += g[o * inner + i] * prefix[j] * suffix;
                                    suffix *= vx[at(j)];
                                }
                            }
                        }
                    });
                }
            }
        }

        let grads = grads
            .into_iter()
            .zip(&nodes)
            .map(|(g, node)| match (&node.op, g) {
                (Op::Leaf, Some(g)) if node.requires_grad => {
                    Some(Tensor::from_parts(node.value.shape().to_vec(), g))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }
}

struct Accumulator<'a> {
    nodes: &'a [Node],
    grads: &'a mut [Option<Vec<f64>>],
}

impl Accumulator<'_> {
    fn add(&mut self, var: Var, f: impl FnOnce(&mut [f64])) {
        let node = &self.nodes[var.0];
        if !node.requires_grad {
            return;
        }
        let buf = self.grads[var.0].get_or_insert_with(|| vec![0.0; node.value.len()]);
        f(buf);
    }
}

fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            orow.iter_mut()
                .zip(&b[p * n..(p + 1) * n])
                .for_each(|(o, bv)| *o += av * bv);
        }
    }
    out
}

/// `ga += g · bᵀ` with g `[m,n]`, b `[k,n]`.
fn matmul_nt_acc(g: &[f64], b: &[f64], ga: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            ga[i * k + p] += grow
                .iter()
                .zip(&b[p * n..(p + 1) * n])
                .map(|(x, y)| x * y)
                .sum::<f64>();
        }
    }
}

/// `gb += aᵀ · g` with a `[m,k]`, g `[m,n]`.
fn matmul_tn_acc(a: &[f64], g: &[f64], gb: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            gb[p * n..(p + 1) * n]
                .iter_mut()
                .zip(grow)
                .for_each(|(o, gv)| *o += av * gv);
        }
    }
}
