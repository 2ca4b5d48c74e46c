//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s in execution
//! order, which is already a topological order. [`Tape::backward`] walks the
//! record in reverse and accumulates `∂loss/∂node` for every node that depends
//! on a leaf created with [`Tape::leaf`]. Constants ([`Tape::constant`]) never
//! receive gradients.
//!
//! Broadcasting is deliberately narrow: element-wise binary ops accept equal
//! shapes or a one-element operand on either side. Row-bias addition and
//! per-channel scaling have their own primitives.
//!
//! ```
//! use combolab::autodiff::Tape;
//! use combolab::Tensor;
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(3.0));
//! let y = tape.leaf(Tensor::scalar(4.0));
//! let loss = x.mul(y).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap().item(), 4.0);
//! assert_eq!(tape.grad(y).unwrap().item(), 3.0);
//! ```

mod gradcheck;
pub(crate) mod kernels;

use std::cell::{Ref, RefCell};
use std::fmt;

pub use gradcheck::{central_differences, grad_check, GradCheckReport, DEFAULT_STEP};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use kernels::ConvGeometry;

pub type NodeId = usize;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Abs(NodeId),
    Log(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Clamp(NodeId, f64, f64),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Softmax(NodeId),
    GlobalAvgPool(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    MeanAxis(NodeId, usize),
    Pick(NodeId, Vec<usize>),
    AddBias(NodeId, NodeId),
    ScaleChannels(NodeId, NodeId),
    Reshape(NodeId),
    Slice(NodeId, usize),
    Conv2d(NodeId, NodeId, NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Record of primitive applications for one forward pass.
///
/// A tape is single-threaded (`!Sync`); run independent tapes on separate
/// threads when parallelism is wanted.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({:?})", self.id, self.tape.value_ref(self.id))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Constant, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Accumulated gradient of a node, if any backward sweep reached it.
    pub fn grad(&self, var: Var<'_>) -> Option<Tensor> {
        self.check_owner(var);
        let nodes = self.nodes.borrow();
        let node = &nodes[var.id];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    /// Clears all accumulated gradients.
    pub fn zero_grad(&self) {
        for node in self.nodes.borrow_mut().iter_mut() {
            node.grad = None;
        }
    }

    /// Smallest distance from any `abs`/`relu`/`clamp` input to that
    /// primitive's non-differentiable point; `∞` when there is none.
    pub fn kink_margin(&self) -> f64 {
        let nodes = self.nodes.borrow();
        let mut margin = f64::INFINITY;
        for node in nodes.iter() {
            match node.op {
                Op::Abs(a) | Op::Relu(a) => {
                    for &x in nodes[a].value.data() {
                        margin = margin.min(x.abs());
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    for &x in nodes[a].value.data() {
                        if lo.is_finite() {
                            margin = margin.min((x - lo).abs());
                        }
                        if hi.is_finite() {
                            margin = margin.min((x - hi).abs());
                        }
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Reverse sweep from a one-element `loss`.
    ///
    /// Gradients are added to whatever the nodes already hold, so calling
    /// this twice without [`Tape::zero_grad`] doubles every gradient.
    pub fn backward(&self, loss: Var<'_>) -> Result<()> {
        self.check_owner(loss);
        let grads = {
            let nodes = self.nodes.borrow();
            if nodes[loss.id].value.numel() != 1 {
                return Err(Error::Contract(format!(
                    "backward needs a scalar loss, got shape {:?}",
                    nodes[loss.id].value.shape()
                )));
            }
            sweep(&nodes, loss.id)
        };
        let mut nodes = self.nodes.borrow_mut();
        for (node, g) in nodes.iter_mut().zip(grads) {
            if let Some(g) = g {
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_ref(&self, id: NodeId) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn check_owner(&self, var: Var<'_>) {
        assert!(
            std::ptr::eq(self, var.tape),
            "variable belongs to a different tape"
        );
    }
}

/// Broadcast kinds allowed for element-wise binary ops.
#[derive(Clone, Copy, PartialEq, Debug)]
enum Broadcast {
    Same,
    LeftScalar,
    RightScalar,
}

fn broadcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        Ok(Broadcast::Same)
    } else if a.numel() == 1 {
        Ok(Broadcast::LeftScalar)
    } else if b.numel() == 1 {
        Ok(Broadcast::RightScalar)
    } else {
        Err(Error::shape(op, a.shape(), b.shape()))
    }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, kind: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (shape, data): (Vec<usize>, Vec<f64>) = match kind {
        Broadcast::Same => (
            a.shape().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
        ),
        Broadcast::LeftScalar => {
            let x = a.data()[0];
            (b.shape().to_vec(), b.data().iter().map(|&y| f(x, y)).collect())
        }
        Broadcast::RightScalar => {
            let y = b.data()[0];
            (a.shape().to_vec(), a.data().iter().map(|&x| f(x, y)).collect())
        }
    };
    Tensor::new(shape, data).expect("broadcast shape")
}

/// Reduce an upstream gradient onto an operand that may have been broadcast.
fn unbroadcast(g: Vec<f64>, operand_is_scalar: bool) -> Vec<f64> {
    if operand_is_scalar {
        vec![g.iter().sum()]
    } else {
        g
    }
}

fn sweep(nodes: &[Node], loss: NodeId) -> Vec<Option<Vec<f64>>> {
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
    grads[loss] = Some(vec![1.0]);

    let add = |grads: &mut Vec<Option<Vec<f64>>>, id: NodeId, g: Vec<f64>| {
        if !nodes[id].requires_grad {
            return;
        }
        match &mut grads[id] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot => *slot = Some(g),
        }
    };

    for id in (0..=loss).rev() {
        let Some(g) = grads[id].take() else { continue };
        let node = &nodes[id];
        let val = |i: NodeId| &nodes[i].value;
        match node.op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (va, vb) = (val(a), val(b));
                let kind = broadcast("binary", va, vb).expect("validated at forward");
                let a_scalar = kind == Broadcast::LeftScalar;
                let b_scalar = kind == Broadcast::RightScalar;
                let at = |t: &Tensor, i: usize| if t.numel() == 1 { t.data()[0] } else { t.data()[i] };
                let (ga, gb): (Vec<f64>, Vec<f64>) = match node.op {
                    Op::Add(..) => (g.clone(), g.clone()),
                    Op::Sub(..) => (g.clone(), g.iter().map(|x| -x).collect()),
                    _ => (
                        g.iter().enumerate().map(|(i, &x)| x * at(vb, i)).collect(),
                        g.iter().enumerate().map(|(i, &x)| x * at(va, i)).collect(),
                    ),
                };
                add(&mut grads, a, unbroadcast(ga, a_scalar));
                add(&mut grads, b, unbroadcast(gb, b_scalar));
            }
            Op::Scale(a, k) => add(&mut grads, a, g.iter().map(|x| x * k).collect()),
            Op::Abs(a) => {
                let gi = g
                    .iter()
                    .zip(val(a).data())
                    .map(|(&u, &x)| {
                        if x > 0.0 {
                            u
                        } else if x < 0.0 {
                            -u
                        } else {
                            0.0
                        }
                    })
                    .collect();
                add(&mut grads, a, gi);
            }
            Op::Log(a) => {
                let gi = g.iter().zip(val(a).data()).map(|(u, x)| u / x).collect();
                add(&mut grads, a, gi);
            }
            Op::Relu(a) => {
                let gi = g
                    .iter()
                    .zip(val(a).data())
                    .map(|(&u, &x)| if x > 0.0 { u } else { 0.0 })
                    .collect();
                add(&mut grads, a, gi);
            }
            Op::Sigmoid(a) => {
                let gi = g
                    .iter()
                    .zip(node.value.data())
                    .map(|(u, y)| u * y * (1.0 - y))
                    .collect();
                add(&mut grads, a, gi);
            }
            Op::Clamp(a, lo, hi) => {
                let gi = g
                    .iter()
                    .zip(val(a).data())
                    .map(|(&u, &x)| if x >= lo && x <= hi { u } else { 0.0 })
                    .collect();
                add(&mut grads, a, gi);
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (val(a), val(b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                if nodes[a].requires_grad {
                    add(&mut grads, a, kernels::matmul_bt(&g, vb.data(), m, n, k));
                }
                if nodes[b].requires_grad {
                    add(&mut grads, b, kernels::matmul_at(va.data(), &g, m, k, n));
                }
            }
            Op::Transpose(a) => {
                let s = node.value.shape();
                add(&mut grads, a, kernels::transpose(&g, s[0], s[1]));
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let cols = node.value.shape()[1];
                let mut gi = vec![0.0; g.len()];
                for ((gr, yr), out) in g.chunks(cols).zip(y.chunks(cols)).zip(gi.chunks_mut(cols)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(u, p)| u * p).sum();
                    for ((o, &u), &p) in out.iter_mut().zip(gr).zip(yr) {
                        *o = p * (u - dot);
                    }
                }
                add(&mut grads, a, gi);
            }
            Op::GlobalAvgPool(a) => {
                let s = val(a).shape();
                let area = s[s.len() - 2] * s[s.len() - 1];
                let scale = 1.0 / area as f64;
                let gi = g.iter().flat_map(|&u| std::iter::repeat_n(u * scale, area)).collect();
                add(&mut grads, a, gi);
            }
            Op::Sum(a) => add(&mut grads, a, vec![g[0]; val(a).numel()]),
            Op::Mean(a) => {
                let n = val(a).numel();
                add(&mut grads, a, vec![g[0] / n as f64; n]);
            }
            Op::MeanAxis(a, axis) => {
                let s = val(a).shape();
                let (outer, len, inner) = axis_split(s, axis);
                let mut gi = vec![0.0; val(a).numel()];
                for o in 0..outer {
                    for j in 0..len {
                        for i in 0..inner {
                            gi[(o * len + j) * inner + i] = g[o * inner + i] / len as f64;
                        }
                    }
                }
                add(&mut grads, a, gi);
            }
            Op::Pick(a, ref idx) => {
                let cols = val(a).shape()[1];
                let mut gi = vec![0.0; val(a).numel()];
                for (r, (&c, &u)) in idx.iter().zip(&g).enumerate() {
                    gi[r * cols + c] = u;
                }
                add(&mut grads, a, gi);
            }
            Op::AddBias(a, b) => {
                let cols = val(b).numel();
                let mut gb = vec![0.0; cols];
                for row in g.chunks(cols) {
                    gb.iter_mut().zip(row).for_each(|(acc, u)| *acc += u);
                }
                add(&mut grads, a, g.clone());
                add(&mut grads, b, gb);
            }
            Op::ScaleChannels(u, s) => {
                let (vu, vs) = (val(u), val(s));
                let block = vu.numel() / vs.numel();
                let gu = g
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x * vs.data()[i / block])
                    .collect();
                let gs = g
                    .chunks(block)
                    .zip(vu.data().chunks(block))
                    .map(|(gc, uc)| gc.iter().zip(uc).map(|(x, y)| x * y).sum())
                    .collect();
                add(&mut grads, u, gu);
                add(&mut grads, s, gs);
            }
            Op::Reshape(a) => add(&mut grads, a, g.clone()),
            Op::Slice(a, offset) => {
                let mut gi = vec![0.0; val(a).numel()];
                gi[offset..offset + g.len()].copy_from_slice(&g);
                add(&mut grads, a, gi);
            }
            Op::Conv2d(x, w, b) => {
                let geom = conv_geometry(val(x).shape(), val(w).shape());
                let (gx, gw, gb) = geom.backward(val(x).data(), val(w).data(), &g);
                add(&mut grads, x, gx);
                add(&mut grads, w, gw);
                add(&mut grads, b, gb);
            }
        }
        grads[id] = Some(g);
    }
    grads
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn conv_geometry(x: &[usize], w: &[usize]) -> ConvGeometry {
    ConvGeometry {
        batch: x[0],
        in_channels: x[1],
        out_channels: w[0],
        height: x[2],
        width: x[3],
        kernel: w[2],
    }
}

impl<'t> Var<'t> {
    pub fn id(self) -> NodeId {
        self.id
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    /// Copy of the forward value.
    pub fn value(self) -> Tensor {
        self.tape.value_ref(self.id).clone()
    }

    pub fn shape(self) -> Vec<usize> {
        self.tape.value_ref(self.id).shape().to_vec()
    }

    /// The value of a one-element node.
    pub fn item(self) -> f64 {
        self.tape.value_ref(self.id).item()
    }

    pub fn grad(self) -> Option<Tensor> {
        self.tape.grad(self)
    }

    fn unary(self, value: Tensor, op: Op) -> Var<'t> {
        let req = self.tape.requires(self.id);
        self.tape.push(value, op, req)
    }

    fn binary(self, other: Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        self.tape.check_owner(other);
        let req = self.tape.requires(self.id) || self.tape.requires(other.id);
        self.tape.push(value, op, req)
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Tensor {
        self.tape.value_ref(self.id).map(f)
    }

    fn elementwise(self, other: Var<'t>, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.tape.check_owner(other);
        let a = self.tape.value_ref(self.id);
        let b = self.tape.value_ref(other.id);
        let kind = broadcast(name, &a, &b)?;
        Ok(zip_broadcast(&a, &b, kind, f))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.elementwise(other, "add", |x, y| x + y)?;
        Ok(self.binary(other, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.elementwise(other, "sub", |x, y| x - y)?;
        Ok(self.binary(other, v, Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.elementwise(other, "mul", |x, y| x * y)?;
        Ok(self.binary(other, v, Op::Mul(self.id, other.id)))
    }

    /// Multiplication by a constant.
    pub fn scale(self, k: f64) -> Var<'t> {
        let v = self.map(|x| x * k);
        self.unary(v, Op::Scale(self.id, k))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn square(self) -> Var<'t> {
        self.mul(self).expect("same shape")
    }

    /// `|x|`; the backward rule uses `sign(0) = 0`.
    pub fn abs(self) -> Var<'t> {
        let v = self.map(f64::abs);
        self.unary(v, Op::Abs(self.id))
    }

    /// Natural log. Errors on any non-positive element; clamp first.
    pub fn log(self) -> Result<Var<'t>> {
        if let Some(&bad) = self.tape.value_ref(self.id).data().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain(format!("log of non-positive value {bad}")));
        }
        let v = self.map(f64::ln);
        Ok(self.unary(v, Op::Log(self.id)))
    }

    pub fn relu(self) -> Var<'t> {
        let v = self.map(|x| x.max(0.0));
        self.unary(v, Op::Relu(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let v = self.map(kernels::sigmoid);
        self.unary(v, Op::Sigmoid(self.id))
    }

    /// Clamp into `[lo, hi]`; gradient passes only inside the interval.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        assert!(lo <= hi, "clamp bounds reversed");
        let v = self.map(|x| x.clamp(lo, hi));
        self.unary(v, Op::Clamp(self.id, lo, hi))
    }

    /// Rank-2 matrix product.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.tape.check_owner(other);
        let v = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(other.id);
            if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(Error::shape("matmul", a.shape(), b.shape()));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            Tensor::new(vec![m, n], kernels::matmul(a.data(), b.data(), m, k, n))?
        };
        Ok(self.binary(other, v, Op::MatMul(self.id, other.id)))
    }

    /// Rank-2 transpose.
    pub fn t(self) -> Result<Var<'t>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            if a.rank() != 2 {
                return Err(Error::shape("transpose", a.shape(), &[]));
            }
            let (r, c) = (a.shape()[0], a.shape()[1]);
            Tensor::new(vec![c, r], kernels::transpose(a.data(), r, c))?
        };
        Ok(self.unary(v, Op::Transpose(self.id)))
    }

    /// Row-wise softmax over an `N×C` matrix, stabilised by subtracting each row maximum.
    pub fn softmax(self) -> Result<Var<'t>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            if a.rank() != 2 || a.shape()[1] < 2 {
                return Err(Error::Contract(format!(
                    "softmax needs an N×C matrix with C ≥ 2, got {:?}",
                    a.shape()
                )));
            }
            let (r, c) = (a.shape()[0], a.shape()[1]);
            Tensor::new(vec![r, c], kernels::softmax_rows(a.data(), r, c))?
        };
        Ok(self.unary(v, Op::Softmax(self.id)))
    }

    /// Mean over the last two (spatial) axes: `[C,H,W] → [C]`, `[N,C,H,W] → [N,C]`.
    pub fn global_avg_pool(self) -> Result<Var<'t>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            if a.rank() != 3 && a.rank() != 4 {
                return Err(Error::shape("global_avg_pool", a.shape(), &[]));
            }
            let s = a.shape();
            let area = s[s.len() - 2] * s[s.len() - 1];
            let data = a
                .data()
                .chunks(area)
                .map(|c| c.iter().sum::<f64>() / area as f64)
                .collect();
            Tensor::new(s[..s.len() - 2].to_vec(), data)?
        };
        Ok(self.unary(v, Op::GlobalAvgPool(self.id)))
    }

    pub fn sum(self) -> Var<'t> {
        let v = Tensor::scalar(self.tape.value_ref(self.id).data().iter().sum());
        self.unary(v, Op::Sum(self.id))
    }

    /// Mean over every element.
    pub fn mean(self) -> Var<'t> {
        let v = {
            let a = self.tape.value_ref(self.id);
            Tensor::scalar(a.data().iter().sum::<f64>() / a.numel() as f64)
        };
        self.unary(v, Op::Mean(self.id))
    }

    /// Mean along one axis, which is removed from the shape.
    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            if axis >= a.rank() {
                return Err(Error::Contract(format!(
                    "axis {axis} out of range for shape {:?}",
                    a.shape()
                )));
            }
            let (outer, len, inner) = axis_split(a.shape(), axis);
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for j in 0..len {
                    for i in 0..inner {
                        out[o * inner + i] += a.data()[(o * len + j) * inner + i];
                    }
                }
            }
            out.iter_mut().for_each(|x| *x /= len as f64);
            let mut shape = a.shape().to_vec();
            shape.remove(axis);
            Tensor::new(shape, out)?
        };
        Ok(self.unary(v, Op::MeanAxis(self.id, axis)))
    }

    /// Selects `x[i, indices[i]]` from an `N×C` matrix, giving `[N]`.
    pub fn pick(self, indices: &[usize]) -> Result<Var<'t>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            if a.rank() != 2 || a.shape()[0] != indices.len() {
                return Err(Error::shape("pick", a.shape(), &[indices.len()]));
            }
            let cols = a.shape()[1];
            if let Some(&bad) = indices.iter().find(|&&c| c >= cols) {
                return Err(Error::Contract(format!(
                    "class index {bad} out of range [0, {cols})"
                )));
            }
            let data = indices
                .iter()
                .enumerate()
                .map(|(r, &c)| a.data()[r * cols + c])
                .collect();
            Tensor::new(vec![indices.len()], data)?
        };
        Ok(self.unary(v, Op::Pick(self.id, indices.to_vec())))
    }

    /// `x[N×k] + b[k]` added to every row.
    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        self.tape.check_owner(bias);
        let v = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(bias.id);
            if a.rank() != 2 || b.rank() != 1 || a.shape()[1] != b.numel() {
                return Err(Error::shape("add_bias", a.shape(), b.shape()));
            }
            let k = b.numel();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| x + b.data()[i % k])
                .collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        Ok(self.binary(bias, v, Op::AddBias(self.id, bias.id)))
    }

    /// Multiplies each trailing block of `self` by the matching entry of
    /// `scales`, whose shape must be a prefix of `self`'s shape
    /// (e.g. `[N,C,H,W]` scaled by `[N,C]`).
    pub fn scale_channels(self, scales: Var<'t>) -> Result<Var<'t>> {
        self.tape.check_owner(scales);
        let v = {
            let u = self.tape.value_ref(self.id);
            let s = self.tape.value_ref(scales.id);
            if s.rank() == 0 || s.rank() > u.rank() || u.shape()[..s.rank()] != *s.shape() {
                return Err(Error::shape("scale_channels", u.shape(), s.shape()));
            }
            let block = u.numel() / s.numel();
            let data = u
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| x * s.data()[i / block])
                .collect();
            Tensor::new(u.shape().to_vec(), data)?
        };
        Ok(self.binary(scales, v, Op::ScaleChannels(self.id, scales.id)))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            a.reshape(shape)
                .map_err(|_| Error::shape("reshape", a.shape(), shape))?
        };
        Ok(self.unary(v, Op::Reshape(self.id)))
    }

    /// Contiguous sub-vector `x[offset..offset+len]` of a rank-1 tensor.
    pub fn slice(self, offset: usize, len: usize) -> Result<Var<'t>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            if a.rank() != 1 || len == 0 || offset + len > a.numel() {
                return Err(Error::shape("slice", a.shape(), &[offset, len]));
            }
            Tensor::from_vec(a.data()[offset..offset + len].to_vec())
        };
        Ok(self.unary(v, Op::Slice(self.id, offset)))
    }

    /// Stride-1 "same" convolution: `x[N,Cin,H,W]`, `weight[Cout,Cin,k,k]` (odd k), `bias[Cout]`.
    pub fn conv2d(self, weight: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
        self.tape.check_owner(weight);
        self.tape.check_owner(bias);
        let v = {
            let x = self.tape.value_ref(self.id);
            let w = self.tape.value_ref(weight.id);
            let b = self.tape.value_ref(bias.id);
            let (xs, ws) = (x.shape(), w.shape());
            if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] || ws[2] != ws[3] || ws[2] % 2 == 0 {
                return Err(Error::shape("conv2d", xs, ws));
            }
            if b.shape() != [ws[0]] {
                return Err(Error::shape("conv2d bias", ws, b.shape()));
            }
            let geom = conv_geometry(xs, ws);
            let out = geom.forward(x.data(), w.data(), b.data());
            Tensor::new(vec![xs[0], ws[0], xs[2], xs[3]], out)?
        };
        let req = [self.id, weight.id, bias.id].iter().any(|&i| self.tape.requires(i));
        Ok(self.tape.push(v, Op::Conv2d(self.id, weight.id, bias.id), req))
    }
}
