//! Reverse-mode automatic differentiation over a recorded op graph.
//!
//! A [`Graph`] is built define-by-run: every op appends a node, so node order
//! is a topological order. [`Graph::backward`] walks the nodes once in reverse.
//! Gradients accumulate until [`Graph::zero_grad`]; calling `backward` twice
//! without a reset is an error.
//!
//! Leaf values can be overwritten and the graph re-evaluated with
//! [`Graph::recompute`], which is what [`grad_check`] uses to probe the loss.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::growth::{
    effective_size_slope, effective_size_unchecked, mask_values, psi_prime_unchecked, psi_unchecked,
};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Tanh,
    /// `sin²(πx/2)`
    SinSqHalfPi,
    Identity,
    Square,
    /// The piecewise transition function of [`crate::growth::psi`].
    Psi,
}

impl FromStr for UnaryOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tanh" => UnaryOp::Tanh,
            "sin_sq_halfpi" => UnaryOp::SinSqHalfPi,
            "identity" => UnaryOp::Identity,
            "square" => UnaryOp::Square,
            "psi" => UnaryOp::Psi,
            other => return Err(Error::invalid(format!("unknown unary op `{other}`"))),
        })
    }
}

impl UnaryOp {
    fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::SinSqHalfPi => {
                let s = (std::f64::consts::FRAC_PI_2 * x).sin();
                s * s
            }
            UnaryOp::Identity => x,
            UnaryOp::Square => x * x,
            UnaryOp::Psi => psi_unchecked(x),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryOp::Tanh => 1.0 - y * y,
            UnaryOp::SinSqHalfPi => std::f64::consts::FRAC_PI_2 * (std::f64::consts::PI * x).sin(),
            UnaryOp::Identity => 1.0,
            UnaryOp::Square => 2.0 * x,
            UnaryOp::Psi => psi_prime_unchecked(x),
        }
    }

    fn kink_distance(self, x: f64) -> f64 {
        match self {
            // ψ is C¹ at its joins but its curvature jumps there.
            UnaryOp::Psi => (x + 1.0).abs().min(x.abs()),
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

impl FromStr for BinaryOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "add" => BinaryOp::Add,
            "sub" => BinaryOp::Sub,
            "mul" => BinaryOp::Mul,
            other => return Err(Error::invalid(format!("unknown binary op `{other}`"))),
        })
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf {
        trainable: bool,
    },
    MatVec {
        w: Var,
        x: Var,
    },
    /// `x[B×n]·wᵀ + b`, with `w[m×n]` and `b[m]`.
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    Unary(UnaryOp, Var),
    Binary(BinaryOp, Var, Var),
    /// Multiplies column `j` of `x[B×m]` by `s[j]`.
    ScaleColumns {
        x: Var,
        s: Var,
    },
    /// Appends scalar `s` as an extra trailing column of `x[B×d]`.
    AppendColumn {
        x: Var,
        s: Var,
    },
    Clamp {
        x: Var,
        lo: f64,
        hi: f64,
    },
    ControlMask {
        c: Var,
        n_max: usize,
    },
    Mean(Var),
    Sum(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
    },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match *self {
            Op::Leaf { .. } => vec![],
            Op::MatVec { w, x } => vec![w, x],
            Op::Affine { x, w, b } => vec![x, w, b],
            Op::Unary(_, x)
            | Op::Clamp { x, .. }
            | Op::Mean(x)
            | Op::Sum(x)
            | Op::ControlMask { c: x, .. }
            | Op::SoftmaxCrossEntropy { logits: x, .. } => vec![x],
            Op::Binary(_, a, b) => vec![a, b],
            Op::ScaleColumns { x, s } | Op::AppendColumn { x, s } => vec![x, s],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// A recorded computation with reverse-mode gradients.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    backpropagated: bool,
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

    /// Accumulated gradient of `v`; zeros if nothing reached it.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        node.grad
            .clone()
            .unwrap_or_else(|| Tensor::zeros(node.value.shape()))
    }

    pub fn is_trainable(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf { trainable: true })
    }

    /// Clears all gradients so `backward` may run again.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backpropagated = false;
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Leaf { trainable } => *trainable,
            other => other
                .parents()
                .iter()
                .any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, shape: &[usize], init_values: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), init_values)?;
        Ok(self.push(t, Op::Leaf { trainable: true }))
    }

    pub fn param_tensor(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { trainable: true })
    }

    /// Registers a leaf that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { trainable: false })
    }

    /// Overwrites a leaf's value. Call [`Graph::recompute`] to propagate it.
    pub fn set_leaf_value(&mut self, v: Var, t: Tensor) -> Result<()> {
        let node = &mut self.nodes[v.0];
        if !matches!(node.op, Op::Leaf { .. }) {
            return Err(Error::invalid("only leaf values can be overwritten"));
        }
        if node.value.shape() != t.shape() {
            return Err(Error::shape(
                "set_leaf_value",
                format!("{:?} vs {:?}", node.value.shape(), t.shape()),
            ));
        }
        node.value = t;
        Ok(())
    }

    /// Re-evaluates every non-leaf node from the current leaf values.
    pub fn recompute(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf { .. }) {
                continue;
            }
            let value = self.eval(&self.nodes[i].op)?;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    /// Smallest distance of any op input to a point where that op is not
    /// differentiable (clamp bounds, integer effective size, ψ joins).
    pub fn min_kink_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for node in &self.nodes {
            let d = match node.op {
                Op::Unary(u, x) => self.nodes[x.0]
                    .value
                    .data()
                    .iter()
                    .map(|&v| u.kink_distance(v))
                    .fold(f64::INFINITY, f64::min),
                Op::Clamp { x, lo, hi } => self.nodes[x.0]
                    .value
                    .data()
                    .iter()
                    .map(|&v| (v - lo).abs().min((v - hi).abs()))
                    .fold(f64::INFINITY, f64::min),
                Op::ControlMask { c, n_max } => {
                    let c = self.nodes[c.0].value.item();
                    let e = effective_size_unchecked(c, n_max);
                    (e - e.round()).abs()
                }
                _ => f64::INFINITY,
            };
            best = best.min(d);
        }
        best
    }

    fn add_op(&mut self, op: Op) -> Result<Var> {
        let value = self.eval(&op)?;
        Ok(self.push(value, op))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        self.add_op(Op::MatVec { w, x })
    }

    /// Batched dense layer: `x[B×n]·wᵀ + b` for `w[m×n]`, `b[m]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.add_op(Op::Affine { x, w, b })
    }

    pub fn unary(&mut self, op: UnaryOp, x: Var) -> Result<Var> {
        self.add_op(Op::Unary(op, x))
    }

    /// [`Graph::unary`] with the op named by string id.
    pub fn elem_unary(&mut self, op_id: &str, x: Var) -> Result<Var> {
        let op = op_id.parse()?;
        self.unary(op, x)
    }

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        self.add_op(Op::Binary(op, a, b))
    }

    pub fn elem_binary(&mut self, op_id: &str, a: Var, b: Var) -> Result<Var> {
        let op = op_id.parse()?;
        self.binary(op, a, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Square, x)
    }

    pub fn scale_columns(&mut self, x: Var, s: Var) -> Result<Var> {
        self.add_op(Op::ScaleColumns { x, s })
    }

    pub fn append_column(&mut self, x: Var, s: Var) -> Result<Var> {
        self.add_op(Op::AppendColumn { x, s })
    }

    /// Clamp with zero gradient outside `[lo, hi]`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        if !(lo < hi) {
            return Err(Error::invalid(format!("clamp bounds {lo} >= {hi}")));
        }
        self.add_op(Op::Clamp { x, lo, hi })
    }

    /// Neuron mask of length `n_max` from a clamped controller value.
    pub fn control_mask(&mut self, c: Var, n_max: usize) -> Result<Var> {
        if n_max < 1 {
            return Err(Error::invalid("N_max must be at least 1"));
        }
        self.add_op(Op::ControlMask { c, n_max })
    }

    pub fn reduce_mean(&mut self, x: Var) -> Result<Var> {
        self.add_op(Op::Mean(x))
    }

    pub fn reduce_sum(&mut self, x: Var) -> Result<Var> {
        self.add_op(Op::Sum(x))
    }

    /// Mean softmax cross-entropy of `logits[B×K]` against class labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Vec<usize>) -> Result<Var> {
        self.add_op(Op::SoftmaxCrossEntropy { logits, labels })
    }

    fn eval(&self, op: &Op) -> Result<Tensor> {
        let val = |v: &Var| &self.nodes[v.0].value;
        match op {
            Op::Leaf { .. } => unreachable!("leaves are not evaluated"),
            Op::MatVec { w, x } => {
                let (w, x) = (val(w), val(x));
                let (m, n) = w
                    .dims2()
                    .ok_or_else(|| Error::shape("matvec", "W must be rank 2"))?;
                if x.shape() != [n] {
                    return Err(Error::shape(
                        "matvec",
                        format!("W is {m}×{n} but x has shape {:?}", x.shape()),
                    ));
                }
                let out = (0..m).map(|i| dot(w.row(i), x.data())).collect::<Vec<_>>();
                Ok(Tensor::vector(out))
            }
            Op::Affine { x, w, b } => {
                let (x, w, b) = (val(x), val(w), val(b));
                let (batch, n) = x
                    .dims2()
                    .ok_or_else(|| Error::shape("affine", "x must be rank 2"))?;
                let (m, wn) = w
                    .dims2()
                    .ok_or_else(|| Error::shape("affine", "W must be rank 2"))?;
                if wn != n || b.shape() != [m] {
                    return Err(Error::shape(
                        "affine",
                        format!("x {:?}, W {:?}, b {:?}", x.shape(), w.shape(), b.shape()),
                    ));
                }
                let mut out = Vec::with_capacity(batch * m);
                for r in 0..batch {
                    let xr = x.row(r);
                    for i in 0..m {
                        out.push(dot(w.row(i), xr) + b.data()[i]);
                    }
                }
                Tensor::matrix(batch, m, out)
            }
            Op::Unary(u, x) => Ok(val(x).map(|v| u.apply(v))),
            Op::Binary(kind, a, b) => {
                let (a, b) = (val(a), val(b));
                let f = |p: f64, q: f64| match kind {
                    BinaryOp::Add => p + q,
                    BinaryOp::Sub => p - q,
                    BinaryOp::Mul => p * q,
                };
                if a.shape() == b.shape() {
                    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q));
                    Tensor::new(a.shape().to_vec(), data.collect())
                } else if b.is_scalar() {
                    let q = b.item();
                    Ok(a.map(|p| f(p, q)))
                } else if a.is_scalar() {
                    let p = a.item();
                    Ok(b.map(|q| f(p, q)))
                } else {
                    Err(Error::shape(
                        "elem_binary",
                        format!("{:?} vs {:?}", a.shape(), b.shape()),
                    ))
                }
            }
            Op::ScaleColumns { x, s } => {
                let (x, s) = (val(x), val(s));
                let (_, cols) = x
                    .dims2()
                    .ok_or_else(|| Error::shape("scale_columns", "x must be rank 2"))?;
                if s.shape() != [cols] {
                    return Err(Error::shape(
                        "scale_columns",
                        format!("x {:?} vs scale {:?}", x.shape(), s.shape()),
                    ));
                }
                let mut out = x.clone();
                for row in out.data_mut().chunks_mut(cols) {
                    for (v, k) in row.iter_mut().zip(s.data()) {
                        *v *= k;
                    }
                }
                Ok(out)
            }
            Op::AppendColumn { x, s } => {
                let (x, s) = (val(x), val(s));
                let (rows, cols) = x
                    .dims2()
                    .ok_or_else(|| Error::shape("append_column", "x must be rank 2"))?;
                if !s.is_scalar() {
                    return Err(Error::shape(
                        "append_column",
                        "appended value must be scalar",
                    ));
                }
                let c = s.item();
                let mut out = Vec::with_capacity(rows * (cols + 1));
                for r in 0..rows {
                    out.extend_from_slice(x.row(r));
                    out.push(c);
                }
                Tensor::matrix(rows, cols + 1, out)
            }
            Op::Clamp { x, lo, hi } => Ok(val(x).map(|v| v.clamp(*lo, *hi))),
            Op::ControlMask { c, n_max } => {
                let c = val(c);
                if !c.is_scalar() {
                    return Err(Error::shape(
                        "control_mask",
                        "controller value must be scalar",
                    ));
                }
                let c = c.item();
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::invalid(format!(
                        "control value must be clamped to [0, 1], got {c}"
                    )));
                }
                let e = effective_size_unchecked(c, *n_max);
                Ok(Tensor::vector(mask_values(e, *n_max)))
            }
            Op::Mean(x) | Op::Sum(x) => {
                let x = val(x);
                if x.is_empty() {
                    return Err(Error::invalid("cannot reduce an empty tensor"));
                }
                let s: f64 = x.data().iter().sum();
                Ok(Tensor::scalar(if matches!(op, Op::Mean(_)) {
                    s / x.len() as f64
                } else {
                    s
                }))
            }
            Op::SoftmaxCrossEntropy { logits, labels } => {
                let z = val(logits);
                let (rows, k) = z.dims2().ok_or_else(|| {
                    Error::shape("softmax_cross_entropy", "logits must be rank 2")
                })?;
                if rows != labels.len() || rows == 0 {
                    return Err(Error::shape(
                        "softmax_cross_entropy",
                        format!("{rows} rows vs {} labels", labels.len()),
                    ));
                }
                let mut total = 0.0;
                for (r, &label) in labels.iter().enumerate() {
                    if label >= k {
                        return Err(Error::invalid(format!("label {label} out of {k} classes")));
                    }
                    let row = z.row(r);
                    total += log_sum_exp(row) - row[label];
                }
                Ok(Tensor::scalar(total / rows as f64))
            }
        }
    }

    /// Accumulates `∂loss/∂v` into every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backpropagated {
            return Err(Error::AlreadyBackpropagated);
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.backpropagated = true;
        self.nodes[loss.0].grad = Some(Tensor::full(self.nodes[loss.0].value.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(upstream) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(i, &upstream);
            self.nodes[i].grad = Some(upstream);
            for (parent, g) in contributions {
                let node = &mut self.nodes[parent.0];
                if !node.requires_grad {
                    continue;
                }
                match &mut node.grad {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let val = |v: &Var| &self.nodes[v.0].value;
        let needs = |v: &Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf { .. } => {}
            Op::MatVec { w, x } => {
                let (wt, xt) = (val(w), val(x));
                let (m, n) = wt.dims2().expect("validated in forward");
                if needs(w) {
                    let mut gw = Vec::with_capacity(m * n);
                    for gi in g.data() {
                        gw.extend(xt.data().iter().map(|xj| gi * xj));
                    }
                    out.push((*w, Tensor::matrix(m, n, gw).expect("shape")));
                }
                if needs(x) {
                    let mut gx = vec![0.0; n];
                    for (row, gi) in g.data().iter().enumerate() {
                        for (acc, wij) in gx.iter_mut().zip(wt.row(row)) {
                            *acc += gi * wij;
                        }
                    }
                    out.push((*x, Tensor::vector(gx)));
                }
            }
            Op::Affine { x, w, b } => {
                let (xt, wt) = (val(x), val(w));
                let (batch, n) = xt.dims2().expect("validated in forward");
                let (m, _) = wt.dims2().expect("validated in forward");
                if needs(w) {
                    let mut gw = vec![0.0; m * n];
                    for r in 0..batch {
                        let xr = xt.row(r);
                        for (i, gri) in g.row(r).iter().enumerate() {
                            for (acc, xj) in gw[i * n..(i + 1) * n].iter_mut().zip(xr) {
                                *acc += gri * xj;
                            }
                        }
                    }
                    out.push((*w, Tensor::matrix(m, n, gw).expect("shape")));
                }
                if needs(b) {
                    let mut gb = vec![0.0; m];
                    for r in 0..batch {
                        for (acc, gri) in gb.iter_mut().zip(g.row(r)) {
                            *acc += gri;
                        }
                    }
                    out.push((*b, Tensor::vector(gb)));
                }
                if needs(x) {
                    let mut gx = vec![0.0; batch * n];
                    for r in 0..batch {
                        let dst = &mut gx[r * n..(r + 1) * n];
                        for (i, gri) in g.row(r).iter().enumerate() {
                            for (acc, wij) in dst.iter_mut().zip(wt.row(i)) {
                                *acc += gri * wij;
                            }
                        }
                    }
                    out.push((*x, Tensor::matrix(batch, n, gx).expect("shape")));
                }
            }
            Op::Unary(u, x) => {
                let xt = val(x);
                let data = xt
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .zip(g.data())
                    .map(|((&xv, &yv), &gv)| gv * u.derivative(xv, yv))
                    .collect();
                out.push((*x, Tensor::new(xt.shape().to_vec(), data).expect("shape")));
            }
            Op::Binary(kind, a, b) => {
                let (at, bt) = (val(a), val(b));
                // gradient of the result w.r.t. each operand, elementwise over the output
                let da = |k: usize| match kind {
                    BinaryOp::Add | BinaryOp::Sub => 1.0,
                    BinaryOp::Mul => broadcast_at(bt, k),
                };
                let db = |k: usize| match kind {
                    BinaryOp::Add => 1.0,
                    BinaryOp::Sub => -1.0,
                    BinaryOp::Mul => broadcast_at(at, k),
                };
                if needs(a) {
                    out.push((*a, reduce_to(at, g, da)));
                }
                if needs(b) {
                    out.push((*b, reduce_to(bt, g, db)));
                }
            }
            Op::ScaleColumns { x, s } => {
                let (xt, st) = (val(x), val(s));
                let cols = st.len();
                if needs(x) {
                    let mut gx = g.clone();
                    for row in gx.data_mut().chunks_mut(cols) {
                        for (v, k) in row.iter_mut().zip(st.data()) {
                            *v *= k;
                        }
                    }
                    out.push((*x, gx));
                }
                if needs(s) {
                    let mut gs = vec![0.0; cols];
                    for (grow, xrow) in g.data().chunks(cols).zip(xt.data().chunks(cols)) {
                        for ((acc, gv), xv) in gs.iter_mut().zip(grow).zip(xrow) {
                            *acc += gv * xv;
                        }
                    }
                    out.push((*s, Tensor::vector(gs)));
                }
            }
            Op::AppendColumn { x, s } => {
                let xt = val(x);
                let (rows, cols) = xt.dims2().expect("validated in forward");
                let width = cols + 1;
                if needs(x) {
                    let mut gx = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        gx.extend_from_slice(&g.data()[r * width..r * width + cols]);
                    }
                    out.push((*x, Tensor::matrix(rows, cols, gx).expect("shape")));
                }
                if needs(s) {
                    let total: f64 = (0..rows).map(|r| g.data()[r * width + cols]).sum();
                    out.push((
                        *s,
                        Tensor::new(val(s).shape().to_vec(), vec![total]).expect("shape"),
                    ));
                }
            }
            Op::Clamp { x, lo, hi } => {
                let xt = val(x);
                let data = xt
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gv)| if v < *lo || v > *hi { 0.0 } else { gv })
                    .collect();
                out.push((*x, Tensor::new(xt.shape().to_vec(), data).expect("shape")));
            }
            Op::ControlMask { c, n_max } => {
                let ct = val(c);
                let cv = ct.item();
                let e = effective_size_unchecked(cv, *n_max);
                // right-hand rule: the neuron at ⌊Ñ⌋ owns dmask/dÑ
                let k = e.floor() as usize;
                let gm = if k < *n_max { g.data()[k] } else { 0.0 };
                let gc = gm * effective_size_slope(cv, *n_max);
                out.push((
                    *c,
                    Tensor::new(ct.shape().to_vec(), vec![gc]).expect("shape"),
                ));
            }
            Op::Mean(x) | Op::Sum(x) => {
                let xt = val(x);
                let scale = if matches!(node.op, Op::Mean(_)) {
                    g.item() / xt.len() as f64
                } else {
                    g.item()
                };
                out.push((*x, Tensor::full(xt.shape(), scale)));
            }
            Op::SoftmaxCrossEntropy { logits, labels } => {
                let z = val(logits);
                let (rows, k) = z.dims2().expect("validated in forward");
                let scale = g.item() / rows as f64;
                let mut gz = Vec::with_capacity(rows * k);
                for (r, &label) in labels.iter().enumerate() {
                    let row = z.row(r);
                    let lse = log_sum_exp(row);
                    for (j, &zj) in row.iter().enumerate() {
                        let p = (zj - lse).exp();
                        let target = if j == label { 1.0 } else { 0.0 };
                        gz.push(scale * (p - target));
                    }
                }
                out.push((*logits, Tensor::matrix(rows, k, gz).expect("shape")));
            }
        }
        out
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
fn broadcast_at(t: &Tensor, k: usize) -> f64 {
    if t.is_scalar() {
        t.item()
    } else {
        t.data()[k]
    }
}

/// Folds an output-shaped gradient back onto an operand, summing when the
/// operand was a broadcast scalar.
fn reduce_to(operand: &Tensor, g: &Tensor, local: impl Fn(usize) -> f64) -> Tensor {
    if operand.len() == g.len() {
        let data = g
            .data()
            .iter()
            .enumerate()
            .map(|(k, gv)| gv * local(k))
            .collect();
        Tensor::new(operand.shape().to_vec(), data).expect("shape")
    } else {
        let total = g
            .data()
            .iter()
            .enumerate()
            .map(|(k, gv)| gv * local(k))
            .sum();
        Tensor::new(operand.shape().to_vec(), vec![total]).expect("shape")
    }
}

/// Distance from a kink under which a finite-difference probe is not trusted.
pub const KINK_TOLERANCE: f64 = 1e-4;

/// Denominator floor for relative errors so near-zero gradients are compared
/// on an absolute scale.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Outcome of [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error among probes that were not flagged.
    pub max_rel_error: f64,
    /// `(param, element)` of the worst unflagged probe.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Probes excluded because the evaluation sat within [`KINK_TOLERANCE`] of a kink.
    pub flagged: Vec<(usize, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares backward gradients against central differences
/// `(f(p+eps) - f(p-eps)) / 2eps` for every element of every parameter.
///
/// `build` receives the graph and one trainable leaf per entry of `params`
/// and returns the scalar loss.
pub fn grad_check<F>(build: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: FnOnce(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    if params.iter().any(|p| !p.all_finite()) {
        return Err(Error::invalid("parameters must be finite"));
    }
    let mut g = Graph::new();
    let leaves: Vec<Var> = params.iter().map(|p| g.param_tensor(p.clone())).collect();
    let loss = build(&mut g, &leaves)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor> = leaves.iter().map(|&v| g.grad(v)).collect();
    let base_kink = g.min_kink_distance();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        flagged: Vec::new(),
    };
    for (pi, &leaf) in leaves.iter().enumerate() {
        for k in 0..params[pi].len() {
            let probe = |g: &mut Graph, delta: f64| -> Result<(f64, f64)> {
                let mut t = params[pi].clone();
                t.data_mut()[k] += delta;
                g.set_leaf_value(leaf, t)?;
                g.recompute()?;
                Ok((g.value(loss).item(), g.min_kink_distance()))
            };
            let (plus, kink_plus) = probe(&mut g, eps)?;
            let (minus, kink_minus) = probe(&mut g, -eps)?;
            g.set_leaf_value(leaf, params[pi].clone())?;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFiniteProbe {
                    param: pi,
                    index: k,
                });
            }
            if base_kink.min(kink_plus).min(kink_minus) < KINK_TOLERANCE {
                report.flagged.push((pi, k));
                continue;
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[k];
            let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((pi, k));
            }
        }
    }
    g.recompute()?;
    Ok(report)
}
