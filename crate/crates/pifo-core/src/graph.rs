//! A small tape for reverse-mode differentiation.
//!
//! Building a node runs the forward computation immediately and records the
//! operation; [`Graph::backward`] sweeps the tape once in reverse and
//! accumulates gradients into the bound [`ParamSet`]. Nodes whose inputs are
//! all constants are never revisited, so e.g. convolving a constant input
//! skips the expensive input-gradient pass.
//!
//! The op vocabulary is exactly what the policies, the value nets, the
//! discriminator, and the PPO/discriminator losses need — nothing more.

use alloc::vec;
use alloc::vec::Vec;

use crate::nn::{self, ParamSet};
use crate::tensor::Tensor;
use crate::{CoreError, Result};

/// Handle to a node of one specific [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param { index: usize },
    Dense { x: NodeId, w: NodeId, b: NodeId },
    Conv2d { x: NodeId, k: NodeId, b: NodeId, stride: usize },
    Tanh { x: NodeId },
    Relu { x: NodeId },
    Sigmoid { x: NodeId },
    Exp { x: NodeId },
    Ln { x: NodeId },
    Affine { x: NodeId, mul: f64 },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    MulRow { x: NodeId, v: NodeId },
    AddScaledScalar { x: NodeId, s: NodeId, c: f64 },
    SumAxis1 { x: NodeId },
    SumAll { x: NodeId },
    MeanAll { x: NodeId },
    Min2 { a: NodeId, b: NodeId },
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Reshape { x: NodeId },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// One forward computation recorded for a single backward sweep.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .get(id.0)
            .ok_or(CoreError::Usage("node does not belong to this graph"))
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// The forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// A constant input; gradients never flow into it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Const, false)
    }

    /// A trainable leaf bound to entry `index` of `params`; the value is
    /// cloned now, and [`Graph::backward`] accumulates into that entry's
    /// gradient.
    pub fn param(&mut self, params: &ParamSet, index: usize) -> NodeId {
        let value = params.entry(index).value.clone();
        self.push(value, Op::Param { index }, true)
    }

    /// [`Graph::param`] by name.
    pub fn param_named(&mut self, params: &ParamSet, name: &str) -> Result<NodeId> {
        let index = params
            .index_of(name)
            .ok_or(CoreError::Usage("unknown parameter name"))?;
        Ok(self.param(params, index))
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let value = nn::dense(
            &self.node(x)?.value,
            &self.node(w)?.value,
            &self.node(b)?.value,
        )?;
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(value, Op::Dense { x, w, b }, needs))
    }

    pub fn conv2d(&mut self, x: NodeId, k: NodeId, b: NodeId, stride: usize) -> Result<NodeId> {
        let value = nn::conv2d(
            &self.node(x)?.value,
            &self.node(k)?.value,
            &self.node(b)?.value,
            stride,
        )?;
        let needs = self.needs(x) || self.needs(k) || self.needs(b);
        Ok(self.push(value, Op::Conv2d { x, k, b, stride }, needs))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let value = nn::tanh_t(&self.node(x)?.value);
        let needs = self.needs(x);
        Ok(self.push(value, Op::Tanh { x }, needs))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let value = nn::relu_t(&self.node(x)?.value);
        let needs = self.needs(x);
        Ok(self.push(value, Op::Relu { x }, needs))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let value = nn::sigmoid_t(&self.node(x)?.value);
        let needs = self.needs(x);
        Ok(self.push(value, Op::Sigmoid { x }, needs))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.node(x)?.value.map(libm::exp);
        let needs = self.needs(x);
        Ok(self.push(value, Op::Exp { x }, needs))
    }

    /// Natural log. Callers keep inputs strictly positive (the losses clamp
    /// probabilities first), so no masking happens here.
    pub fn ln(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.node(x)?.value.map(libm::log);
        let needs = self.needs(x);
        Ok(self.push(value, Op::Ln { x }, needs))
    }

    /// `mul * x + add`, elementwise with scalar coefficients.
    pub fn affine(&mut self, x: NodeId, mul: f64, add: f64) -> Result<NodeId> {
        let value = self.node(x)?.value.map(|v| mul * v + add);
        let needs = self.needs(x);
        Ok(self.push(value, Op::Affine { x, mul }, needs))
    }

    fn same_shape(&mut self, a: NodeId, b: NodeId, op: &'static str) -> Result<()> {
        let da = self.node(a)?.value.dims();
        let db = self.node(b)?.value.dims();
        if da != db {
            return Err(CoreError::Shape {
                op,
                lhs: da.to_vec(),
                rhs: db.to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let value = zip(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add { a, b }, needs))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let value = zip(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x - y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub { a, b }, needs))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let value = zip(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul { a, b }, needs))
    }

    /// Rowwise broadcast product: `x: [rows, d]` times `v: [d]`.
    pub fn mul_row(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (rows, d) = match self.node(x)?.value.dims() {
            [r, d] => (*r, *d),
            other => {
                return Err(CoreError::Shape {
                    op: "mul_row",
                    lhs: other.to_vec(),
                    rhs: self.node(v)?.value.dims().to_vec(),
                })
            }
        };
        if self.node(v)?.value.dims() != [d] {
            return Err(CoreError::Shape {
                op: "mul_row",
                lhs: vec![rows, d],
                rhs: self.node(v)?.value.dims().to_vec(),
            });
        }
        let mut value = Tensor::zeros(&[rows, d]);
        {
            let xd = self.nodes[x.0].value.data();
            let vd = self.nodes[v.0].value.data();
            let od = value.data_mut();
            for r in 0..rows {
                for i in 0..d {
                    od[r * d + i] = xd[r * d + i] * vd[i];
                }
            }
        }
        let needs = self.needs(x) || self.needs(v);
        Ok(self.push(value, Op::MulRow { x, v }, needs))
    }

    /// `x + c * s` where `s` is a scalar node broadcast over `x`.
    pub fn add_scaled_scalar(&mut self, x: NodeId, s: NodeId, c: f64) -> Result<NodeId> {
        if self.node(s)?.value.len() != 1 {
            return Err(CoreError::Shape {
                op: "add_scaled_scalar",
                lhs: self.node(x)?.value.dims().to_vec(),
                rhs: self.node(s)?.value.dims().to_vec(),
            });
        }
        let sv = self.nodes[s.0].value.data()[0];
        let value = self.nodes[x.0].value.map(|v| v + c * sv);
        let needs = self.needs(x) || self.needs(s);
        Ok(self.push(value, Op::AddScaledScalar { x, s, c }, needs))
    }

    /// Row sums of a 2-d tensor: `[rows, d] -> [rows]`.
    pub fn sum_axis1(&mut self, x: NodeId) -> Result<NodeId> {
        let (rows, d) = match self.node(x)?.value.dims() {
            [r, d] => (*r, *d),
            other => {
                return Err(CoreError::Shape {
                    op: "sum_axis1",
                    lhs: other.to_vec(),
                    rhs: vec![0, 0],
                })
            }
        };
        let mut value = Tensor::zeros(&[rows]);
        {
            let xd = self.nodes[x.0].value.data();
            let od = value.data_mut();
            for r in 0..rows {
                let mut acc = 0.0;
                for i in 0..d {
                    acc += xd[r * d + i];
                }
                od[r] = acc;
            }
        }
        let needs = self.needs(x);
        Ok(self.push(value, Op::SumAxis1 { x }, needs))
    }

    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let mut acc = 0.0;
        for v in self.node(x)?.value.data() {
            acc += *v;
        }
        let needs = self.needs(x);
        Ok(self.push(Tensor::scalar(acc), Op::SumAll { x }, needs))
    }

    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.node(x)?.value.len();
        if n == 0 {
            return Err(CoreError::Usage("mean of an empty tensor"));
        }
        let mut acc = 0.0;
        for v in self.nodes[x.0].value.data() {
            acc += *v;
        }
        let needs = self.needs(x);
        Ok(self.push(Tensor::scalar(acc / n as f64), Op::MeanAll { x }, needs))
    }

    /// Elementwise minimum; on ties the gradient goes to `a`.
    pub fn min2(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "min2")?;
        let value = zip(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| {
            if x <= y {
                x
            } else {
                y
            }
        });
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Min2 { a, b }, needs))
    }

    /// Clamp to `[lo, hi]`; the gradient passes only strictly inside.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(CoreError::Config(alloc::format!(
                "invalid clamp bounds [{lo}, {hi}]"
            )));
        }
        let value = self.node(x)?.value.map(|v| v.clamp(lo, hi));
        let needs = self.needs(x);
        Ok(self.push(value, Op::Clamp { x, lo, hi }, needs))
    }

    pub fn reshape(&mut self, x: NodeId, dims: &[usize]) -> Result<NodeId> {
        let value = self.node(x)?.value.reshape(dims)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Reshape { x }, needs))
    }

    /// Reverse sweep from the scalar node `loss`, accumulating parameter
    /// gradients into `params` (on top of whatever is already there; callers
    /// zero the gradients when they want a fresh accumulation).
    ///
    /// `params` must be the set the graph's `param` nodes were built from.
    pub fn backward(&self, loss: NodeId, params: &mut ParamSet) -> Result<()> {
        let target = self.node(loss)?;
        if target.value.len() != 1 {
            return Err(CoreError::Usage("backward target must be a scalar"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(target.value.dims(), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(gy) = grads[id].take() else {
                continue;
            };
            match &node.op {
                Op::Const => {}
                Op::Param { index } => {
                    let index = *index;
                    if index >= params.len()
                        || params.entry(index).value.dims() != node.value.dims()
                    {
                        return Err(CoreError::State(alloc::format!(
                            "graph parameter {index} does not match the bound parameter set"
                        )));
                    }
                    let gd = params.entry_mut(index).grad.data_mut();
                    for (g, u) in gd.iter_mut().zip(gy.data()) {
                        *g += *u;
                    }
                }
                Op::Dense { x, w, b } => {
                    let need_gx = self.needs(*x);
                    let (gx, gw, gb) = nn::dense_backward(
                        &self.nodes[x.0].value,
                        &self.nodes[w.0].value,
                        &gy,
                        need_gx,
                    )?;
                    if let Some(gx) = gx {
                        accumulate(&mut grads[x.0], gx);
                    }
                    if self.needs(*w) {
                        accumulate(&mut grads[w.0], gw);
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads[b.0], gb);
                    }
                }
                Op::Conv2d { x, k, b, stride } => {
                    let need_gx = self.needs(*x);
                    let (gx, gk, gb) = nn::conv2d_backward(
                        &self.nodes[x.0].value,
                        &self.nodes[k.0].value,
                        *stride,
                        &gy,
                        need_gx,
                    )?;
                    if let Some(gx) = gx {
                        accumulate(&mut grads[x.0], gx);
                    }
                    if self.needs(*k) {
                        accumulate(&mut grads[k.0], gk);
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads[b.0], gb);
                    }
                }
                Op::Tanh { x } => {
                    let y = &node.value;
                    let gx = zip(&gy, y, |g, y| g * (1.0 - y * y));
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Relu { x } => {
                    let gx = zip(&gy, &self.nodes[x.0].value, |g, x| {
                        if x > 0.0 {
                            g
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Sigmoid { x } => {
                    let gx = zip(&gy, &node.value, |g, y| g * y * (1.0 - y));
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Exp { x } => {
                    let gx = zip(&gy, &node.value, |g, y| g * y);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Ln { x } => {
                    let gx = zip(&gy, &self.nodes[x.0].value, |g, x| g / x);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Affine { x, mul } => {
                    let m = *mul;
                    accumulate(&mut grads[x.0], gy.map(|g| g * m));
                }
                Op::Add { a, b } => {
                    if self.needs(*a) {
                        accumulate(&mut grads[a.0], gy.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads[b.0], gy);
                    }
                }
                Op::Sub { a, b } => {
                    if self.needs(*a) {
                        accumulate(&mut grads[a.0], gy.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads[b.0], gy.map(|g| -g));
                    }
                }
                Op::Mul { a, b } => {
                    if self.needs(*a) {
                        let ga = zip(&gy, &self.nodes[b.0].value, |g, b| g * b);
                        accumulate(&mut grads[a.0], ga);
                    }
                    if self.needs(*b) {
                        let gb = zip(&gy, &self.nodes[a.0].value, |g, a| g * a);
                        accumulate(&mut grads[b.0], gb);
                    }
                }
                Op::MulRow { x, v } => {
                    let xv = &self.nodes[x.0].value;
                    let vv = &self.nodes[v.0].value;
                    let d = vv.len();
                    let rows = xv.len() / d;
                    if self.needs(*x) {
                        let mut gx = Tensor::zeros(xv.dims());
                        {
                            let gxd = gx.data_mut();
                            let gyd = gy.data();
                            let vd = vv.data();
                            for r in 0..rows {
                                for i in 0..d {
                                    gxd[r * d + i] = gyd[r * d + i] * vd[i];
                                }
                            }
                        }
                        accumulate(&mut grads[x.0], gx);
                    }
                    if self.needs(*v) {
                        let mut gv = Tensor::zeros(vv.dims());
                        {
                            let gvd = gv.data_mut();
                            let gyd = gy.data();
                            let xd = xv.data();
                            for r in 0..rows {
                                for i in 0..d {
                                    gvd[i] += gyd[r * d + i] * xd[r * d + i];
                                }
                            }
                        }
                        accumulate(&mut grads[v.0], gv);
                    }
                }
                Op::AddScaledScalar { x, s, c } => {
                    if self.needs(*x) {
                        accumulate(&mut grads[x.0], gy.clone());
                    }
                    if self.needs(*s) {
                        let mut acc = 0.0;
                        for g in gy.data() {
                            acc += *g;
                        }
                        accumulate(&mut grads[s.0], Tensor::scalar(*c * acc));
                    }
                }
                Op::SumAxis1 { x } => {
                    let xv = &self.nodes[x.0].value;
                    let rows = gy.len();
                    let d = xv.len() / rows;
                    let mut gx = Tensor::zeros(xv.dims());
                    {
                        let gxd = gx.data_mut();
                        let gyd = gy.data();
                        for r in 0..rows {
                            for i in 0..d {
                                gxd[r * d + i] = gyd[r];
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                }
                Op::SumAll { x } => {
                    let g = gy.item();
                    let gx = Tensor::full(self.nodes[x.0].value.dims(), g);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::MeanAll { x } => {
                    let n = self.nodes[x.0].value.len() as f64;
                    let g = gy.item() / n;
                    let gx = Tensor::full(self.nodes[x.0].value.dims(), g);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Min2 { a, b } => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    if self.needs(*a) {
                        let ga = zip3(&gy, av, bv, |g, a, b| if a <= b { g } else { 0.0 });
                        accumulate(&mut grads[a.0], ga);
                    }
                    if self.needs(*b) {
                        let gb = zip3(&gy, av, bv, |g, a, b| if a <= b { 0.0 } else { g });
                        accumulate(&mut grads[b.0], gb);
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    let (lo, hi) = (*lo, *hi);
                    let gx = zip(&gy, &self.nodes[x.0].value, |g, x| {
                        if x > lo && x < hi {
                            g
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Reshape { x } => {
                    let gx = gy
                        .reshape(self.nodes[x.0].value.dims())
                        .expect("reshape backward restores the original dims");
                    accumulate(&mut grads[x.0], gx);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        None => *slot = Some(g),
        Some(t) => {
            for (a, b) in t.data_mut().iter_mut().zip(g.data()) {
                *a += *b;
            }
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let mut out = Tensor::zeros(a.dims());
    {
        let od = out.data_mut();
        let ad = a.data();
        let bd = b.data();
        for i in 0..od.len() {
            od[i] = f(ad[i], bd[i]);
        }
    }
    out
}

fn zip3(a: &Tensor, b: &Tensor, c: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
    let mut out = Tensor::zeros(a.dims());
    {
        let od = out.data_mut();
        let ad = a.data();
        let bd = b.data();
        let cd = c.data();
        for i in 0..od.len() {
            od[i] = f(ad[i], bd[i], cd[i]);
        }
    }
    out
}
