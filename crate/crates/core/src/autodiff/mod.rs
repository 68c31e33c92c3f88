//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every primitive applied during a forward pass as an
//! append-only list of nodes. Because a node can only reference nodes that
//! already exist, the list is topologically ordered and [`Tape::backward`]
//! visits each node exactly once by walking it in reverse.
//!
//! ```
//! use spectralprior::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap().with_grad());
//! let sq = tape.square(x);
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
//! ```

pub mod kernels;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use kernels::ConvGeometry;

/// A real linear map with an explicit adjoint, usable as a tape primitive.
///
/// The backward pass of [`Tape::linear`] is the adjoint applied to the
/// upstream gradient, so implementors must satisfy
/// `<forward(x), y> == <x, adjoint(y)>`.
pub trait LinearMap: Send + Sync + fmt::Debug {
    fn in_shape(&self) -> &[usize];
    fn out_shape(&self) -> &[usize];
    fn forward(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, y: &[f64]) -> Vec<f64>;
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, k: Var, geom: ConvGeometry, cols: Vec<f64> },
    ChannelBias { x: Var, b: Var },
    ChannelAffine { x: Var, gamma: Var, beta: Var },
    Upsample { x: Var, factor: usize },
    LeakyRelu { x: Var, slope: f64 },
    Sigmoid { x: Var },
    InstanceNorm { x: Var, inv_std: Vec<f64> },
    ConcatChannels { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    AddScalar { x: Var },
    Square { x: Var },
    Sqrt { x: Var },
    Ln { x: Var },
    Sum { x: Var },
    Linear { x: Var, map: Arc<dyn LinearMap> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Append-only record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    tracked: Vec<bool>,
}

impl Gradients {
    /// Gradient for `v`. Nodes that do not require grad are an error;
    /// tracked nodes the loss does not depend on get zeros.
    pub fn get(&self, v: Var) -> Result<Tensor> {
        let id = v.0;
        if id >= self.tracked.len() || !self.tracked[id] {
            return Err(Error::Detached { id });
        }
        let shape = self.shapes[id].clone();
        let data = match &self.grads[id] {
            Some(g) => g.clone(),
            None => vec![0.0; shape.iter().product()],
        };
        Ok(Tensor::from_parts(shape, data))
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, contrib: Vec<f64>) {
    match slot {
        Some(acc) => {
            for (a, c) in acc.iter_mut().zip(contrib) {
                *a += c;
            }
        }
        None => *slot = Some(contrib),
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf; it is trainable iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let requires_grad = t.requires_grad();
        self.nodes.push(Node {
            value: t,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a copy of `t` as a trainable leaf.
    pub fn param(&mut self, t: &Tensor) -> Var {
        let mut copy = Tensor::from_parts(t.shape().to_vec(), t.data().to_vec());
        copy.set_requires_grad(true);
        self.leaf(copy)
    }

    /// Records a non-trainable leaf.
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.set_requires_grad(false);
        self.leaf(t)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        self.value(a).check_same_shape(self.value(b), op)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).map(f);
        self.push(value, op, &[x])
    }

    /// Cross-correlation of `[C_in,H,W]` with `[C_out,C_in,k,k]`.
    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeometry::new(self.value(x).shape(), self.value(k).shape(), stride, padding)?;
        let (out, cols) = kernels::conv2d_forward_cols(&geom, self.value(x).data(), self.value(k).data());
        let value = Tensor::from_parts(vec![geom.c_out, geom.h_out, geom.w_out], out);
        Ok(self.push(value, Op::Conv2d { x, k, geom, cols }, &[x, k]))
    }

    /// Adds `b[c]` to every element of channel `c`.
    pub fn add_channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        if self.value(b).len() != c {
            return Err(Error::shape(
                "add_channel_bias",
                format!("bias has {} entries for {c} channels", self.value(b).len()),
            ));
        }
        let n = h * w;
        let bias = self.value(b).data();
        let data: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + bias[i / n])
            .collect();
        let value = Tensor::from_parts(vec![c, h, w], data);
        Ok(self.push(value, Op::ChannelBias { x, b }, &[x, b]))
    }

    /// `gamma[c] * x + beta[c]` per channel.
    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.value(v).len() != c {
                return Err(Error::shape(
                    "channel_affine",
                    format!("{name} has {} entries for {c} channels", self.value(v).len()),
                ));
            }
        }
        let n = h * w;
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let data: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| g[i / n] * v + bt[i / n])
            .collect();
        let value = Tensor::from_parts(vec![c, h, w], data);
        Ok(self.push(
            value,
            Op::ChannelAffine { x, gamma, beta },
            &[x, gamma, beta],
        ))
    }

    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(Error::invalid("upsample_nearest", "factor must be at least 1"));
        }
        let (c, h, w) = self.value(x).dims3()?;
        let out = kernels::upsample_nearest_forward(c, h, w, factor, self.value(x).data());
        let value = Tensor::from_parts(vec![c, h * factor, w * factor], out);
        Ok(self.push(value, Op::Upsample { x, factor }, &[x]))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu { x, slope })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid { x })
    }

    /// Per-channel standardization with variance floor `eps`.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::invalid("instance_norm", format!("eps must be > 0, got {eps}")));
        }
        let (c, h, w) = self.value(x).dims3()?;
        let (out, inv_std) = kernels::instance_norm_forward(c, h * w, self.value(x).data(), eps);
        let value = Tensor::from_parts(vec![c, h, w], out);
        Ok(self.push(value, Op::InstanceNorm { x, inv_std }, &[x]))
    }

    /// Stacks `b`'s channels after `a`'s.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ca, ha, wa) = self.value(a).dims3()?;
        let (cb, hb, wb) = self.value(b).dims3()?;
        if (ha, wa) != (hb, wb) {
            return Err(Error::shape(
                "concat_channels",
                format!("spatial extents {ha}x{wa} vs {hb}x{wb}"),
            ));
        }
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        let value = Tensor::from_parts(vec![ca + cb, ha, wa], data);
        Ok(self.push(value, Op::ConcatChannels { a, b }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let value = Tensor::from_parts(
            self.value(a).shape().to_vec(),
            zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y),
        );
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let value = Tensor::from_parts(
            self.value(a).shape().to_vec(),
            zip_map(self.value(a).data(), self.value(b).data(), |x, y| x - y),
        );
        Ok(self.push(value, Op::Sub { a, b }, &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let value = Tensor::from_parts(
            self.value(a).shape().to_vec(),
            zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y),
        );
        Ok(self.push(value, Op::Mul { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| c * v, Op::Scale { x, c })
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar { x })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square { x })
    }

    /// Square root; inputs must be positive for a finite gradient.
    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, f64::sqrt, Op::Sqrt { x })
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Ln { x })
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum { x }, &[x])
    }

    pub fn linear(&mut self, x: Var, map: Arc<dyn LinearMap>) -> Result<Var> {
        if self.value(x).shape() != map.in_shape() {
            return Err(Error::shape(
                "linear",
                format!("input {:?} but map expects {:?}", self.value(x).shape(), map.in_shape()),
            ));
        }
        let value = Tensor::from_parts(map.out_shape().to_vec(), map.forward(self.value(x).data()));
        Ok(self.push(value, Op::Linear { x, map }, &[x]))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, shape is {:?}", self.value(loss).shape()),
            ));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            tracked: self.nodes.iter().map(|n| n.requires_grad).collect(),
        })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let send = |v: Var, contrib: Vec<f64>, grads: &mut [Option<Vec<f64>>]| {
            if self.needs(v) {
                accumulate(&mut grads[v.0], contrib);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, k, geom, cols } => {
                let (dx, dk) = kernels::conv2d_backward_cols(
                    geom,
                    val(*x),
                    cols,
                    val(*k),
                    g,
                    self.needs(*x),
                    self.needs(*k),
                );
                if let Some(dx) = dx {
                    send(*x, dx, grads);
                }
                if let Some(dk) = dk {
                    send(*k, dk, grads);
                }
            }
            Op::ChannelBias { x, b } => {
                let c = self.value(*b).len();
                let n = g.len() / c;
                if self.needs(*b) {
                    let db = (0..c).map(|ch| g[ch * n..(ch + 1) * n].iter().sum()).collect();
                    send(*b, db, grads);
                }
                send(*x, g.to_vec(), grads);
            }
            Op::ChannelAffine { x, gamma, beta } => {
                let c = self.value(*gamma).len();
                let n = g.len() / c;
                let xs = val(*x);
                if self.needs(*gamma) {
                    let dg = (0..c)
                        .map(|ch| {
                            let r = ch * n..(ch + 1) * n;
                            g[r.clone()].iter().zip(&xs[r]).map(|(a, b)| a * b).sum()
                        })
                        .collect();
                    send(*gamma, dg, grads);
                }
                if self.needs(*beta) {
                    let db = (0..c).map(|ch| g[ch * n..(ch + 1) * n].iter().sum()).collect();
                    send(*beta, db, grads);
                }
                if self.needs(*x) {
                    let gm = val(*gamma);
                    let dx = g.iter().enumerate().map(|(i, v)| v * gm[i / n]).collect();
                    send(*x, dx, grads);
                }
            }
            Op::Upsample { x, factor } => {
                let [c, h, w] = self.value(*x).shape()[..] else { unreachable!() };
                send(*x, kernels::upsample_nearest_backward(c, h, w, *factor, g), grads);
            }
            Op::LeakyRelu { x, slope } => {
                let dx = zip_map(val(*x), g, |v, gv| if v > 0.0 { gv } else { slope * gv });
                send(*x, dx, grads);
            }
            Op::Sigmoid { x } => {
                let dx = zip_map(node.value.data(), g, |y, gv| y * (1.0 - y) * gv);
                send(*x, dx, grads);
            }
            Op::InstanceNorm { x, inv_std } => {
                let c = inv_std.len();
                let n = g.len() / c;
                let dx = kernels::instance_norm_backward(c, n, node.value.data(), inv_std, g);
                send(*x, dx, grads);
            }
            Op::ConcatChannels { a, b } => {
                let split = self.value(*a).len();
                send(*a, g[..split].to_vec(), grads);
                send(*b, g[split..].to_vec(), grads);
            }
            Op::Add { a, b } => {
                send(*a, g.to_vec(), grads);
                send(*b, g.to_vec(), grads);
            }
            Op::Sub { a, b } => {
                send(*a, g.to_vec(), grads);
                send(*b, g.iter().map(|v| -v).collect(), grads);
            }
            Op::Mul { a, b } => {
                if self.needs(*a) {
                    send(*a, zip_map(g, val(*b), |x, y| x * y), grads);
                }
                if self.needs(*b) {
                    send(*b, zip_map(g, val(*a), |x, y| x * y), grads);
                }
            }
            Op::Scale { x, c } => send(*x, g.iter().map(|v| c * v).collect(), grads),
            Op::AddScalar { x } => send(*x, g.to_vec(), grads),
            Op::Square { x } => send(*x, zip_map(val(*x), g, |v, gv| 2.0 * v * gv), grads),
            Op::Sqrt { x } => send(*x, zip_map(node.value.data(), g, |s, gv| 0.5 * gv / s), grads),
            Op::Ln { x } => send(*x, zip_map(val(*x), g, |v, gv| gv / v), grads),
            Op::Sum { x } => send(*x, vec![g[0]; self.value(*x).len()], grads),
            Op::Linear { x, map } => send(*x, map.adjoint(g), grads),
        }
    }
}

/// Free-function form of [`Tape::backward`].
pub fn backward(loss: Var, tape: &Tape) -> Result<Gradients> {
    tape.backward(loss)
}
