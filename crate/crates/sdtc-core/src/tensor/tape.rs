//! Reverse-mode differentiation tape.
//!
//! A tape records one forward pass as a flat list of primitive operations in
//! topological order; `backward` replays it in reverse, accumulating adjoints.
//! Tapes are built fresh per forward pass and consumed by a single backward
//! call — a second backward on the same tape is a contract error.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use super::kernels as k;
use super::scalar::Scalar;
use super::shape::Shape;
use super::Tensor;
use crate::error::{Error, Result};

/// One recorded operation. Saved values are whatever the adjoint rule needs.
#[derive(Debug)]
pub(crate) enum OpKind<S: Scalar> {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    AddScalar,
    MulScalar(S),
    Relu,
    Abs,
    Sqrt { out: Rc<Vec<S>> },
    Sigmoid { out: Rc<Vec<S>> },
    Gelu,
    Matmul,
    Softmax { axis: usize, out: Rc<Vec<S>> },
    Reshape,
    Permute { axes: Vec<usize> },
    Concat { axis: usize },
    Slice { axis: usize, start: usize },
    Gather { map: Rc<Vec<usize>> },
    SumAll,
    MeanAll,
    SumAxis { axis: usize },
    Conv2d { pad: usize },
    BilinearResize,
    MaskedFillAxis { axis: usize, mask: Rc<Vec<bool>> },
}

/// Parent reference: data is always retained, `id` only when the parent is
/// itself on the tape (a constant input has no node).
#[derive(Debug)]
pub(crate) struct Parent<S: Scalar> {
    pub id: Option<usize>,
    pub shape: Shape,
    pub data: Rc<Vec<S>>,
}

#[derive(Debug)]
pub(crate) struct Node<S: Scalar> {
    pub op: OpKind<S>,
    pub parents: Vec<Parent<S>>,
    pub out_dims: Vec<usize>,
}

pub(crate) struct TapeInner<S: Scalar> {
    pub nodes: RefCell<Vec<Node<S>>>,
    consumed: Cell<bool>,
}

/// Handle to a recording tape. Clones share the same underlying record.
pub struct Tape<S: Scalar> {
    pub(crate) inner: Rc<TapeInner<S>>,
}

impl<S: Scalar> Clone for Tape<S> {
    fn clone(&self) -> Self {
        Tape {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(TapeInner {
                nodes: RefCell::new(Vec::new()),
                consumed: Cell::new(false),
            }),
        }
    }

    /// Register `t`'s values as a differentiable leaf on this tape.
    ///
    /// The returned tensor shares the input's storage; any prior tape
    /// association of `t` is not carried over.
    pub fn leaf(&self, t: &Tensor<S>) -> Tensor<S> {
        let id = self.push(Node {
            op: OpKind::Leaf,
            parents: Vec::new(),
            out_dims: t.shape().dims().to_vec(),
        });
        Tensor {
            shape: t.shape().clone(),
            data: Rc::clone(&t.data),
            node: Some(NodeRef {
                tape: Rc::clone(&self.inner),
                id,
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push(&self, node: Node<S>) -> usize {
        let mut nodes = self.inner.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }
}

pub(crate) struct NodeRef<S: Scalar> {
    pub tape: Rc<TapeInner<S>>,
    pub id: usize,
}

impl<S: Scalar> Clone for NodeRef<S> {
    fn clone(&self) -> Self {
        NodeRef {
            tape: Rc::clone(&self.tape),
            id: self.id,
        }
    }
}

/// Adjoints of the tape's leaves after a backward pass, keyed by leaf node.
pub struct GradMap<S: Scalar> {
    tape: Rc<TapeInner<S>>,
    grads: HashMap<usize, Tensor<S>>,
}

impl<S: Scalar> GradMap<S> {
    /// Gradient for a leaf tensor of the tape this map came from.
    ///
    /// Returns `None` for untaped tensors, tensors of another tape, and
    /// leaves the loss does not depend on (their gradient is zero).
    pub fn get(&self, t: &Tensor<S>) -> Option<&Tensor<S>> {
        let node = t.node.as_ref()?;
        if !Rc::ptr_eq(&node.tape, &self.tape) {
            return None;
        }
        self.grads.get(&node.id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<Vec<S>>, contrib: Vec<S>) {
    match slot {
        None => *slot = Some(contrib),
        Some(acc) => {
            for (a, c) in acc.iter_mut().zip(contrib) {
                *a += c;
            }
        }
    }
}

pub(crate) fn run_backward<S: Scalar>(
    tape: &Rc<TapeInner<S>>,
    loss_id: usize,
) -> Result<GradMap<S>> {
    if tape.consumed.get() {
        return Err(Error::contract(
            "backward already ran on this tape; rebuild the forward pass",
        ));
    }
    tape.consumed.set(true);

    let nodes = tape.nodes.borrow();
    let mut adjoints: Vec<Option<Vec<S>>> = vec![None; nodes.len()];
    adjoints[loss_id] = Some(vec![S::ONE]);
    let mut leaf_grads: HashMap<usize, Tensor<S>> = HashMap::new();

    for id in (0..=loss_id).rev() {
        let grad = match adjoints[id].take() {
            Some(g) => g,
            None => continue,
        };
        let node = &nodes[id];
        let ps = &node.parents;
        match &node.op {
            OpKind::Leaf => {
                let shape = Shape::new(&node.out_dims).expect("leaf shape");
                leaf_grads.insert(id, Tensor::from_parts(shape, grad));
            }
            OpKind::Add => {
                for p in ps {
                    if p.id.is_some() {
                        let d = k::reduce_to_shape(&grad, &node.out_dims, &p.shape);
                        accumulate(&mut adjoints[p.id.unwrap()], d);
                    }
                }
            }
            OpKind::Sub => {
                if let Some(pid) = ps[0].id {
                    let d = k::reduce_to_shape(&grad, &node.out_dims, &ps[0].shape);
                    accumulate(&mut adjoints[pid], d);
                }
                if let Some(pid) = ps[1].id {
                    let neg: Vec<S> = grad.iter().map(|&g| -g).collect();
                    let d = k::reduce_to_shape(&neg, &node.out_dims, &ps[1].shape);
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Mul => {
                let gshape = Shape::new(&node.out_dims).expect("grad shape");
                if let Some(pid) = ps[0].id {
                    let gb = k::zip_broadcast(
                        &grad,
                        &gshape,
                        &ps[1].data,
                        &ps[1].shape,
                        &node.out_dims,
                        |g, b| g * b,
                    );
                    let d = k::reduce_to_shape(&gb, &node.out_dims, &ps[0].shape);
                    accumulate(&mut adjoints[pid], d);
                }
                if let Some(pid) = ps[1].id {
                    let ga = k::zip_broadcast(
                        &grad,
                        &gshape,
                        &ps[0].data,
                        &ps[0].shape,
                        &node.out_dims,
                        |g, a| g * a,
                    );
                    let d = k::reduce_to_shape(&ga, &node.out_dims, &ps[1].shape);
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Div => {
                let gshape = Shape::new(&node.out_dims).expect("grad shape");
                if let Some(pid) = ps[0].id {
                    let gb = k::zip_broadcast(
                        &grad,
                        &gshape,
                        &ps[1].data,
                        &ps[1].shape,
                        &node.out_dims,
                        |g, b| g / b,
                    );
                    let d = k::reduce_to_shape(&gb, &node.out_dims, &ps[0].shape);
                    accumulate(&mut adjoints[pid], d);
                }
                if let Some(pid) = ps[1].id {
                    // d/db (a/b) = -a / b^2
                    let a_over = k::zip_broadcast(
                        &ps[0].data,
                        &ps[0].shape,
                        &ps[1].data,
                        &ps[1].shape,
                        &node.out_dims,
                        |a, b| -a / (b * b),
                    );
                    let gb: Vec<S> = grad.iter().zip(a_over).map(|(&g, t)| g * t).collect();
                    let d = k::reduce_to_shape(&gb, &node.out_dims, &ps[1].shape);
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::AddScalar => {
                if let Some(pid) = ps[0].id {
                    accumulate(&mut adjoints[pid], grad);
                }
            }
            OpKind::MulScalar(c) => {
                if let Some(pid) = ps[0].id {
                    let d: Vec<S> = grad.iter().map(|&g| g * *c).collect();
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Relu => {
                if let Some(pid) = ps[0].id {
                    let x = &ps[0].data;
                    let d: Vec<S> = grad
                        .iter()
                        .zip(x.iter())
                        .map(|(&g, &v)| if v > S::ZERO { g } else { S::ZERO })
                        .collect();
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Abs => {
                if let Some(pid) = ps[0].id {
                    let x = &ps[0].data;
                    let d: Vec<S> = grad
                        .iter()
                        .zip(x.iter())
                        .map(|(&g, &v)| {
                            if v > S::ZERO {
                                g
                            } else if v < S::ZERO {
                                -g
                            } else {
                                S::ZERO
                            }
                        })
                        .collect();
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Sqrt { out } => {
                if let Some(pid) = ps[0].id {
                    let half = S::from_f64(0.5);
                    let d: Vec<S> = grad
                        .iter()
                        .zip(out.iter())
                        .map(|(&g, &y)| g * half / y)
                        .collect();
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Sigmoid { out } => {
                if let Some(pid) = ps[0].id {
                    let d: Vec<S> = grad
                        .iter()
                        .zip(out.iter())
                        .map(|(&g, &y)| g * y * (S::ONE - y))
                        .collect();
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Gelu => {
                if let Some(pid) = ps[0].id {
                    let x = &ps[0].data;
                    let d: Vec<S> = grad
                        .iter()
                        .zip(x.iter())
                        .map(|(&g, &v)| g * gelu_grad(v))
                        .collect();
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Matmul => {
                let m = ps[0].shape.dims()[0];
                let kk = ps[0].shape.dims()[1];
                let n = ps[1].shape.dims()[1];
                if let Some(pid) = ps[0].id {
                    // dA = g (m x n) * B^T (n x k)
                    let bt = k::transpose2d(&ps[1].data, kk, n);
                    let d = k::matmul(&grad, &bt, m, n, kk);
                    accumulate(&mut adjoints[pid], d);
                }
                if let Some(pid) = ps[1].id {
                    // dB = A^T (k x m) * g (m x n)
                    let at = k::transpose2d(&ps[0].data, m, kk);
                    let d = k::matmul(&at, &grad, kk, m, n);
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Softmax { axis, out } => {
                if let Some(pid) = ps[0].id {
                    let d = k::softmax_backward(&grad, out, &node.out_dims, *axis);
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Reshape => {
                if let Some(pid) = ps[0].id {
                    accumulate(&mut adjoints[pid], grad);
                }
            }
            OpKind::Permute { axes } => {
                if let Some(pid) = ps[0].id {
                    let mut inverse = vec![0usize; axes.len()];
                    for (i, &a) in axes.iter().enumerate() {
                        inverse[a] = i;
                    }
                    let gshape = Shape::new(&node.out_dims).expect("grad shape");
                    let (d, _) = k::permute(&grad, &gshape, &inverse);
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Concat { axis } => {
                let (outer, _, inner) = k::axis_split(&node.out_dims, *axis);
                let total = node.out_dims[*axis];
                let mut offset = 0usize;
                for p in ps {
                    let len = p.shape.dims()[*axis];
                    if let Some(pid) = p.id {
                        let mut d = vec![S::ZERO; p.shape.numel()];
                        for o in 0..outer {
                            for j in 0..len {
                                let src = (o * total + offset + j) * inner;
                                let dst = (o * len + j) * inner;
                                d[dst..dst + inner].copy_from_slice(&grad[src..src + inner]);
                            }
                        }
                        accumulate(&mut adjoints[pid], d);
                    }
                    offset += len;
                }
            }
            OpKind::Slice { axis, start } => {
                if let Some(pid) = ps[0].id {
                    let in_dims = ps[0].shape.dims();
                    let (outer, total, inner) = k::axis_split(in_dims, *axis);
                    let len = node.out_dims[*axis];
                    let mut d = vec![S::ZERO; ps[0].shape.numel()];
                    for o in 0..outer {
                        for j in 0..len {
                            let dst = (o * total + start + j) * inner;
                            let src = (o * len + j) * inner;
                            d[dst..dst + inner].copy_from_slice(&grad[src..src + inner]);
                        }
                    }
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Gather { map } => {
                if let Some(pid) = ps[0].id {
                    let mut d = vec![S::ZERO; ps[0].shape.numel()];
                    for (i, &src) in map.iter().enumerate() {
                        d[src] += grad[i];
                    }
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::SumAll => {
                if let Some(pid) = ps[0].id {
                    let d = vec![grad[0]; ps[0].shape.numel()];
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::MeanAll => {
                if let Some(pid) = ps[0].id {
                    let n = S::from_f64(ps[0].shape.numel() as f64);
                    let d = vec![grad[0] / n; ps[0].shape.numel()];
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::SumAxis { axis } => {
                if let Some(pid) = ps[0].id {
                    let d = k::repeat_axis(&grad, ps[0].shape.dims(), *axis);
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::Conv2d { pad } => {
                let xd = ps[0].shape.dims();
                let wd = ps[1].shape.dims();
                let (c_in, h, w) = (xd[0], xd[1], xd[2]);
                let (c_out, kk) = (wd[0], wd[2]);
                let (dx, dwt, db) = k::conv2d_backward(
                    &grad, &ps[0].data, &ps[1].data, c_in, h, w, c_out, kk, *pad,
                );
                if let Some(pid) = ps[0].id {
                    accumulate(&mut adjoints[pid], dx);
                }
                if let Some(pid) = ps[1].id {
                    accumulate(&mut adjoints[pid], dwt);
                }
                if let Some(pid) = ps[2].id {
                    accumulate(&mut adjoints[pid], db);
                }
            }
            OpKind::BilinearResize => {
                if let Some(pid) = ps[0].id {
                    let xd = ps[0].shape.dims();
                    let d = k::bilinear_resize_backward(
                        &grad,
                        xd[0],
                        xd[1],
                        xd[2],
                        node.out_dims[1],
                        node.out_dims[2],
                    );
                    accumulate(&mut adjoints[pid], d);
                }
            }
            OpKind::MaskedFillAxis { axis, mask } => {
                let dims = &node.out_dims;
                let (d0, d1, d2) = (dims[0], dims[1], dims[2]);
                if let Some(pid) = ps[0].id {
                    let mut d = vec![S::ZERO; d0 * d1 * d2];
                    for i in 0..d0 {
                        for j in 0..d1 {
                            let sel = if *axis == 0 { i } else { j };
                            if !mask[sel] {
                                let base = (i * d1 + j) * d2;
                                d[base..base + d2].copy_from_slice(&grad[base..base + d2]);
                            }
                        }
                    }
                    accumulate(&mut adjoints[pid], d);
                }
                if let Some(pid) = ps[1].id {
                    let mut d = vec![S::ZERO; d2];
                    for i in 0..d0 {
                        for j in 0..d1 {
                            let sel = if *axis == 0 { i } else { j };
                            if mask[sel] {
                                let base = (i * d1 + j) * d2;
                                for (acc, &g) in d.iter_mut().zip(&grad[base..base + d2]) {
                                    *acc += g;
                                }
                            }
                        }
                    }
                    accumulate(&mut adjoints[pid], d);
                }
            }
        }
    }

    Ok(GradMap {
        tape: Rc::clone(tape),
        grads: leaf_grads,
    })
}

pub(crate) const GELU_COEFF: f64 = 0.044_715;

pub(crate) fn gelu_forward<S: Scalar>(x: S) -> S {
    let a = S::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let b = S::from_f64(GELU_COEFF);
    let half = S::from_f64(0.5);
    let u = a * (x + b * x * x * x);
    half * x * (S::ONE + u.tanh())
}

fn gelu_grad<S: Scalar>(x: S) -> S {
    let a = S::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let b = S::from_f64(GELU_COEFF);
    let half = S::from_f64(0.5);
    let three = S::from_f64(3.0);
    let u = a * (x + b * x * x * x);
    let t = u.tanh();
    let sech2 = S::ONE - t * t;
    half * (S::ONE + t) + half * x * sech2 * a * (S::ONE + three * b * x * x)
}
