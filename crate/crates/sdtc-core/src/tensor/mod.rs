//! Dense row-major tensors with optional reverse-mode differentiation.
//!
//! A `Tensor` is an immutable value: operations return new tensors. When any
//! operand carries a tape node the result is recorded on that tape, so a
//! later `backward` on a scalar loss yields adjoints for every leaf.

mod kernels;
mod scalar;
mod shape;
mod tape;

pub use scalar::Scalar;
pub use shape::{broadcast_shape, Shape};
pub use tape::{GradMap, Tape};

use std::rc::Rc;

use crate::error::{Error, Result};
use kernels as k;
use tape::{Node, NodeRef, OpKind, Parent};

pub struct Tensor<S: Scalar> {
    shape: Shape,
    data: Rc<Vec<S>>,
    node: Option<NodeRef<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: Rc::clone(&self.data),
            node: self.node.clone(),
        }
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " [{} values]", self.data.len())
        }
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn from_vec(dims: &[usize], data: Vec<S>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::dimension(
                "from_vec",
                format!("shape {} needs {} values, got {}", shape, shape.numel(), data.len()),
            ));
        }
        Ok(Tensor {
            shape,
            data: Rc::new(data),
            node: None,
        })
    }

    pub(crate) fn from_parts(shape: Shape, data: Vec<S>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor {
            shape,
            data: Rc::new(data),
            node: None,
        }
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let n = shape.numel();
        Ok(Tensor::from_parts(shape, vec![S::ZERO; n]))
    }

    pub fn full(dims: &[usize], value: S) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let n = shape.numel();
        Ok(Tensor::from_parts(shape, vec![value; n]))
    }

    pub fn scalar(value: S) -> Self {
        Tensor::from_parts(Shape::new(&[1]).unwrap(), vec![value])
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.shape.numel()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> Result<S> {
        if self.numel() != 1 {
            return Err(Error::contract(format!(
                "item() requires a scalar tensor, shape is {}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn is_taped(&self) -> bool {
        self.node.is_some()
    }

    /// Value copy without any tape association.
    pub fn detach(&self) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: Rc::clone(&self.data),
            node: None,
        }
    }

    /// Convert scalars through f64 (used to move data between precisions).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&v| T::from_f64(v.to_f64())).collect(),
        )
    }

    // ── recording ────────────────────────────────────────────────────

    fn record(
        op_name: &'static str,
        inputs: &[&Tensor<S>],
        op: OpKind<S>,
        out_dims: Vec<usize>,
        data: Vec<S>,
    ) -> Result<Tensor<S>> {
        let mut tape: Option<&NodeRef<S>> = None;
        for t in inputs {
            if let Some(node) = &t.node {
                match tape {
                    None => tape = Some(node),
                    Some(existing) => {
                        if !Rc::ptr_eq(&existing.tape, &node.tape) {
                            return Err(Error::contract(format!(
                                "{op_name}: operands belong to different tapes"
                            )));
                        }
                    }
                }
            }
        }
        let shape = Shape::new(&out_dims)?;
        let node = tape.map(|t| {
            let parents = inputs
                .iter()
                .map(|p| Parent {
                    id: p.node.as_ref().map(|n| n.id),
                    shape: p.shape.clone(),
                    data: Rc::clone(&p.data),
                })
                .collect();
            let id = Tape {
                inner: Rc::clone(&t.tape),
            }
            .push(Node {
                op,
                parents,
                out_dims: out_dims.clone(),
            });
            NodeRef {
                tape: Rc::clone(&t.tape),
                id,
            }
        });
        Ok(Tensor {
            shape,
            data: Rc::new(data),
            node,
        })
    }

    fn unary(
        &self,
        op_name: &'static str,
        op: OpKind<S>,
        f: impl Fn(S) -> S,
    ) -> Result<Tensor<S>> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Tensor::record(op_name, &[self], op, self.dims().to_vec(), data)
    }

    fn binary(
        &self,
        rhs: &Tensor<S>,
        op_name: &'static str,
        op: OpKind<S>,
        f: impl Fn(S, S) -> S,
    ) -> Result<Tensor<S>> {
        let out_shape = broadcast_shape(op_name, &self.shape, &rhs.shape)?;
        let data = k::zip_broadcast(
            &self.data,
            &self.shape,
            &rhs.data,
            &rhs.shape,
            out_shape.dims(),
            f,
        );
        Tensor::record(op_name, &[self, rhs], op, out_shape.dims().to_vec(), data)
    }

    // ── elementwise ──────────────────────────────────────────────────

    pub fn add(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(rhs, "add", OpKind::Add, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(rhs, "sub", OpKind::Sub, |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(rhs, "mul", OpKind::Mul, |a, b| a * b)
    }

    pub fn div(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(rhs, "div", OpKind::Div, |a, b| a / b)
    }

    pub fn add_scalar(&self, c: S) -> Result<Tensor<S>> {
        self.unary("add_scalar", OpKind::AddScalar, |v| v + c)
    }

    pub fn mul_scalar(&self, c: S) -> Result<Tensor<S>> {
        self.unary("mul_scalar", OpKind::MulScalar(c), |v| v * c)
    }

    pub fn relu(&self) -> Result<Tensor<S>> {
        self.unary("relu", OpKind::Relu, |v| if v > S::ZERO { v } else { S::ZERO })
    }

    pub fn abs(&self) -> Result<Tensor<S>> {
        self.unary("abs", OpKind::Abs, |v| v.abs())
    }

    pub fn sqrt(&self) -> Result<Tensor<S>> {
        let data: Vec<S> = self.data.iter().map(|&v| v.sqrt()).collect();
        let out = Rc::new(data.clone());
        Tensor::record(
            "sqrt",
            &[self],
            OpKind::Sqrt { out },
            self.dims().to_vec(),
            data,
        )
    }

    pub fn sigmoid(&self) -> Result<Tensor<S>> {
        let data: Vec<S> = self.data.iter().map(|&v| stable_sigmoid(v)).collect();
        let out = Rc::new(data.clone());
        Tensor::record(
            "sigmoid",
            &[self],
            OpKind::Sigmoid { out },
            self.dims().to_vec(),
            data,
        )
    }

    pub fn gelu(&self) -> Result<Tensor<S>> {
        self.unary("gelu", OpKind::Gelu, tape::gelu_forward)
    }

    // ── linear algebra ───────────────────────────────────────────────

    pub fn matmul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        if self.shape.rank() != 2 || rhs.shape.rank() != 2 {
            return Err(Error::dimension(
                "matmul",
                format!("expected rank-2 operands, got {} and {}", self.shape, rhs.shape),
            ));
        }
        let (m, ka) = (self.dims()[0], self.dims()[1]);
        let (kb, n) = (rhs.dims()[0], rhs.dims()[1]);
        if ka != kb {
            return Err(Error::dimension(
                "matmul",
                format!("inner extents differ: {} vs {}", self.shape, rhs.shape),
            ));
        }
        let data = k::matmul(&self.data, &rhs.data, m, ka, n);
        Tensor::record("matmul", &[self, rhs], OpKind::Matmul, vec![m, n], data)
    }

    pub fn softmax(&self, axis: usize) -> Result<Tensor<S>> {
        if axis >= self.shape.rank() {
            return Err(Error::contract(format!(
                "softmax axis {axis} out of range for shape {}",
                self.shape
            )));
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "softmax input has non-finite value at flat index {pos}"
            )));
        }
        let data = k::softmax_axis(&self.data, self.dims(), axis);
        let out = Rc::new(data.clone());
        Tensor::record(
            "softmax",
            &[self],
            OpKind::Softmax { axis, out },
            self.dims().to_vec(),
            data,
        )
    }

    // ── layout ───────────────────────────────────────────────────────

    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor<S>> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.numel() {
            return Err(Error::dimension(
                "reshape",
                format!("cannot reshape {} into {}", self.shape, shape),
            ));
        }
        Tensor::record(
            "reshape",
            &[self],
            OpKind::Reshape,
            dims.to_vec(),
            self.data.as_ref().clone(),
        )
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<S>> {
        let rank = self.shape.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::contract(format!(
                "permute axes {:?} are not a permutation of 0..{rank}",
                axes
            )));
        }
        let (data, out_dims) = k::permute(&self.data, &self.shape, axes);
        Tensor::record(
            "permute",
            &[self],
            OpKind::Permute { axes: axes.to_vec() },
            out_dims,
            data,
        )
    }

    /// Rank-2 transpose.
    pub fn transpose(&self) -> Result<Tensor<S>> {
        if self.shape.rank() != 2 {
            return Err(Error::dimension(
                "transpose",
                format!("expected rank-2 operand, got {}", self.shape),
            ));
        }
        self.permute(&[1, 0])
    }

    pub fn concat(parts: &[&Tensor<S>], axis: usize) -> Result<Tensor<S>> {
        if parts.is_empty() {
            return Err(Error::contract("concat needs at least one operand"));
        }
        let first = parts[0];
        let rank = first.shape.rank();
        if axis >= rank {
            return Err(Error::contract(format!(
                "concat axis {axis} out of range for shape {}",
                first.shape
            )));
        }
        let mut total = 0usize;
        for p in parts {
            if p.shape.rank() != rank {
                return Err(Error::dimension(
                    "concat",
                    format!("rank mismatch: {} vs {}", first.shape, p.shape),
                ));
            }
            for d in 0..rank {
                if d != axis && p.dims()[d] != first.dims()[d] {
                    return Err(Error::dimension(
                        "concat",
                        format!("off-axis extents differ: {} vs {}", first.shape, p.shape),
                    ));
                }
            }
            total += p.dims()[axis];
        }
        let mut out_dims = first.dims().to_vec();
        out_dims[axis] = total;
        let (outer, _, inner) = k::axis_split(&out_dims, axis);
        let mut data = vec![S::ZERO; out_dims.iter().product()];
        let mut offset = 0usize;
        for p in parts {
            let len = p.dims()[axis];
            for o in 0..outer {
                for j in 0..len {
                    let dst = (o * total + offset + j) * inner;
                    let src = (o * len + j) * inner;
                    data[dst..dst + inner].copy_from_slice(&p.data[src..src + inner]);
                }
            }
            offset += len;
        }
        Tensor::record("concat", parts, OpKind::Concat { axis }, out_dims, data)
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<S>> {
        let rank = self.shape.rank();
        if axis >= rank {
            return Err(Error::contract(format!(
                "slice axis {axis} out of range for shape {}",
                self.shape
            )));
        }
        if len == 0 || start + len > self.dims()[axis] {
            return Err(Error::dimension(
                "slice",
                format!(
                    "range {start}..{} exceeds extent {} of shape {}",
                    start + len,
                    self.dims()[axis],
                    self.shape
                ),
            ));
        }
        let (outer, total, inner) = k::axis_split(self.dims(), axis);
        let mut out_dims = self.dims().to_vec();
        out_dims[axis] = len;
        let mut data = vec![S::ZERO; outer * len * inner];
        for o in 0..outer {
            for j in 0..len {
                let src = (o * total + start + j) * inner;
                let dst = (o * len + j) * inner;
                data[dst..dst + inner].copy_from_slice(&self.data[src..src + inner]);
            }
        }
        Tensor::record("slice", &[self], OpKind::Slice { axis, start }, out_dims, data)
    }

    /// Reindex into a new layout: `out[i] = self[map[i]]`.
    pub fn gather(&self, map: Rc<Vec<usize>>, out_dims: &[usize]) -> Result<Tensor<S>> {
        let out_n: usize = out_dims.iter().product();
        if map.len() != out_n {
            return Err(Error::dimension(
                "gather",
                format!("index map has {} entries, output needs {}", map.len(), out_n),
            ));
        }
        if let Some(&bad) = map.iter().find(|&&i| i >= self.numel()) {
            return Err(Error::contract(format!(
                "gather index {bad} out of range for {} elements",
                self.numel()
            )));
        }
        let data: Vec<S> = map.iter().map(|&i| self.data[i]).collect();
        Tensor::record(
            "gather",
            &[self],
            OpKind::Gather { map },
            out_dims.to_vec(),
            data,
        )
    }

    // ── reductions ───────────────────────────────────────────────────

    pub fn sum_all(&self) -> Result<Tensor<S>> {
        let mut acc = S::ZERO;
        for &v in self.data.iter() {
            acc += v;
        }
        Tensor::record("sum_all", &[self], OpKind::SumAll, vec![1], vec![acc])
    }

    pub fn mean_all(&self) -> Result<Tensor<S>> {
        let mut acc = S::ZERO;
        for &v in self.data.iter() {
            acc += v;
        }
        let n = S::from_f64(self.numel() as f64);
        Tensor::record("mean_all", &[self], OpKind::MeanAll, vec![1], vec![acc / n])
    }

    /// Sum along `axis`, keeping the axis with extent 1.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<S>> {
        if axis >= self.shape.rank() {
            return Err(Error::contract(format!(
                "sum_axis axis {axis} out of range for shape {}",
                self.shape
            )));
        }
        let data = k::sum_axis(&self.data, self.dims(), axis);
        let mut out_dims = self.dims().to_vec();
        out_dims[axis] = 1;
        Tensor::record("sum_axis", &[self], OpKind::SumAxis { axis }, out_dims, data)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor<S>> {
        let n = self.dims()[axis];
        self.sum_axis(axis)?
            .mul_scalar(S::from_f64(1.0 / n as f64))
    }

    // ── structured ops ───────────────────────────────────────────────

    /// 2D cross-correlation, stride 1, zero padding `(k-1)/2`.
    pub fn conv2d(&self, weight: &Tensor<S>, bias: &Tensor<S>) -> Result<Tensor<S>> {
        if self.shape.rank() != 3 || weight.shape.rank() != 4 || bias.shape.rank() != 1 {
            return Err(Error::dimension(
                "conv2d",
                format!(
                    "expected ranks (3, 4, 1), got ({}, {}, {})",
                    self.shape, weight.shape, bias.shape
                ),
            ));
        }
        let (c_in, h, w) = (self.dims()[0], self.dims()[1], self.dims()[2]);
        let (c_out, wc_in, kh, kw) = (
            weight.dims()[0],
            weight.dims()[1],
            weight.dims()[2],
            weight.dims()[3],
        );
        if kh != kw {
            return Err(Error::dimension(
                "conv2d",
                format!("kernel must be square, got {}", weight.shape),
            ));
        }
        if kh % 2 == 0 {
            return Err(Error::contract(format!("conv2d kernel size must be odd, got {kh}")));
        }
        if wc_in != c_in || bias.dims()[0] != c_out {
            return Err(Error::dimension(
                "conv2d",
                format!(
                    "channel mismatch: input {}, weight {}, bias {}",
                    self.shape, weight.shape, bias.shape
                ),
            ));
        }
        let pad = (kh - 1) / 2;
        let data = k::conv2d(&self.data, &weight.data, &bias.data, c_in, h, w, c_out, kh, pad);
        Tensor::record(
            "conv2d",
            &[self, weight, bias],
            OpKind::Conv2d { pad },
            vec![c_out, h, w],
            data,
        )
    }

    /// Bilinear resize of a (C, H, W) tensor, half-pixel centers.
    pub fn bilinear_resize(&self, h_out: usize, w_out: usize) -> Result<Tensor<S>> {
        if self.shape.rank() != 3 {
            return Err(Error::dimension(
                "bilinear_resize",
                format!("expected rank-3 operand, got {}", self.shape),
            ));
        }
        if h_out == 0 || w_out == 0 {
            return Err(Error::contract("bilinear_resize target extents must be positive"));
        }
        let (c, h, w) = (self.dims()[0], self.dims()[1], self.dims()[2]);
        let data = k::bilinear_resize(&self.data, c, h, w, h_out, w_out);
        Tensor::record(
            "bilinear_resize",
            &[self],
            OpKind::BilinearResize,
            vec![c, h_out, w_out],
            data,
        )
    }

    /// On a rank-3 tensor, replace whole slots along `axis` (0 or 1) with the
    /// vector `fill` wherever `mask` is true. Untouched slots are copied
    /// bitwise; gradient reaches `fill` only through masked slots.
    pub fn masked_fill_axis(
        &self,
        axis: usize,
        mask: &[bool],
        fill: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        if self.shape.rank() != 3 || axis > 1 {
            return Err(Error::contract(format!(
                "masked_fill_axis needs a rank-3 tensor and axis 0|1, got {} axis {axis}",
                self.shape
            )));
        }
        let dims = self.dims();
        if mask.len() != dims[axis] {
            return Err(Error::dimension(
                "masked_fill_axis",
                format!("mask length {} != extent {} of {}", mask.len(), dims[axis], self.shape),
            ));
        }
        if fill.shape.rank() != 1 || fill.dims()[0] != dims[2] {
            return Err(Error::dimension(
                "masked_fill_axis",
                format!("fill shape {} must be [{}]", fill.shape, dims[2]),
            ));
        }
        let (d0, d1, d2) = (dims[0], dims[1], dims[2]);
        let mut data = self.data.as_ref().clone();
        for i in 0..d0 {
            for j in 0..d1 {
                let sel = if axis == 0 { i } else { j };
                if mask[sel] {
                    let base = (i * d1 + j) * d2;
                    data[base..base + d2].copy_from_slice(&fill.data);
                }
            }
        }
        Tensor::record(
            "masked_fill_axis",
            &[self, fill],
            OpKind::MaskedFillAxis {
                axis,
                mask: Rc::new(mask.to_vec()),
            },
            dims.to_vec(),
            data,
        )
    }

    // ── differentiation ──────────────────────────────────────────────

    /// Reverse pass from a scalar taped loss; yields adjoints per leaf.
    pub fn backward(&self) -> Result<GradMap<S>> {
        let node = self.node.as_ref().ok_or_else(|| {
            Error::contract("backward requires a taped tensor (loss is not on a tape)")
        })?;
        if self.numel() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, shape is {}",
                self.shape
            )));
        }
        tape::run_backward(&node.tape, node.id)
    }
}

fn stable_sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::ZERO {
        S::ONE / (S::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::ONE + e)
    }
}

#[cfg(test)]
mod tests;
