//! Tape-based reverse-mode differentiation. Operations record their inputs
//! and a backward rule as they execute; `backward` replays the tape once in
//! reverse. A tape is confined to one logical thread and is consumed by its
//! backward pass.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Hadamard(usize, usize),
    Scale(usize, T),
    AddBiasLast { x: usize, bias: usize },
    Linear { x: usize, w: usize, b: usize },
    Matmul(usize, usize),
    SwapLast2(usize),
    SwapAxes01(usize),
    Reshape(usize),
    Conv2d3x3 { x: usize, kernel: usize },
    Gelu(usize),
    Abs(usize),
    Huber { x: usize, delta: T },
    NarrowLast { x: usize, start: usize, len: usize },
    ConcatLast(Vec<usize>),
    SoftmaxLast(usize),
    LayerNorm { x: usize, gamma: usize, beta: usize, eps: T },
    NodeMix { x: usize, matrix: Arc<Vec<T>> },
    LookupRows { table: usize, indices: Arc<Vec<usize>> },
    BroadcastAxis0 { x: usize, copies: usize },
    BroadcastAxis1 { x: usize, copies: usize },
    ScaleShiftLast { x: usize, scale: Arc<Vec<T>>, shift: Arc<Vec<T>> },
    Dropout { x: usize, mask: Arc<Vec<T>> },
    Sum(usize),
    Mean(usize),
}

impl<T> Op<T> {
    fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Hadamard(a, b) | Op::Matmul(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(x, _)
            | Op::SwapLast2(x)
            | Op::SwapAxes01(x)
            | Op::Reshape(x)
            | Op::Gelu(x)
            | Op::Abs(x)
            | Op::Huber { x, .. }
            | Op::NarrowLast { x, .. }
            | Op::SoftmaxLast(x)
            | Op::NodeMix { x, .. }
            | Op::BroadcastAxis0 { x, .. }
            | Op::BroadcastAxis1 { x, .. }
            | Op::ScaleShiftLast { x, .. }
            | Op::Dropout { x, .. }
            | Op::Sum(x)
            | Op::Mean(x) => vec![*x],
            Op::AddBiasLast { x, bias } => vec![*x, *bias],
            Op::Linear { x, w, b } => vec![*x, *w, *b],
            Op::Conv2d3x3 { x, kernel } => vec![*x, *kernel],
            Op::ConcatLast(ids) => ids.clone(),
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::LookupRows { table, .. } => vec![*table],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

struct Inner<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

pub struct Tape<T: Scalar> {
    inner: RefCell<Inner<T>>,
}

/// Handle to a tensor recorded on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            inner: RefCell::new(Inner {
                nodes: Vec::new(),
                consumed: false,
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var<'_, T> {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var { tape: self, id }
    }

    /// Records a differentiable leaf; its grad is populated by `backward`.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, true, Op::Leaf)
    }

    /// Records a non-differentiable input.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, false, Op::Leaf)
    }

    /// Concatenates along the last axis; all inputs must share leading
    /// dimensions.
    pub fn concat_last<'t>(&'t self, vars: &[Var<'t, T>]) -> Result<Var<'t, T>, TensorError> {
        if vars.is_empty() {
            return Err(TensorError::shape("concat", "no inputs"));
        }
        for v in vars {
            if !std::ptr::eq(v.tape, self) {
                return Err(TensorError::MixedTapes);
            }
        }
        let inner = self.inner.borrow();
        let lead = |shape: &[usize]| shape[..shape.len().saturating_sub(1)].to_vec();
        let first_shape = inner.nodes[vars[0].id].value.shape().to_vec();
        if first_shape.is_empty() {
            return Err(TensorError::shape("concat", "scalars cannot be concatenated"));
        }
        let leading = lead(&first_shape);
        let mut widths = Vec::with_capacity(vars.len());
        for v in vars {
            let s = inner.nodes[v.id].value.shape();
            if s.is_empty() || lead(s) != leading {
                return Err(TensorError::shape(
                    "concat",
                    format!("leading dims differ: {first_shape:?} vs {s:?}"),
                ));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows: usize = leading.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (v, &w) in vars.iter().zip(widths.iter()) {
                let src = inner.nodes[v.id].value.data();
                data.extend_from_slice(&src[r * w..(r + 1) * w]);
            }
        }
        let mut shape = leading;
        shape.push(total);
        let requires = vars.iter().any(|v| inner.nodes[v.id].requires_grad);
        drop(inner);
        let value = Tensor::new(shape, data).expect("concat shape consistent");
        Ok(self.push(value, requires, Op::ConcatLast(vars.iter().map(|v| v.id).collect())))
    }

    /// Checks the construction-order invariant: every operation's inputs
    /// precede it on the tape.
    pub fn audit_topological_order(&self) -> bool {
        let inner = self.inner.borrow();
        inner
            .nodes
            .iter()
            .enumerate()
            .all(|(id, node)| node.op.parents().iter().all(|&p| p < id))
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor<T> {
        self.tape.inner.borrow().nodes[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> T {
        self.tape.inner.borrow().nodes[self.id].value.item()
    }

    /// Gradient populated by `backward`, if this is a differentiable leaf.
    pub fn grad(&self) -> Option<Tensor<T>> {
        self.tape.inner.borrow().nodes[self.id].grad.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.id].requires_grad
    }

    fn check_same_tape(&self, other: &Var<'t, T>) -> Result<(), TensorError> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(TensorError::MixedTapes)
        }
    }

    fn unary(
        &self,
        value: Tensor<T>,
        op: Op<T>,
    ) -> Var<'t, T> {
        let requires = self.requires_grad();
        self.tape.push(value, requires, op)
    }

    fn binary_elementwise(
        &self,
        other: &Var<'t, T>,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        make: impl Fn(usize, usize) -> Op<T>,
    ) -> Result<Var<'t, T>, TensorError> {
        self.check_same_tape(other)?;
        let (value, requires) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id].value;
            let b = &inner.nodes[other.id].value;
            if a.shape() != b.shape() {
                return Err(TensorError::shape(
                    name,
                    format!("{:?} vs {:?}", a.shape(), b.shape()),
                ));
            }
            let data = a
                .data()
                .iter()
                .zip(b.data().iter())
                .map(|(&x, &y)| f(x, y))
                .collect();
            (
                Tensor::new(a.shape().to_vec(), data).expect("same shape"),
                inner.nodes[self.id].requires_grad || inner.nodes[other.id].requires_grad,
            )
        };
        Ok(self.tape.push(value, requires, make(self.id, other.id)))
    }

    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.binary_elementwise(other, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.binary_elementwise(other, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn hadamard(&self, other: &Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.binary_elementwise(other, "hadamard", |x, y| x * y, Op::Hadamard)
    }

    pub fn scale(&self, c: T) -> Var<'t, T> {
        let value = self.tape.inner.borrow().nodes[self.id].value.map(|x| x * c);
        self.unary(value, Op::Scale(self.id, c))
    }

    /// Trailing-axis bias broadcast: x[..., d] + bias[d].
    pub fn add_bias_last(&self, bias: &Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.check_same_tape(bias)?;
        let (value, requires) = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            let b = &inner.nodes[bias.id].value;
            let d = x.last_dim();
            if b.rank() != 1 || b.len() != d {
                return Err(TensorError::shape(
                    "add_bias_last",
                    format!("bias {:?} does not match trailing dim {d}", b.shape()),
                ));
            }
            let mut data = x.data().to_vec();
            for (i, v) in data.iter_mut().enumerate() {
                *v += b.data()[i % d];
            }
            (
                Tensor::new(x.shape().to_vec(), data).expect("same shape"),
                inner.nodes[self.id].requires_grad || inner.nodes[bias.id].requires_grad,
            )
        };
        Ok(self.tape.push(
            value,
            requires,
            Op::AddBiasLast {
                x: self.id,
                bias: bias.id,
            },
        ))
    }

    /// Affine map over the last axis: x[..., d_in] -> x·W + b with
    /// W[d_in, d_out], b[d_out].
    pub fn linear(&self, w: &Var<'t, T>, b: &Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.check_same_tape(w)?;
        self.check_same_tape(b)?;
        let (value, requires) = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            let wt = &inner.nodes[w.id].value;
            let bt = &inner.nodes[b.id].value;
            if wt.rank() != 2 {
                return Err(TensorError::shape("linear", format!("weight {:?}", wt.shape())));
            }
            let (d_in, d_out) = (wt.shape()[0], wt.shape()[1]);
            if x.last_dim() != d_in {
                return Err(TensorError::shape(
                    "linear",
                    format!("input trailing {:?} vs weight rows {d_in}", x.last_dim()),
                ));
            }
            if bt.rank() != 1 || bt.len() != d_out {
                return Err(TensorError::shape(
                    "linear",
                    format!("bias {:?} vs d_out {d_out}", bt.shape()),
                ));
            }
            let rows = x.num_rows();
            let mut data = vec![T::zero(); rows * d_out];
            for r in 0..rows {
                let xr = &x.data()[r * d_in..(r + 1) * d_in];
                let out = &mut data[r * d_out..(r + 1) * d_out];
                out.copy_from_slice(bt.data());
                for (i, &xi) in xr.iter().enumerate() {
                    let wrow = &wt.data()[i * d_out..(i + 1) * d_out];
                    for (o, &wv) in wrow.iter().enumerate() {
                        out[o] += xi * wv;
                    }
                }
            }
            let mut shape = x.shape().to_vec();
            if shape.is_empty() {
                shape = vec![d_out];
            } else {
                *shape.last_mut().unwrap() = d_out;
            }
            (
                Tensor::new(shape, data).expect("linear shape"),
                inner.nodes[self.id].requires_grad
                    || inner.nodes[w.id].requires_grad
                    || inner.nodes[b.id].requires_grad,
            )
        };
        Ok(self.tape.push(
            value,
            requires,
            Op::Linear {
                x: self.id,
                w: w.id,
                b: b.id,
            },
        ))
    }

    /// Batched matrix product: [..., m, p] x [..., p, q] with identical
    /// leading dimensions.
    pub fn matmul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.check_same_tape(other)?;
        let (value, requires) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id].value;
            let b = &inner.nodes[other.id].value;
            if a.rank() < 2 || b.rank() < 2 {
                return Err(TensorError::shape(
                    "matmul",
                    format!("{:?} x {:?}", a.shape(), b.shape()),
                ));
            }
            let (m, p) = (a.shape()[a.rank() - 2], a.shape()[a.rank() - 1]);
            let (p2, q) = (b.shape()[b.rank() - 2], b.shape()[b.rank() - 1]);
            let lead_a = &a.shape()[..a.rank() - 2];
            let lead_b = &b.shape()[..b.rank() - 2];
            if p != p2 || lead_a != lead_b {
                return Err(TensorError::shape(
                    "matmul",
                    format!("{:?} x {:?}", a.shape(), b.shape()),
                ));
            }
            let batches: usize = lead_a.iter().product();
            let mut data = vec![T::zero(); batches * m * q];
            for t in 0..batches {
                let abase = t * m * p;
                let bbase = t * p * q;
                let obase = t * m * q;
                for i in 0..m {
                    for kk in 0..p {
                        let av = a.data()[abase + i * p + kk];
                        if av == T::zero() {
                            continue;
                        }
                        let brow = &b.data()[bbase + kk * q..bbase + (kk + 1) * q];
                        let orow = &mut data[obase + i * q..obase + (i + 1) * q];
                        for (j, &bv) in brow.iter().enumerate() {
                            orow[j] += av * bv;
                        }
                    }
                }
            }
            let mut shape = lead_a.to_vec();
            shape.extend([m, q]);
            (
                Tensor::new(shape, data).expect("matmul shape"),
                inner.nodes[self.id].requires_grad || inner.nodes[other.id].requires_grad,
            )
        };
        Ok(self.tape.push(value, requires, Op::Matmul(self.id, other.id)))
    }

    /// Transpose of the last two axes.
    pub fn swap_last2(&self) -> Result<Var<'t, T>, TensorError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            if x.rank() < 2 {
                return Err(TensorError::shape("swap_last2", format!("{:?}", x.shape())));
            }
            swap_last2_tensor(x)
        };
        Ok(self.unary(value, Op::SwapLast2(self.id)))
    }

    /// Swaps the first two axes.
    pub fn swap_axes01(&self) -> Result<Var<'t, T>, TensorError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            if x.rank() < 2 {
                return Err(TensorError::shape("swap_axes01", format!("{:?}", x.shape())));
            }
            swap_axes01_tensor(x)
        };
        Ok(self.unary(value, Op::SwapAxes01(self.id)))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, T>, TensorError> {
        let value = {
            let inner = self.tape.inner.borrow();
            inner.nodes[self.id].value.reshaped(shape)?
        };
        Ok(self.unary(value, Op::Reshape(self.id)))
    }

    /// 2-D convolution over the leading two axes with a 3x3 kernel and zero
    /// padding 1, preserving spatial shape. x[T, N, c_in], kernel[3, 3,
    /// c_in, c_out].
    pub fn conv2d_3x3(&self, kernel: &Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.check_same_tape(kernel)?;
        let (value, requires) = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            let k = &inner.nodes[kernel.id].value;
            if x.rank() != 3 {
                return Err(TensorError::shape("conv2d_3x3", format!("input {:?}", x.shape())));
            }
            if k.rank() != 4 || k.shape()[0] != 3 || k.shape()[1] != 3 || k.shape()[2] != x.shape()[2]
            {
                return Err(TensorError::shape(
                    "conv2d_3x3",
                    format!("kernel {:?} for input {:?}", k.shape(), x.shape()),
                ));
            }
            let (h, wdt, ci) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let co = k.shape()[3];
            let mut data = vec![T::zero(); h * wdt * co];
            for oh in 0..h {
                for ow in 0..wdt {
                    for dh in 0..3usize {
                        let ih = oh as isize + dh as isize - 1;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        for dw in 0..3usize {
                            let iw = ow as isize + dw as isize - 1;
                            if iw < 0 || iw >= wdt as isize {
                                continue;
                            }
                            let xbase = (ih as usize * wdt + iw as usize) * ci;
                            let obase = (oh * wdt + ow) * co;
                            for i in 0..ci {
                                let xv = x.data()[xbase + i];
                                if xv == T::zero() {
                                    continue;
                                }
                                let kbase = ((dh * 3 + dw) * ci + i) * co;
                                for o in 0..co {
                                    data[obase + o] += xv * k.data()[kbase + o];
                                }
                            }
                        }
                    }
                }
            }
            (
                Tensor::new(vec![h, wdt, co], data).expect("conv shape"),
                inner.nodes[self.id].requires_grad || inner.nodes[kernel.id].requires_grad,
            )
        };
        Ok(self.tape.push(
            value,
            requires,
            Op::Conv2d3x3 {
                x: self.id,
                kernel: kernel.id,
            },
        ))
    }

    /// GeLU with the exact Gaussian CDF form.
    pub fn gelu(&self) -> Var<'t, T> {
        let value = self.tape.inner.borrow().nodes[self.id]
            .value
            .map(|x| x * gauss_cdf(x));
        self.unary(value, Op::Gelu(self.id))
    }

    pub fn abs(&self) -> Var<'t, T> {
        let value = self.tape.inner.borrow().nodes[self.id].value.map(|x| x.abs());
        self.unary(value, Op::Abs(self.id))
    }

    /// Elementwise Huber penalty of the input (viewed as a residual).
    pub fn huber(&self, delta: T) -> Var<'t, T> {
        let half = T::from_f64(0.5);
        let value = self.tape.inner.borrow().nodes[self.id].value.map(|x| {
            if x.abs() <= delta {
                half * x * x
            } else {
                delta * (x.abs() - half * delta)
            }
        });
        self.unary(value, Op::Huber { x: self.id, delta })
    }

    /// Slice of the trailing axis: columns [start, start+len).
    pub fn narrow_last(&self, start: usize, len: usize) -> Result<Var<'t, T>, TensorError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            let d = x.last_dim();
            if x.rank() == 0 || start + len > d {
                return Err(TensorError::shape(
                    "narrow_last",
                    format!("[{start}, {}) of trailing dim {d}", start + len),
                ));
            }
            let rows = x.num_rows();
            let mut data = Vec::with_capacity(rows * len);
            for r in 0..rows {
                data.extend_from_slice(&x.data()[r * d + start..r * d + start + len]);
            }
            let mut shape = x.shape().to_vec();
            *shape.last_mut().unwrap() = len;
            Tensor::new(shape, data).expect("narrow shape")
        };
        Ok(self.unary(
            value,
            Op::NarrowLast {
                x: self.id,
                start,
                len,
            },
        ))
    }

    /// Splits the trailing axis in two equal halves.
    pub fn split_channels(&self) -> Result<(Var<'t, T>, Var<'t, T>), TensorError> {
        let d = {
            let inner = self.tape.inner.borrow();
            inner.nodes[self.id].value.last_dim()
        };
        if d % 2 != 0 {
            return Err(TensorError::OddChannels(d));
        }
        let half = d / 2;
        Ok((self.narrow_last(0, half)?, self.narrow_last(half, half)?))
    }

    /// Softmax over the last axis.
    pub fn softmax_last(&self) -> Result<Var<'t, T>, TensorError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            if x.rank() == 0 {
                return Err(TensorError::shape("softmax", "scalar input"));
            }
            let d = x.last_dim();
            let mut data = x.data().to_vec();
            for row in data.chunks_mut(d) {
                let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            Tensor::new(x.shape().to_vec(), data).expect("softmax shape")
        };
        Ok(self.unary(value, Op::SoftmaxLast(self.id)))
    }

    /// Layer normalization over the last axis with learnable gain and bias.
    pub fn layer_norm(
        &self,
        gamma: &Var<'t, T>,
        beta: &Var<'t, T>,
    ) -> Result<Var<'t, T>, TensorError> {
        self.check_same_tape(gamma)?;
        self.check_same_tape(beta)?;
        let eps = T::from_f64(1e-5);
        let (value, requires) = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            let gm = &inner.nodes[gamma.id].value;
            let bt = &inner.nodes[beta.id].value;
            let d = x.last_dim();
            if gm.rank() != 1 || gm.len() != d || bt.rank() != 1 || bt.len() != d {
                return Err(TensorError::shape(
                    "layer_norm",
                    format!("params {:?}/{:?} vs trailing dim {d}", gm.shape(), bt.shape()),
                ));
            }
            let inv_d = T::from_f64(1.0 / d as f64);
            let mut data = Vec::with_capacity(x.len());
            for row in x.data().chunks(d) {
                let mut mean = T::zero();
                for &v in row {
                    mean += v;
                }
                mean *= inv_d;
                let mut var = T::zero();
                for &v in row {
                    var += (v - mean) * (v - mean);
                }
                var *= inv_d;
                let rstd = (var + eps).sqrt().recip();
                for (c, &v) in row.iter().enumerate() {
                    data.push((v - mean) * rstd * gm.data()[c] + bt.data()[c]);
                }
            }
            (
                Tensor::new(x.shape().to_vec(), data).expect("layer_norm shape"),
                inner.nodes[self.id].requires_grad
                    || inner.nodes[gamma.id].requires_grad
                    || inner.nodes[beta.id].requires_grad,
            )
        };
        Ok(self.tape.push(
            value,
            requires,
            Op::LayerNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                eps,
            },
        ))
    }

    /// Mixes the node axis of a [T, N, d] tensor with a constant N x N
    /// matrix: out[t, i, :] = sum_j M[i, j] x[t, j, :].
    pub fn node_mix(&self, matrix: Arc<Vec<T>>, n: usize) -> Result<Var<'t, T>, TensorError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            if x.rank() != 3 || x.shape()[1] != n || matrix.len() != n * n {
                return Err(TensorError::shape(
                    "node_mix",
                    format!("input {:?} with {n}x{n} matrix", x.shape()),
                ));
            }
            node_mix_forward(x, &matrix, n, false)
        };
        Ok(self.unary(
            value,
            Op::NodeMix {
                x: self.id,
                matrix,
            },
        ))
    }

    /// Gathers rows of a [R, d] table: out[l, :] = table[indices[l], :].
    pub fn lookup_rows(&self, indices: Arc<Vec<usize>>) -> Result<Var<'t, T>, TensorError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let table = &inner.nodes[self.id].value;
            if table.rank() != 2 {
                return Err(TensorError::shape("lookup_rows", format!("{:?}", table.shape())));
            }
            let (rows, d) = (table.shape()[0], table.shape()[1]);
            let mut data = Vec::with_capacity(indices.len() * d);
            for &idx in indices.iter() {
                if idx >= rows {
                    return Err(TensorError::shape(
                        "lookup_rows",
                        format!("index {idx} out of {rows} rows"),
                    ));
                }
                data.extend_from_slice(&table.data()[idx * d..(idx + 1) * d]);
            }
            Tensor::new(vec![indices.len(), d], data).expect("lookup shape")
        };
        Ok(self.unary(
            value,
            Op::LookupRows {
                table: self.id,
                indices,
            },
        ))
    }

    /// Prepends an axis of size `copies`, repeating the tensor.
    pub fn broadcast_axis0(&self, copies: usize) -> Var<'t, T> {
        let value = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            let mut shape = vec![copies];
            shape.extend_from_slice(x.shape());
            let mut data = Vec::with_capacity(copies * x.len());
            for _ in 0..copies {
                data.extend_from_slice(x.data());
            }
            Tensor::new(shape, data).expect("broadcast0 shape")
        };
        self.unary(
            value,
            Op::BroadcastAxis0 {
                x: self.id,
                copies,
            },
        )
    }

    /// Inserts an axis of size `copies` after the first: [A, d] -> [A,
    /// copies, d].
    pub fn broadcast_axis1(&self, copies: usize) -> Result<Var<'t, T>, TensorError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            if x.rank() != 2 {
                return Err(TensorError::shape("broadcast_axis1", format!("{:?}", x.shape())));
            }
            let (a, d) = (x.shape()[0], x.shape()[1]);
            let mut data = Vec::with_capacity(a * copies * d);
            for r in 0..a {
                let row = &x.data()[r * d..(r + 1) * d];
                for _ in 0..copies {
                    data.extend_from_slice(row);
                }
            }
            Tensor::new(vec![a, copies, d], data).expect("broadcast1 shape")
        };
        Ok(self.unary(
            value,
            Op::BroadcastAxis1 {
                x: self.id,
                copies,
            },
        ))
    }

    /// Constant per-channel affine over the last axis (e.g. denormalization).
    pub fn scale_shift_last(
        &self,
        scale: Arc<Vec<T>>,
        shift: Arc<Vec<T>>,
    ) -> Result<Var<'t, T>, TensorError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            let d = x.last_dim();
            if scale.len() != d || shift.len() != d {
                return Err(TensorError::shape(
                    "scale_shift_last",
                    format!("{} scales for trailing dim {d}", scale.len()),
                ));
            }
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| v * scale[i % d] + shift[i % d])
                .collect();
            Tensor::new(x.shape().to_vec(), data).expect("scale_shift shape")
        };
        Ok(self.unary(
            value,
            Op::ScaleShiftLast {
                x: self.id,
                scale,
                shift,
            },
        ))
    }

    /// Applies a precomputed dropout mask (entries 0 or 1/(1-p)).
    pub fn dropout_mask(&self, mask: Arc<Vec<T>>) -> Result<Var<'t, T>, TensorError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id].value;
            if mask.len() != x.len() {
                return Err(TensorError::shape(
                    "dropout",
                    format!("mask of {} for {} elements", mask.len(), x.len()),
                ));
            }
            let data = x
                .data()
                .iter()
                .zip(mask.iter())
                .map(|(&v, &m)| v * m)
                .collect();
            Tensor::new(x.shape().to_vec(), data).expect("dropout shape")
        };
        Ok(self.unary(value, Op::Dropout { x: self.id, mask }))
    }

    pub fn sum(&self) -> Var<'t, T> {
        let total = {
            let inner = self.tape.inner.borrow();
            inner.nodes[self.id]
                .value
                .data()
                .iter()
                .fold(T::zero(), |acc, &v| acc + v)
        };
        self.unary(Tensor::scalar(total), Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var<'t, T> {
        let (total, len) = {
            let inner = self.tape.inner.borrow();
            let v = &inner.nodes[self.id].value;
            (
                v.data().iter().fold(T::zero(), |acc, &x| acc + x),
                v.len(),
            )
        };
        let value = Tensor::scalar(total * T::from_f64(1.0 / len as f64));
        self.unary(value, Op::Mean(self.id))
    }

    /// Reverse sweep from a scalar loss: populates grads of every
    /// differentiable leaf. The tape is consumed; a second call fails.
    pub fn backward(&self) -> Result<(), TensorError> {
        {
            let mut inner = self.tape.inner.borrow_mut();
            if inner.consumed {
                return Err(TensorError::TapeConsumed);
            }
            let loss = &inner.nodes[self.id].value;
            if !loss.is_scalar() {
                return Err(TensorError::NonScalarLoss(loss.shape().to_vec()));
            }
            inner.consumed = true;
        }

        let leaf_grads: Vec<(usize, Tensor<T>)> = {
            let inner = self.tape.inner.borrow();
            let nodes = &inner.nodes;
            let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
            grads[self.id] = Some(Tensor::scalar(T::one()));
            let mut leaves = Vec::new();
            for id in (0..=self.id).rev() {
                let Some(g) = grads[id].take() else { continue };
                if !nodes[id].requires_grad {
                    continue;
                }
                match &nodes[id].op {
                    Op::Leaf => {
                        leaves.push((id, g));
                        continue;
                    }
                    op => backprop_op(op, nodes, &g, &mut grads),
                }
            }
            leaves
        };

        let mut inner = self.tape.inner.borrow_mut();
        for (id, g) in leaf_grads {
            match &mut inner.nodes[id].grad {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(
    grads: &mut [Option<Tensor<T>>],
    nodes: &[Node<T>],
    id: usize,
    delta: Tensor<T>,
) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn backprop_op<T: Scalar>(
    op: &Op<T>,
    nodes: &[Node<T>],
    g: &Tensor<T>,
    grads: &mut [Option<Tensor<T>>],
) {
    match op {
        Op::Leaf => unreachable!("leaves handled by caller"),
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.map(|v| -v));
        }
        Op::Hadamard(a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let ga = Tensor::new(
                g.shape().to_vec(),
                g.data()
                    .iter()
                    .zip(bv.data())
                    .map(|(&gv, &v)| gv * v)
                    .collect(),
            )
            .expect("hadamard grad");
            let gb = Tensor::new(
                g.shape().to_vec(),
                g.data()
                    .iter()
                    .zip(av.data())
                    .map(|(&gv, &v)| gv * v)
                    .collect(),
            )
            .expect("hadamard grad");
            accumulate(grads, nodes, *a, ga);
            accumulate(grads, nodes, *b, gb);
        }
        Op::Scale(x, c) => {
            let c = *c;
            accumulate(grads, nodes, *x, g.map(|v| v * c));
        }
        Op::AddBiasLast { x, bias } => {
            accumulate(grads, nodes, *x, g.clone());
            let d = nodes[*bias].value.len();
            let mut gb = vec![T::zero(); d];
            for (i, &gv) in g.data().iter().enumerate() {
                gb[i % d] += gv;
            }
            accumulate(
                grads,
                nodes,
                *bias,
                Tensor::new(vec![d], gb).expect("bias grad"),
            );
        }
        Op::Linear { x, w, b } => {
            let xv = &nodes[*x].value;
            let wv = &nodes[*w].value;
            let (d_in, d_out) = (wv.shape()[0], wv.shape()[1]);
            let rows = xv.num_rows();
            let mut gx = vec![T::zero(); xv.len()];
            let mut gw = vec![T::zero(); wv.len()];
            let mut gb = vec![T::zero(); d_out];
            for r in 0..rows {
                let grow = &g.data()[r * d_out..(r + 1) * d_out];
                let xrow = &xv.data()[r * d_in..(r + 1) * d_in];
                for (o, &gv) in grow.iter().enumerate() {
                    gb[o] += gv;
                }
                for i in 0..d_in {
                    let wrow = &wv.data()[i * d_out..(i + 1) * d_out];
                    let mut acc = T::zero();
                    for (o, &gv) in grow.iter().enumerate() {
                        acc += gv * wrow[o];
                        gw[i * d_out + o] += xrow[i] * gv;
                    }
                    gx[r * d_in + i] += acc;
                }
            }
            accumulate(
                grads,
                nodes,
                *x,
                Tensor::new(xv.shape().to_vec(), gx).expect("linear gx"),
            );
            accumulate(
                grads,
                nodes,
                *w,
                Tensor::new(wv.shape().to_vec(), gw).expect("linear gw"),
            );
            accumulate(
                grads,
                nodes,
                *b,
                Tensor::new(vec![d_out], gb).expect("linear gb"),
            );
        }
        Op::Matmul(a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let (m, p) = (av.shape()[av.rank() - 2], av.shape()[av.rank() - 1]);
            let q = bv.shape()[bv.rank() - 1];
            let batches = av.len() / (m * p);
            let mut ga = vec![T::zero(); av.len()];
            let mut gb = vec![T::zero(); bv.len()];
            for t in 0..batches {
                let abase = t * m * p;
                let bbase = t * p * q;
                let obase = t * m * q;
                for i in 0..m {
                    for j in 0..q {
                        let gv = g.data()[obase + i * q + j];
                        if gv == T::zero() {
                            continue;
                        }
                        for kk in 0..p {
                            ga[abase + i * p + kk] += gv * bv.data()[bbase + kk * q + j];
                            gb[bbase + kk * q + j] += av.data()[abase + i * p + kk] * gv;
                        }
                    }
                }
            }
            accumulate(
                grads,
                nodes,
                *a,
                Tensor::new(av.shape().to_vec(), ga).expect("matmul ga"),
            );
            accumulate(
                grads,
                nodes,
                *b,
                Tensor::new(bv.shape().to_vec(), gb).expect("matmul gb"),
            );
        }
        Op::SwapLast2(x) => {
            accumulate(grads, nodes, *x, swap_last2_tensor(g));
        }
        Op::SwapAxes01(x) => {
            accumulate(grads, nodes, *x, swap_axes01_tensor(g));
        }
        Op::Reshape(x) => {
            let shape = nodes[*x].value.shape().to_vec();
            accumulate(
                grads,
                nodes,
                *x,
                g.reshaped(&shape).expect("reshape grad"),
            );
        }
        Op::Conv2d3x3 { x, kernel } => {
            let xv = &nodes[*x].value;
            let kv = &nodes[*kernel].value;
            let (h, w, ci) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
            let co = kv.shape()[3];
            let mut gx = vec![T::zero(); xv.len()];
            let mut gk = vec![T::zero(); kv.len()];
            for oh in 0..h {
                for ow in 0..w {
                    let obase = (oh * w + ow) * co;
                    for dh in 0..3usize {
                        let ih = oh as isize + dh as isize - 1;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        for dw in 0..3usize {
                            let iw = ow as isize + dw as isize - 1;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            let xbase = (ih as usize * w + iw as usize) * ci;
                            for i in 0..ci {
                                let kbase = ((dh * 3 + dw) * ci + i) * co;
                                let xval = xv.data()[xbase + i];
                                let mut acc = T::zero();
                                for o in 0..co {
                                    let gv = g.data()[obase + o];
                                    acc += gv * kv.data()[kbase + o];
                                    gk[kbase + o] += xval * gv;
                                }
                                gx[xbase + i] += acc;
                            }
                        }
                    }
                }
            }
            accumulate(
                grads,
                nodes,
                *x,
                Tensor::new(xv.shape().to_vec(), gx).expect("conv gx"),
            );
            accumulate(
                grads,
                nodes,
                *kernel,
                Tensor::new(kv.shape().to_vec(), gk).expect("conv gk"),
            );
        }
        Op::Gelu(x) => {
            let xv = &nodes[*x].value;
            let data = xv
                .data()
                .iter()
                .zip(g.data())
                .map(|(&v, &gv)| gv * (gauss_cdf(v) + v * gauss_pdf(v)))
                .collect();
            accumulate(
                grads,
                nodes,
                *x,
                Tensor::new(xv.shape().to_vec(), data).expect("gelu grad"),
            );
        }
        Op::Abs(x) => {
            let xv = &nodes[*x].value;
            let data = xv
                .data()
                .iter()
                .zip(g.data())
                .map(|(&v, &gv)| {
                    if v > T::zero() {
                        gv
                    } else if v < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                })
                .collect();
            accumulate(
                grads,
                nodes,
                *x,
                Tensor::new(xv.shape().to_vec(), data).expect("abs grad"),
            );
        }
        Op::Huber { x, delta } => {
            let xv = &nodes[*x].value;
            let delta = *delta;
            let data = xv
                .data()
                .iter()
                .zip(g.data())
                .map(|(&v, &gv)| gv * v.max(-delta).min(delta))
                .collect();
            accumulate(
                grads,
                nodes,
                *x,
                Tensor::new(xv.shape().to_vec(), data).expect("huber grad"),
            );
        }
        Op::NarrowLast { x, start, len } => {
            let xv = &nodes[*x].value;
            let d = xv.last_dim();
            let rows = xv.num_rows();
            let mut gx = vec![T::zero(); xv.len()];
            for r in 0..rows {
                for c in 0..*len {
                    gx[r * d + start + c] = g.data()[r * len + c];
                }
            }
            accumulate(
                grads,
                nodes,
                *x,
                Tensor::new(xv.shape().to_vec(), gx).expect("narrow grad"),
            );
        }
        Op::ConcatLast(ids) => {
            let widths: Vec<usize> = ids.iter().map(|&i| nodes[i].value.last_dim()).collect();
            let total: usize = widths.iter().sum();
            let rows = g.len() / total;
            let mut offset = 0;
            for (&id, &w) in ids.iter().zip(widths.iter()) {
                if nodes[id].requires_grad {
                    let mut part = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        part.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                    }
                    let shape = nodes[id].value.shape().to_vec();
                    accumulate(
                        grads,
                        nodes,
                        id,
                        Tensor::new(shape, part).expect("concat grad"),
                    );
                }
                offset += w;
            }
        }
        Op::SoftmaxLast(x) => {
            // forward output s is this node's stored value; recompute from x
            let xv = &nodes[*x].value;
            let d = xv.last_dim();
            let mut gx = Vec::with_capacity(xv.len());
            for (xrow, grow) in xv.data().chunks(d).zip(g.data().chunks(d)) {
                let max = xrow.iter().cloned().fold(T::neg_infinity(), T::max);
                let mut s: Vec<T> = xrow.iter().map(|&v| (v - max).exp()).collect();
                let sum = s.iter().fold(T::zero(), |acc, &v| acc + v);
                for v in s.iter_mut() {
                    *v /= sum;
                }
                let dot = s
                    .iter()
                    .zip(grow)
                    .fold(T::zero(), |acc, (&sv, &gv)| acc + sv * gv);
                for (sv, &gv) in s.iter().zip(grow) {
                    gx.push(*sv * (gv - dot));
                }
            }
            accumulate(
                grads,
                nodes,
                *x,
                Tensor::new(xv.shape().to_vec(), gx).expect("softmax grad"),
            );
        }
        Op::LayerNorm { x, gamma, beta, eps } => {
            let xv = &nodes[*x].value;
            let gm = &nodes[*gamma].value;
            let d = xv.last_dim();
            let inv_d = T::from_f64(1.0 / d as f64);
            let mut gx = Vec::with_capacity(xv.len());
            let mut ggamma = vec![T::zero(); d];
            let mut gbeta = vec![T::zero(); d];
            for (xrow, grow) in xv.data().chunks(d).zip(g.data().chunks(d)) {
                let mut mean = T::zero();
                for &v in xrow {
                    mean += v;
                }
                mean *= inv_d;
                let mut var = T::zero();
                for &v in xrow {
                    var += (v - mean) * (v - mean);
                }
                var *= inv_d;
                let rstd = (var + *eps).sqrt().recip();
                let xhat: Vec<T> = xrow.iter().map(|&v| (v - mean) * rstd).collect();
                let mut mean_dxhat = T::zero();
                let mut mean_dxhat_xhat = T::zero();
                let dxhat: Vec<T> = grow
                    .iter()
                    .enumerate()
                    .map(|(c, &gv)| {
                        ggamma[c] += gv * xhat[c];
                        gbeta[c] += gv;
                        let dv = gv * gm.data()[c];
                        mean_dxhat += dv;
                        mean_dxhat_xhat += dv * xhat[c];
                        dv
                    })
                    .collect();
                mean_dxhat *= inv_d;
                mean_dxhat_xhat *= inv_d;
                for (c, &dv) in dxhat.iter().enumerate() {
                    gx.push(rstd * (dv - mean_dxhat - xhat[c] * mean_dxhat_xhat));
                }
            }
            accumulate(
                grads,
                nodes,
                *x,
                Tensor::new(xv.shape().to_vec(), gx).expect("ln gx"),
            );
            accumulate(
                grads,
                nodes,
                *gamma,
                Tensor::new(vec![d], ggamma).expect("ln ggamma"),
            );
            accumulate(
                grads,
                nodes,
                *beta,
                Tensor::new(vec![d], gbeta).expect("ln gbeta"),
            );
        }
        Op::NodeMix { x, matrix } => {
            let xv = &nodes[*x].value;
            let n = xv.shape()[1];
            accumulate(grads, nodes, *x, node_mix_forward(g, matrix, n, true));
        }
        Op::LookupRows { table, indices } => {
            let tv = &nodes[*table].value;
            let d = tv.shape()[1];
            let mut gt = vec![T::zero(); tv.len()];
            for (l, &idx) in indices.iter().enumerate() {
                for c in 0..d {
                    gt[idx * d + c] += g.data()[l * d + c];
                }
            }
            accumulate(
                grads,
                nodes,
                *table,
                Tensor::new(tv.shape().to_vec(), gt).expect("lookup grad"),
            );
        }
        Op::BroadcastAxis0 { x, copies } => {
            let xv = &nodes[*x].value;
            let len = xv.len();
            let mut gx = vec![T::zero(); len];
            for c in 0..*copies {
                for (i, slot) in gx.iter_mut().enumerate() {
                    *slot += g.data()[c * len + i];
                }
            }
            accumulate(
                grads,
                nodes,
                *x,
                Tensor::new(xv.shape().to_vec(), gx).expect("broadcast0 grad"),
            );
        }
        Op::BroadcastAxis1 { x, copies } => {
            let xv = &nodes[*x].value;
            let (a, d) = (xv.shape()[0], xv.shape()[1]);
            let mut gx = vec![T::zero(); a * d];
            for r in 0..a {
                for c in 0..*copies {
                    let base = (r * copies + c) * d;
                    for k in 0..d {
                        gx[r * d + k] += g.data()[base + k];
                    }
                }
            }
            accumulate(
                grads,
                nodes,
                *x,
                Tensor::new(xv.shape().to_vec(), gx).expect("broadcast1 grad"),
            );
        }
        Op::ScaleShiftLast { x, scale, .. } => {
            let d = scale.len();
            let data = g
                .data()
                .iter()
                .enumerate()
                .map(|(i, &gv)| gv * scale[i % d])
                .collect();
            let shape = nodes[*x].value.shape().to_vec();
            accumulate(
                grads,
                nodes,
                *x,
                Tensor::new(shape, data).expect("scale_shift grad"),
            );
        }
        Op::Dropout { x, mask } => {
            let data = g
                .data()
                .iter()
                .zip(mask.iter())
                .map(|(&gv, &m)| gv * m)
                .collect();
            let shape = nodes[*x].value.shape().to_vec();
            accumulate(
                grads,
                nodes,
                *x,
                Tensor::new(shape, data).expect("dropout grad"),
            );
        }
        Op::Sum(x) => {
            let gv = g.item();
            let shape = nodes[*x].value.shape().to_vec();
            accumulate(grads, nodes, *x, Tensor::full(&shape, gv));
        }
        Op::Mean(x) => {
            let xv = &nodes[*x].value;
            let gv = g.item() * T::from_f64(1.0 / xv.len() as f64);
            accumulate(grads, nodes, *x, Tensor::full(xv.shape(), gv));
        }
    }
}

fn gauss_cdf<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    half * (T::one() + (x * inv_sqrt2).erf())
}

fn gauss_pdf<T: Scalar>(x: T) -> T {
    let inv_sqrt_2pi = T::from_f64(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    inv_sqrt_2pi * (-(x * x) * T::from_f64(0.5)).exp()
}

fn swap_last2_tensor<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let rank = x.rank();
    let (m, n) = (x.shape()[rank - 2], x.shape()[rank - 1]);
    let batches = x.len() / (m * n);
    let mut data = vec![T::zero(); x.len()];
    for t in 0..batches {
        let base = t * m * n;
        for i in 0..m {
            for j in 0..n {
                data[base + j * m + i] = x.data()[base + i * n + j];
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape.swap(rank - 2, rank - 1);
    Tensor::new(shape, data).expect("swap_last2 shape")
}

fn swap_axes01_tensor<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (a, b) = (x.shape()[0], x.shape()[1]);
    let rest: usize = x.shape()[2..].iter().product();
    let mut data = vec![T::zero(); x.len()];
    for i in 0..a {
        for j in 0..b {
            let src = (i * b + j) * rest;
            let dst = (j * a + i) * rest;
            data[dst..dst + rest].copy_from_slice(&x.data()[src..src + rest]);
        }
    }
    let mut shape = x.shape().to_vec();
    shape.swap(0, 1);
    Tensor::new(shape, data).expect("swap01 shape")
}

/// out[t, i, :] = sum_j M[i, j] x[t, j, :]; `transpose` mixes with M^T
/// instead (used by the backward rule).
fn node_mix_forward<T: Scalar>(
    x: &Tensor<T>,
    matrix: &[T],
    n: usize,
    transpose: bool,
) -> Tensor<T> {
    let (t_dim, d) = (x.shape()[0], x.shape()[2]);
    let mut data = vec![T::zero(); x.len()];
    for t in 0..t_dim {
        let base = t * n * d;
        for i in 0..n {
            for j in 0..n {
                let m = if transpose {
                    matrix[j * n + i]
                } else {
                    matrix[i * n + j]
                };
                if m == T::zero() {
                    continue;
                }
                let src = base + j * d;
                let dst = base + i * d;
                for c in 0..d {
                    data[dst + c] += m * x.data()[src + c];
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), data).expect("node_mix shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_backward_is_ones() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::from_fn(&[2, 3], |i| i as f64));
        let loss = x.sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), Tensor::ones(&[2, 3]));
    }

    #[test]
    fn quadratic_backward_is_two_x() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::from_fn(&[4], |i| i as f64 - 1.5));
        let loss = x.hadamard(&x).unwrap().sum();
        loss.backward().unwrap();
        let expect = Tensor::from_fn(&[4], |i| 2.0 * (i as f64 - 1.5));
        assert_eq!(x.grad().unwrap(), expect);
    }

    #[test]
    fn backward_requires_scalar() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::ones(&[2]));
        assert!(matches!(
            x.backward(),
            Err(TensorError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn tape_consumed_on_second_backward() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::ones(&[2]));
        let loss = x.sum();
        loss.backward().unwrap();
        assert!(matches!(loss.backward(), Err(TensorError::TapeConsumed)));
    }

    #[test]
    fn linear_identity() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let w = tape.param(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = tape.param(Tensor::zeros(&[2]));
        let y = x.linear(&w, &b).unwrap();
        assert_eq!(y.value().data(), &[1.0, 2.0]);
    }

    #[test]
    fn linear_bias_add() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::new(vec![2], vec![1.0, 1.0]).unwrap());
        let w = tape.param(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = tape.param(Tensor::new(vec![2], vec![3.0, -3.0]).unwrap());
        let y = x.linear(&w, &b).unwrap();
        assert_eq!(y.value().data(), &[4.0, -2.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::from_fn(&[4, 5, 2], |i| (i as f64) * 0.1 - 1.0));
        // delta kernel at the center, identity across channels
        let mut k = Tensor::zeros(&[3, 3, 2, 2]);
        for c in 0..2 {
            let idx = ((1 * 3 + 1) * 2 + c) * 2 + c;
            k.data_mut()[idx] = 1.0;
        }
        let kv = tape.param(k);
        let y = x.conv2d_3x3(&kv).unwrap();
        assert_eq!(y.value(), x.value());
    }

    #[test]
    fn conv_box_sum_center() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::ones(&[3, 3, 1]));
        let k = tape.param(Tensor::ones(&[3, 3, 1, 1]));
        let y = x.conv2d_3x3(&k).unwrap();
        // center sees the full 3x3 box
        assert_eq!(y.value().data()[4], 9.0);
        // corner sees a 2x2 box
        assert_eq!(y.value().data()[0], 4.0);
    }

    #[test]
    fn split_and_concat_roundtrip() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::from_fn(&[2, 4], |i| i as f64));
        let (a, b) = x.split_channels().unwrap();
        assert_eq!(a.shape(), vec![2, 2]);
        assert_eq!(b.shape(), vec![2, 2]);
        assert_eq!(a.value().data(), &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(b.value().data(), &[2.0, 3.0, 6.0, 7.0]);
        let back = tape.concat_last(&[a, b]).unwrap();
        assert_eq!(back.value(), x.value());
    }

    #[test]
    fn split_grad_hits_first_half_only() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::from_fn(&[2, 4], |i| i as f64));
        let (a, _b) = x.split_channels().unwrap();
        a.sum().backward().unwrap();
        let g = x.grad().unwrap();
        assert_eq!(g.data(), &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn odd_channels_rejected() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::ones(&[2, 3]));
        assert!(matches!(
            x.split_channels(),
            Err(TensorError::OddChannels(3))
        ));
    }

    #[test]
    fn gelu_at_zero() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::zeros(&[1]));
        let y = x.gelu();
        assert_eq!(y.value().data()[0], 0.0);
    }

    #[test]
    fn hadamard_with_ones_is_identity() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::from_fn(&[3], |i| i as f64 - 1.0));
        let ones = tape.constant(Tensor::ones(&[3]));
        let y = x.hadamard(&ones).unwrap();
        assert_eq!(y.value(), x.value());
    }

    #[test]
    fn shape_mismatch_on_binary_ops() {
        let tape: Tape<f64> = Tape::new();
        let a = tape.param(Tensor::ones(&[2, 3]));
        let b = tape.param(Tensor::ones(&[3, 2]));
        assert!(a.add(&b).is_err());
        assert!(a.hadamard(&b).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::from_fn(&[3, 5], |i| (i as f64).sin() * 3.0));
        let s = x.softmax_last().unwrap();
        for row in s.value().data().chunks(5) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn topological_order_audit() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::ones(&[2, 2]));
        let w = tape.param(Tensor::ones(&[2, 2]));
        let b = tape.param(Tensor::zeros(&[2]));
        let y = x.linear(&w, &b).unwrap().gelu();
        let z = y.hadamard(&y).unwrap().mean();
        let _ = z;
        assert!(tape.audit_topological_order());
    }

    #[test]
    fn swap_axes_roundtrip() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.param(Tensor::from_fn(&[2, 3, 4], |i| i as f64));
        let y = x.swap_axes01().unwrap();
        assert_eq!(y.shape(), vec![3, 2, 4]);
        let z = y.swap_axes01().unwrap();
        assert_eq!(z.value(), x.value());
        let t = x.swap_last2().unwrap();
        assert_eq!(t.shape(), vec![2, 4, 3]);
        let u = t.swap_last2().unwrap();
        assert_eq!(u.value(), x.value());
    }
}
