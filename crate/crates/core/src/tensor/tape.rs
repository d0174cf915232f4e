use super::kernels::{self, ConvGeometry, MatmulDims};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpsampleMode {
    Nearest,
    Bilinear,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, dims: MatmulDims },
    TransposeLast2 { a: Var },
    Softmax { a: Var, axis: usize },
    Conv2d { x: Var, k: Var, bias: Option<Var>, geo: ConvGeometry },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, c: f64 },
    Relu { a: Var },
    Reshape { a: Var },
    Gather { a: Var, index: Vec<usize> },
    Concat { a: Var, b: Var },
    Upsample { a: Var, mode: UpsampleMode },
    Sum { a: Var },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation for one reverse sweep.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order. A tape is single-use and thread-confined.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Its gradient is populated by [`Tape::backward`] when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let needs_grad = t.requires_grad;
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_grad())
    }

    pub fn constant(&mut self, mut t: Tensor<T>) -> Var {
        t.requires_grad = false;
        self.leaf(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<T>, op: Op, inputs: &[Var]) -> Result<Var> {
        value.check_finite(op_name)?;
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (dims, shape) = kernels::matmul_dims(self.shape(a), self.shape(b))?;
        let mut out = vec![T::zero(); shape.iter().product()];
        kernels::gemm_nn(dims, self.value(a).data(), self.value(b).data(), &mut out);
        self.push("matmul", Tensor::new(&shape, out)?, Op::MatMul { a, b, dims }, &[a, b])
    }

    /// Swaps the last two axes of a 2-D or 3-D tensor.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (out_shape, out) = match *t.shape() {
            [m, n] => (vec![n, m], transpose_data(1, m, n, t.data())),
            [g, m, n] => (vec![g, n, m], transpose_data(g, m, n, t.data())),
            ref s => return Err(Error::shape("transpose", format!("{s:?}"))),
        };
        self.push("transpose", Tensor::new(&out_shape, out)?, Op::TransposeLast2 { a }, &[a])
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        let out = kernels::softmax(t.shape(), t.data(), axis)?;
        let value = Tensor::new(t.shape(), out)?;
        self.push("softmax", value, Op::Softmax { a, axis }, &[a])
    }

    pub fn conv2d(&mut self, x: Var, k: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let geo = ConvGeometry::new(self.shape(x), self.shape(k), stride, pad)?;
        if let Some(b) = bias {
            geo.check_bias(self.shape(b))?;
        }
        let out = kernels::conv2d_forward(
            &geo,
            self.value(x).data(),
            self.value(k).data(),
            bias.map(|b| self.value(b).data()),
        );
        let value = Tensor::new(&geo.out_shape(), out)?;
        let mut inputs = vec![x, k];
        inputs.extend(bias);
        self.push("conv2d", value, Op::Conv2d { x, k, bias, geo }, &inputs)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (shape, out) = kernels::broadcast_binary(name, ta.shape(), ta.data(), tb.shape(), tb.data(), f)?;
        self.push(name, Tensor::new(&shape, out)?, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).scale(T::of_f64(c));
        self.push("scale", value, Op::Scale { a, c }, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).relu();
        self.push("relu", value, Op::Relu { a }, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        self.push("reshape", Tensor { requires_grad: false, ..value }, Op::Reshape { a }, &[a])
    }

    /// `out[i] = a[index[i]]`, laid out with `shape`.
    pub fn gather(&mut self, a: Var, index: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let src = self.value(a).data();
        if let Some(&bad) = index.iter().find(|&&i| i >= src.len()) {
            return Err(Error::shape("gather", format!("index {bad} out of range {}", src.len())));
        }
        let out = index.iter().map(|&i| src[i]).collect();
        let value = Tensor::new(shape, out)?;
        self.push("gather", value, Op::Gather { a, index }, &[a])
    }

    /// Concatenates along the leading axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().is_empty() || ta.shape()[1..] != tb.shape()[1..] || tb.shape().is_empty() {
            return Err(Error::shape("concat", format!("{:?} with {:?}", ta.shape(), tb.shape())));
        }
        let mut shape = ta.shape().to_vec();
        shape[0] += tb.shape()[0];
        let mut out = ta.data().to_vec();
        out.extend_from_slice(tb.data());
        self.push("concat", Tensor::new(&shape, out)?, Op::Concat { a, b }, &[a, b])
    }

    /// Doubles the spatial extent of a `C×H×W` map.
    pub fn upsample2x(&mut self, a: Var, mode: UpsampleMode) -> Result<Var> {
        let t = self.value(a);
        let &[c, h, w] = t.shape() else {
            return Err(Error::shape("upsample", format!("{:?}", t.shape())));
        };
        let out = match mode {
            UpsampleMode::Nearest => kernels::upsample2x_nearest(c, h, w, t.data()),
            UpsampleMode::Bilinear => kernels::upsample2x_bilinear(c, h, w, t.data()),
        };
        let value = Tensor::new(&[c, 2 * h, 2 * w], out)?;
        self.push("upsample", value, Op::Upsample { a, mode }, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push("sum", value, Op::Sum { a }, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Mean per-pixel cross-entropy of `[K, H, W]` logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (classes, pixels) = match t.shape() {
            [k, rest @ ..] if !rest.is_empty() => (*k, rest.iter().product::<usize>()),
            s => return Err(Error::shape("cross_entropy", format!("logits {s:?}"))),
        };
        if pixels != targets.len() {
            return Err(Error::shape("cross_entropy", format!("{pixels} pixels vs {} targets", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&c| c >= classes) {
            return Err(Error::shape("cross_entropy", format!("target class {bad} with {classes} classes")));
        }
        let (probs, loss) = kernels::cross_entropy(classes, t.data(), targets);
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            probs: probs.iter().map(|p| p.as_f64()).collect(),
        };
        self.push("cross_entropy", Tensor::scalar(loss), op, &[logits])
    }

    /// Reverse sweep from a scalar `loss`. Every `requires_grad` leaf that the
    /// loss depends on receives its gradient in `Tensor::grad`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::NonScalar(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if matches!(self.nodes[id].op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            self.backprop(id, &g, &mut grads);
        }

        for (id, g) in grads.into_iter().enumerate() {
            let node = &mut self.nodes[id];
            if matches!(node.op, Op::Leaf) && node.value.requires_grad {
                node.value.grad = Some(g.unwrap_or_else(|| vec![T::zero(); node.value.numel()]));
            }
        }
        Ok(())
    }

    fn backprop(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        // Runs `f` on the gradient accumulator of `v` when `v` needs a gradient.
        let with = |v: Var, grads: &mut [Option<Vec<T>>], f: &mut dyn FnMut(&mut [T])| {
            if self.nodes[v.0].needs_grad {
                let mut d = grads[v.0]
                    .take()
                    .unwrap_or_else(|| vec![T::zero(); self.nodes[v.0].value.numel()]);
                f(&mut d);
                grads[v.0] = Some(d);
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, dims } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                with(*a, grads, &mut |d| kernels::gemm_nt(*dims, g, bv, d));
                with(*b, grads, &mut |d| kernels::gemm_tn(*dims, av, g, d));
            }
            Op::TransposeLast2 { a } => {
                let (gr, m, n) = match *self.shape(*a) {
                    [m, n] => (1, m, n),
                    [gr, m, n] => (gr, m, n),
                    _ => unreachable!("validated in forward"),
                };
                with(*a, grads, &mut |d| add_into(d, &transpose_data(gr, n, m, g)));
            }
            Op::Softmax { a, axis } => {
                let y = &node.value;
                with(*a, grads, &mut |d| {
                    kernels::softmax_backward(y.shape(), y.data(), g, *axis, d)
                        .expect("validated in forward")
                });
            }
            Op::Conv2d { x, k, bias, geo } => {
                let (xv, kv) = (self.value(*x).data(), self.value(*k).data());
                with(*x, grads, &mut |d| kernels::conv2d_backward(geo, xv, kv, g, Some(d), None, None));
                with(*k, grads, &mut |d| kernels::conv2d_backward(geo, xv, kv, g, None, Some(d), None));
                if let Some(b) = bias {
                    with(*b, grads, &mut |d| kernels::conv2d_backward(geo, xv, kv, g, None, None, Some(d)));
                }
            }
            Op::Add { a, b } => {
                self.reduce_into(*a, g, |gi, _| gi, grads);
                self.reduce_into(*b, g, |gi, _| gi, grads);
            }
            Op::Sub { a, b } => {
                self.reduce_into(*a, g, |gi, _| gi, grads);
                self.reduce_into(*b, g, |gi, _| -gi, grads);
            }
            Op::Mul { a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let other = |t: &Tensor<T>, i: usize| if t.is_scalar() { t.item() } else { t.data()[i] };
                self.reduce_into(*a, g, |gi, i| gi * other(vb, i), grads);
                self.reduce_into(*b, g, |gi, i| gi * other(va, i), grads);
            }
            Op::Scale { a, c } => {
                let c = T::of_f64(*c);
                with(*a, grads, &mut |d| d.iter_mut().zip(g).for_each(|(d, &gi)| *d = *d + gi * c));
            }
            Op::Relu { a } => {
                let x = self.value(*a).data();
                with(*a, grads, &mut |d| {
                    for (dv, (&gi, &xi)) in d.iter_mut().zip(g.iter().zip(x)) {
                        if xi > T::zero() {
                            *dv = *dv + gi;
                        }
                    }
                });
            }
            Op::Reshape { a } => with(*a, grads, &mut |d| add_into(d, g)),
            Op::Gather { a, index } => with(*a, grads, &mut |d| {
                for (&i, &gi) in index.iter().zip(g) {
                    d[i] = d[i] + gi;
                }
            }),
            Op::Concat { a, b } => {
                let na = self.value(*a).numel();
                with(*a, grads, &mut |d| add_into(d, &g[..na]));
                with(*b, grads, &mut |d| add_into(d, &g[na..]));
            }
            Op::Upsample { a, mode } => {
                let &[c, h, w] = self.shape(*a) else { unreachable!("validated in forward") };
                with(*a, grads, &mut |d| match mode {
                    UpsampleMode::Nearest => kernels::upsample2x_nearest_backward(c, h, w, g, d),
                    UpsampleMode::Bilinear => kernels::upsample2x_bilinear_backward(c, h, w, g, d),
                });
            }
            Op::Sum { a } => {
                let g0 = g[0];
                with(*a, grads, &mut |d| d.iter_mut().for_each(|d| *d = *d + g0));
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let pixels = targets.len();
                let scale = g[0] / T::from_usize(pixels).unwrap();
                with(*logits, grads, &mut |d| {
                    for (i, (dv, &p)) in d.iter_mut().zip(probs).enumerate() {
                        let onehot = if targets[i % pixels] == i / pixels { 1.0 } else { 0.0 };
                        *dv = *dv + scale * T::of_f64(p - onehot);
                    }
                });
            }
        }
    }

    /// Accumulates `f(g_i, i)` into `v`, summing over all elements when `v` is a
    /// broadcast scalar.
    fn reduce_into(&self, v: Var, g: &[T], f: impl Fn(T, usize) -> T, grads: &mut [Option<Vec<T>>]) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let n = self.nodes[v.0].value.numel();
        let d = grads[v.0].get_or_insert_with(|| vec![T::zero(); n]);
        if n == g.len() {
            for (i, dv) in d.iter_mut().enumerate() {
                *dv = *dv + f(g[i], i);
            }
        } else {
            let s: T = g.iter().enumerate().map(|(i, &gi)| f(gi, i)).sum();
            d[0] = d[0] + s;
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
}

fn transpose_data<T: Real>(batch: usize, m: usize, n: usize, x: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for g in 0..batch {
        let off = g * m * n;
        for i in 0..m {
            for j in 0..n {
                out[off + j * m + i] = x[off + i * n + j];
            }
        }
    }
    out
}
