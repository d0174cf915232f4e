//! Raw numeric kernels on flat row-major slices.
//!
//! These are shared by the eager `Tensor` methods and the tape's forward and
//! backward passes.

use super::Real;
use crate::error::{Error, Result};

#[inline]
pub fn relu<T: Real>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

/// Batch, m, k, n for a 2-D or batched 3-D product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatmulDims {
    pub batch: usize,
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

pub fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(MatmulDims, Vec<usize>)> {
    let err = || Error::shape("matmul", format!("{a:?} x {b:?}"));
    match (a, b) {
        ([m, k], [k2, n]) if k == k2 => {
            Ok((MatmulDims { batch: 1, m: *m, k: *k, n: *n }, vec![*m, *n]))
        }
        ([g, m, k], [g2, k2, n]) if g == g2 && k == k2 => {
            Ok((MatmulDims { batch: *g, m: *m, k: *k, n: *n }, vec![*g, *m, *n]))
        }
        _ => Err(err()),
    }
}

pub fn matmul<T: Real>(
    a_shape: &[usize],
    a: &[T],
    b_shape: &[usize],
    b: &[T],
) -> Result<(Vec<usize>, Vec<T>)> {
    let (dims, out_shape) = matmul_dims(a_shape, b_shape)?;
    let mut out = vec![T::zero(); dims.batch * dims.m * dims.n];
    gemm_nn(dims, a, b, &mut out);
    Ok((out_shape, out))
}

/// out += A·B
pub fn gemm_nn<T: Real>(d: MatmulDims, a: &[T], b: &[T], out: &mut [T]) {
    let MatmulDims { batch, m, k, n } = d;
    for g in 0..batch {
        let a = &a[g * m * k..(g + 1) * m * k];
        let b = &b[g * k * n..(g + 1) * k * n];
        let out = &mut out[g * m * n..(g + 1) * m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o = *o + av * bv;
                }
            }
        }
    }
}

/// dA += dC·Bᵀ
pub fn gemm_nt<T: Real>(d: MatmulDims, dc: &[T], b: &[T], da: &mut [T]) {
    let MatmulDims { batch, m, k, n } = d;
    for g in 0..batch {
        let dc = &dc[g * m * n..(g + 1) * m * n];
        let b = &b[g * k * n..(g + 1) * k * n];
        let da = &mut da[g * m * k..(g + 1) * m * k];
        for i in 0..m {
            let crow = &dc[i * n..(i + 1) * n];
            for p in 0..k {
                let brow = &b[p * n..(p + 1) * n];
                let s: T = crow.iter().zip(brow).map(|(&c, &bv)| c * bv).sum();
                da[i * k + p] = da[i * k + p] + s;
            }
        }
    }
}

/// dB += Aᵀ·dC
pub fn gemm_tn<T: Real>(d: MatmulDims, a: &[T], dc: &[T], db: &mut [T]) {
    let MatmulDims { batch, m, k, n } = d;
    for g in 0..batch {
        let a = &a[g * m * k..(g + 1) * m * k];
        let dc = &dc[g * m * n..(g + 1) * m * n];
        let db = &mut db[g * k * n..(g + 1) * k * n];
        for i in 0..m {
            let crow = &dc[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                let brow = &mut db[p * n..(p + 1) * n];
                for (o, &c) in brow.iter_mut().zip(crow) {
                    *o = *o + av * c;
                }
            }
        }
    }
}

/// (outer, axis length, inner) strides for reducing along `axis`.
pub fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::shape("softmax", format!("axis {axis} out of range for {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

pub fn softmax<T: Real>(shape: &[usize], x: &[T], axis: usize) -> Result<Vec<T>> {
    let (outer, len, inner) = axis_split(shape, axis)?;
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let max = (0..len).map(|j| x[at(j)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for j in 0..len {
                let e = (x[at(j)] - max).exp();
                out[at(j)] = e;
                total = total + e;
            }
            for j in 0..len {
                out[at(j)] = out[at(j)] / total;
            }
        }
    }
    Ok(out)
}

/// dx = y ⊙ (dy − Σ y·dy) along the axis.
pub fn softmax_backward<T: Real>(
    shape: &[usize],
    y: &[T],
    dy: &[T],
    axis: usize,
    dx: &mut [T],
) -> Result<()> {
    let (outer, len, inner) = axis_split(shape, axis)?;
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let dot: T = (0..len).map(|j| y[at(j)] * dy[at(j)]).sum();
            for j in 0..len {
                let idx = at(j);
                dx[idx] = dx[idx] + y[idx] * (dy[idx] - dot);
            }
        }
    }
    Ok(())
}

pub fn broadcast_binary<T: Real>(
    op: &'static str,
    a_shape: &[usize],
    a: &[T],
    b_shape: &[usize],
    b: &[T],
    f: impl Fn(T, T) -> T,
) -> Result<(Vec<usize>, Vec<T>)> {
    if a_shape == b_shape {
        Ok((a_shape.to_vec(), a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()))
    } else if b.len() == 1 {
        let s = b[0];
        Ok((a_shape.to_vec(), a.iter().map(|&x| f(x, s)).collect()))
    } else if a.len() == 1 {
        let s = a[0];
        Ok((b_shape.to_vec(), b.iter().map(|&y| f(s, y)).collect()))
    } else {
        Err(Error::shape(op, format!("cannot broadcast {a_shape:?} with {b_shape:?}")))
    }
}

/// Geometry of a single-image cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new(x: &[usize], k: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (&[c_in, h, w], &[c_out, kc, kh, kw]) = (x, k) else {
            return Err(Error::shape("conv2d", format!("input {x:?}, kernel {k:?}")));
        };
        if kc != c_in {
            return Err(Error::shape("conv2d", format!("kernel expects {kc} channels, input has {c_in}")));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::shape("conv2d", format!("kernel extent {kh}x{kw} must be odd")));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d", "stride must be positive"));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::shape("conv2d", format!("non-positive output extent for {h}x{w}, kernel {kh}x{kw}, padding {pad}")));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Ok(ConvGeometry { c_in, h, w, c_out, kh, kw, stride, pad, oh, ow })
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.c_out, self.oh, self.ow]
    }

    pub fn check_bias(&self, shape: &[usize]) -> Result<()> {
        if shape == [self.c_out] {
            Ok(())
        } else {
            Err(Error::shape("conv2d", format!("bias {shape:?} for {} output channels", self.c_out)))
        }
    }

    /// Output columns `ox` whose input column `ox*stride + kx - pad` is in range.
    #[inline]
    fn valid(&self, k: usize, extent: usize, out: usize) -> (usize, usize) {
        // in = o*s + k - p  ∈ [0, extent)
        let s = self.stride;
        let lo = if k >= self.pad { 0 } else { (self.pad - k).div_ceil(s) };
        let hi = if extent + self.pad > k {
            ((extent + self.pad - k - 1) / s + 1).min(out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

pub fn conv2d_forward<T: Real>(g: &ConvGeometry, x: &[T], k: &[T], bias: Option<&[T]>) -> Vec<T> {
    let plane = g.oh * g.ow;
    let mut out = vec![T::zero(); g.c_out * plane];
    for co in 0..g.c_out {
        let o = &mut out[co * plane..(co + 1) * plane];
        if let Some(b) = bias {
            o.iter_mut().for_each(|v| *v = b[co]);
        }
        for ci in 0..g.c_in {
            let xin = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.kh {
                let (y0, y1) = g.valid(ky, g.h, g.oh);
                for kx in 0..g.kw {
                    let wv = k[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx];
                    let (x0, x1) = g.valid(kx, g.w, g.ow);
                    for oy in y0..y1 {
                        let iy = oy * g.stride + ky - g.pad;
                        let orow = &mut o[oy * g.ow..(oy + 1) * g.ow];
                        let irow = &xin[iy * g.w..(iy + 1) * g.w];
                        for ox in x0..x1 {
                            orow[ox] = orow[ox] + wv * irow[ox * g.stride + kx - g.pad];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates input, kernel, and bias gradients for the given output gradient.
pub fn conv2d_backward<T: Real>(
    g: &ConvGeometry,
    x: &[T],
    k: &[T],
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dk: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let plane = g.oh * g.ow;
    if let Some(db) = db {
        for co in 0..g.c_out {
            let s: T = dy[co * plane..(co + 1) * plane].iter().copied().sum();
            db[co] = db[co] + s;
        }
    }
    for co in 0..g.c_out {
        let d = &dy[co * plane..(co + 1) * plane];
        for ci in 0..g.c_in {
            let xoff = ci * g.h * g.w;
            for ky in 0..g.kh {
                let (y0, y1) = g.valid(ky, g.h, g.oh);
                for kx in 0..g.kw {
                    let kidx = ((co * g.c_in + ci) * g.kh + ky) * g.kw + kx;
                    let (x0, x1) = g.valid(kx, g.w, g.ow);
                    if let Some(dk) = dk.as_deref_mut() {
                        let mut acc = T::zero();
                        for oy in y0..y1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let irow = &x[xoff + iy * g.w..xoff + (iy + 1) * g.w];
                            let drow = &d[oy * g.ow..(oy + 1) * g.ow];
                            for ox in x0..x1 {
                                acc = acc + drow[ox] * irow[ox * g.stride + kx - g.pad];
                            }
                        }
                        dk[kidx] = dk[kidx] + acc;
                    }
                    if let Some(dx) = dx.as_deref_mut() {
                        let wv = k[kidx];
                        for oy in y0..y1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let drow = &d[oy * g.ow..(oy + 1) * g.ow];
                            let xrow = &mut dx[xoff + iy * g.w..xoff + (iy + 1) * g.w];
                            for ox in x0..x1 {
                                let ix = ox * g.stride + kx - g.pad;
                                xrow[ix] = xrow[ix] + wv * drow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Source taps for 2x bilinear upsampling along one axis (half-pixel centres,
/// edge-clamped): output `o` reads `(i0, i1, t)` as `(1-t)·x[i0] + t·x[i1]`.
fn bilinear_taps(n_in: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n_in)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn upsample2x_nearest<T: Real>(c: usize, h: usize, w: usize, x: &[T]) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                out[(ch * oh + oy) * ow + ox] = x[(ch * h + oy / 2) * w + ox / 2];
            }
        }
    }
    out
}

pub fn upsample2x_nearest_backward<T: Real>(c: usize, h: usize, w: usize, dy: &[T], dx: &mut [T]) {
    let (oh, ow) = (2 * h, 2 * w);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let i = (ch * h + oy / 2) * w + ox / 2;
                dx[i] = dx[i] + dy[(ch * oh + oy) * ow + ox];
            }
        }
    }
}

pub fn upsample2x_bilinear<T: Real>(c: usize, h: usize, w: usize, x: &[T]) -> Vec<T> {
    let (ty, tx) = (bilinear_taps(h), bilinear_taps(w));
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        let xin = &x[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let (fy1, fy0) = (T::of_f64(fy), T::of_f64(1.0 - fy));
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let (fx1, fx0) = (T::of_f64(fx), T::of_f64(1.0 - fx));
                let top = xin[y0 * w + x0] * fx0 + xin[y0 * w + x1] * fx1;
                let bot = xin[y1 * w + x0] * fx0 + xin[y1 * w + x1] * fx1;
                out[(ch * oh + oy) * ow + ox] = top * fy0 + bot * fy1;
            }
        }
    }
    out
}

pub fn upsample2x_bilinear_backward<T: Real>(c: usize, h: usize, w: usize, dy: &[T], dx: &mut [T]) {
    let (ty, tx) = (bilinear_taps(h), bilinear_taps(w));
    let (oh, ow) = (2 * h, 2 * w);
    for ch in 0..c {
        let dxc = &mut dx[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let (fy1, fy0) = (T::of_f64(fy), T::of_f64(1.0 - fy));
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let (fx1, fx0) = (T::of_f64(fx), T::of_f64(1.0 - fx));
                let g = dy[(ch * oh + oy) * ow + ox];
                dxc[y0 * w + x0] = dxc[y0 * w + x0] + g * fy0 * fx0;
                dxc[y0 * w + x1] = dxc[y0 * w + x1] + g * fy0 * fx1;
                dxc[y1 * w + x0] = dxc[y1 * w + x0] + g * fy1 * fx0;
                dxc[y1 * w + x1] = dxc[y1 * w + x1] + g * fy1 * fx1;
            }
        }
    }
}

/// Per-pixel log-softmax over the leading class axis of `[K, P]` logits.
/// Returns the class probabilities and the mean negative log-likelihood.
pub fn cross_entropy<T: Real>(classes: usize, logits: &[T], targets: &[usize]) -> (Vec<T>, T) {
    let pixels = targets.len();
    let mut probs = vec![T::zero(); logits.len()];
    let mut total = T::zero();
    for p in 0..pixels {
        let max = (0..classes).map(|c| logits[c * pixels + p]).fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for c in 0..classes {
            let e = (logits[c * pixels + p] - max).exp();
            probs[c * pixels + p] = e;
            z = z + e;
        }
        for c in 0..classes {
            probs[c * pixels + p] = probs[c * pixels + p] / z;
        }
        let t = targets[p];
        total = total + (z.ln() - (logits[t * pixels + p] - max));
    }
    (probs, total / T::from_usize(pixels).unwrap())
}
