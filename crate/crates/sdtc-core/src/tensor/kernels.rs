//! Pure numeric kernels shared by forward evaluation and the backward pass.
//!
//! Everything operates on flat row-major slices; shape handling lives in the
//! callers. Loops run in fixed index order so results are bitwise
//! reproducible.

use super::scalar::Scalar;
use super::shape::Shape;

/// Strides of `shape` aligned to `out_dims`, with stride 0 on broadcast axes.
pub(crate) fn bcast_strides(shape: &Shape, out_dims: &[usize]) -> Vec<usize> {
    let rank = out_dims.len();
    let in_dims = shape.dims();
    let in_strides = shape.strides();
    let offset = rank - in_dims.len();
    let mut strides = vec![0usize; rank];
    for i in 0..in_dims.len() {
        if in_dims[i] != 1 {
            strides[offset + i] = in_strides[i];
        }
    }
    strides
}

/// Apply `f` elementwise over two broadcast operands at `out_dims`.
pub(crate) fn zip_broadcast<S: Scalar>(
    a: &[S],
    a_shape: &Shape,
    b: &[S],
    b_shape: &Shape,
    out_dims: &[usize],
    f: impl Fn(S, S) -> S,
) -> Vec<S> {
    let n: usize = out_dims.iter().product();
    // Fast path: both operands already have the output shape.
    if a_shape.dims() == out_dims && b_shape.dims() == out_dims {
        return a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect();
    }
    let sa = bcast_strides(a_shape, out_dims);
    let sb = bcast_strides(b_shape, out_dims);
    let rank = out_dims.len();
    let mut idx = vec![0usize; rank];
    let mut oa = 0usize;
    let mut ob = 0usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(f(a[oa], b[ob]));
        // odometer increment
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out_dims[ax] {
                break;
            }
            idx[ax] = 0;
            oa -= sa[ax] * out_dims[ax];
            ob -= sb[ax] * out_dims[ax];
        }
    }
    out
}

/// Sum `grad` (at `grad_dims`) down to `target` shape, folding broadcast axes.
pub(crate) fn reduce_to_shape<S: Scalar>(grad: &[S], grad_dims: &[usize], target: &Shape) -> Vec<S> {
    if grad_dims == target.dims() {
        return grad.to_vec();
    }
    let mut out = vec![S::ZERO; target.numel()];
    let strides = bcast_strides(target, grad_dims);
    let rank = grad_dims.len();
    let mut idx = vec![0usize; rank];
    let mut ot = 0usize;
    for &g in grad {
        out[ot] += g;
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            ot += strides[ax];
            if idx[ax] < grad_dims[ax] {
                break;
            }
            idx[ax] = 0;
            ot -= strides[ax] * grad_dims[ax];
        }
    }
    out
}

pub(crate) fn matmul<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::ZERO; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let o_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in o_row.iter_mut().zip(b_row.iter()) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose2d<S: Scalar>(x: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut out = vec![S::ZERO; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

/// Iterate the (outer, axis, inner) decomposition used by axis-wise ops.
pub(crate) fn axis_split(dims: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = dims[..axis].iter().product();
    let len = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    (outer, len, inner)
}

pub(crate) fn softmax_axis<S: Scalar>(x: &[S], dims: &[usize], axis: usize) -> Vec<S> {
    let (outer, len, inner) = axis_split(dims, axis);
    let mut out = vec![S::ZERO; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut max = x[base];
            for j in 1..len {
                let v = x[base + j * inner];
                if v > max {
                    max = v;
                }
            }
            let mut sum = S::ZERO;
            for j in 0..len {
                let e = (x[base + j * inner] - max).exp();
                out[base + j * inner] = e;
                sum += e;
            }
            for j in 0..len {
                out[base + j * inner] /= sum;
            }
        }
    }
    out
}

pub(crate) fn softmax_backward<S: Scalar>(
    grad: &[S],
    out: &[S],
    dims: &[usize],
    axis: usize,
) -> Vec<S> {
    let (outer, len, inner) = axis_split(dims, axis);
    let mut dx = vec![S::ZERO; grad.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut dot = S::ZERO;
            for j in 0..len {
                let k = base + j * inner;
                dot += grad[k] * out[k];
            }
            for j in 0..len {
                let k = base + j * inner;
                dx[k] = out[k] * (grad[k] - dot);
            }
        }
    }
    dx
}

pub(crate) fn permute<S: Scalar>(x: &[S], shape: &Shape, axes: &[usize]) -> (Vec<S>, Vec<usize>) {
    let in_dims = shape.dims();
    let in_strides = shape.strides();
    let out_dims: Vec<usize> = axes.iter().map(|&a| in_dims[a]).collect();
    let rank = axes.len();
    let mut out = Vec::with_capacity(x.len());
    let mut idx = vec![0usize; rank];
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut off = 0usize;
    for _ in 0..x.len() {
        out.push(x[off]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < out_dims[ax] {
                break;
            }
            idx[ax] = 0;
            off -= strides[ax] * out_dims[ax];
        }
    }
    (out, out_dims)
}

pub(crate) fn sum_axis<S: Scalar>(x: &[S], dims: &[usize], axis: usize) -> Vec<S> {
    let (outer, len, inner) = axis_split(dims, axis);
    let mut out = vec![S::ZERO; outer * inner];
    for o in 0..outer {
        for j in 0..len {
            let base = o * len * inner + j * inner;
            let obase = o * inner;
            for i in 0..inner {
                out[obase + i] += x[base + i];
            }
        }
    }
    out
}

/// Broadcast a keepdim-reduced gradient back along `axis`.
pub(crate) fn repeat_axis<S: Scalar>(g: &[S], dims: &[usize], axis: usize) -> Vec<S> {
    let (outer, len, inner) = axis_split(dims, axis);
    let mut out = vec![S::ZERO; outer * len * inner];
    for o in 0..outer {
        for j in 0..len {
            for i in 0..inner {
                out[o * len * inner + j * inner + i] = g[o * inner + i];
            }
        }
    }
    out
}

/// 2D cross-correlation, stride 1, zero padding `pad`.
/// x: (c_in, h, w), w: (c_out, c_in, k, k), b: (c_out) -> (c_out, h_out, w_out)
pub(crate) fn conv2d<S: Scalar>(
    x: &[S],
    w: &[S],
    b: &[S],
    c_in: usize,
    h: usize,
    wd: usize,
    c_out: usize,
    k: usize,
    pad: usize,
) -> Vec<S> {
    let h_out = h + 2 * pad + 1 - k;
    let w_out = wd + 2 * pad + 1 - k;
    let mut out = vec![S::ZERO; c_out * h_out * w_out];
    for co in 0..c_out {
        let w_base = co * c_in * k * k;
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = b[co];
                for ci in 0..c_in {
                    let x_base = ci * h * wd;
                    let wk_base = w_base + ci * k * k;
                    for ky in 0..k {
                        let iy = (oy + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            acc += x[x_base + iy as usize * wd + ix as usize]
                                * w[wk_base + ky * k + kx];
                        }
                    }
                }
                out[co * h_out * w_out + oy * w_out + ox] = acc;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<S: Scalar>(
    grad: &[S],
    x: &[S],
    w: &[S],
    c_in: usize,
    h: usize,
    wd: usize,
    c_out: usize,
    k: usize,
    pad: usize,
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let h_out = h + 2 * pad + 1 - k;
    let w_out = wd + 2 * pad + 1 - k;
    let mut dx = vec![S::ZERO; c_in * h * wd];
    let mut dw = vec![S::ZERO; c_out * c_in * k * k];
    let mut db = vec![S::ZERO; c_out];
    for co in 0..c_out {
        let w_base = co * c_in * k * k;
        for oy in 0..h_out {
            for ox in 0..w_out {
                let g = grad[co * h_out * w_out + oy * w_out + ox];
                db[co] += g;
                for ci in 0..c_in {
                    let x_base = ci * h * wd;
                    let wk_base = w_base + ci * k * k;
                    for ky in 0..k {
                        let iy = (oy + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            let xi = x_base + iy as usize * wd + ix as usize;
                            dw[wk_base + ky * k + kx] += g * x[xi];
                            dx[xi] += g * w[wk_base + ky * k + kx];
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Source pixel pairs and weights for half-pixel-centered bilinear resize.
fn bilinear_taps(n_in: usize, n_out: usize, i_out: usize) -> (usize, usize, f64) {
    let scale = n_in as f64 / n_out as f64;
    let s = ((i_out as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(n_in - 1);
    (i0, i1, s - i0 as f64)
}

pub(crate) fn bilinear_resize<S: Scalar>(
    x: &[S],
    c: usize,
    h: usize,
    w: usize,
    h_out: usize,
    w_out: usize,
) -> Vec<S> {
    let mut out = vec![S::ZERO; c * h_out * w_out];
    for oy in 0..h_out {
        let (y0, y1, fy) = bilinear_taps(h, h_out, oy);
        for ox in 0..w_out {
            let (x0, x1, fx) = bilinear_taps(w, w_out, ox);
            let w00 = S::from_f64((1.0 - fy) * (1.0 - fx));
            let w01 = S::from_f64((1.0 - fy) * fx);
            let w10 = S::from_f64(fy * (1.0 - fx));
            let w11 = S::from_f64(fy * fx);
            for ch in 0..c {
                let base = ch * h * w;
                out[ch * h_out * w_out + oy * w_out + ox] = x[base + y0 * w + x0] * w00
                    + x[base + y0 * w + x1] * w01
                    + x[base + y1 * w + x0] * w10
                    + x[base + y1 * w + x1] * w11;
            }
        }
    }
    out
}

pub(crate) fn bilinear_resize_backward<S: Scalar>(
    grad: &[S],
    c: usize,
    h: usize,
    w: usize,
    h_out: usize,
    w_out: usize,
) -> Vec<S> {
    let mut dx = vec![S::ZERO; c * h * w];
    for oy in 0..h_out {
        let (y0, y1, fy) = bilinear_taps(h, h_out, oy);
        for ox in 0..w_out {
            let (x0, x1, fx) = bilinear_taps(w, w_out, ox);
            let w00 = S::from_f64((1.0 - fy) * (1.0 - fx));
            let w01 = S::from_f64((1.0 - fy) * fx);
            let w10 = S::from_f64(fy * (1.0 - fx));
            let w11 = S::from_f64(fy * fx);
            for ch in 0..c {
                let g = grad[ch * h_out * w_out + oy * w_out + ox];
                let base = ch * h * w;
                dx[base + y0 * w + x0] += g * w00;
                dx[base + y0 * w + x1] += g * w01;
                dx[base + y1 * w + x0] += g * w10;
                dx[base + y1 * w + x1] += g * w11;
            }
        }
    }
    dx
}
