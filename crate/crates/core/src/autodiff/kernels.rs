//! Forward and backward kernels on raw buffers.
//!
//! Layouts are row-major `[C, H, W]` for images and `[C_out, C_in, k, k]`
//! for convolution kernels. Every reduction runs in a fixed order.

use crate::error::{Error, Result};

/// Geometry of one 2D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeometry {
    pub fn new(
        input: &[usize],
        kernel: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let [c_in, h, w] = input[..] else {
            return Err(Error::shape(
                "conv2d",
                format!("input must be [C_in,H,W], got {input:?}"),
            ));
        };
        let [c_out, kc, kh, kw] = kernel[..] else {
            return Err(Error::shape(
                "conv2d",
                format!("kernel must be [C_out,C_in,k,k], got {kernel:?}"),
            ));
        };
        if kc != c_in {
            return Err(Error::shape(
                "conv2d",
                format!("kernel C_in dimension is {kc} but input has {c_in} channels"),
            ));
        }
        if kh != kw {
            return Err(Error::shape(
                "conv2d",
                format!("kernel height {kh} differs from kernel width {kw}"),
            ));
        }
        if kh % 2 == 0 {
            return Err(Error::invalid(
                "conv2d",
                format!("kernel size {kh} must be odd"),
            ));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::shape(
                "conv2d",
                format!("padded input {}x{} smaller than kernel {kh}", h + 2 * padding, w + 2 * padding),
            ));
        }
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            k: kh,
            stride,
            padding,
            h_out: (h + 2 * padding - kh) / stride + 1,
            w_out: (w + 2 * padding - kw) / stride + 1,
        })
    }

    fn patch(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn pixels(&self) -> usize {
        self.h_out * self.w_out
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Unfolds the input into a `[C_in*k*k, H_out*W_out]` matrix.
fn im2col(g: &ConvGeometry, input: &[f64]) -> Vec<f64> {
    let mut cols = Vec::with_capacity(g.patch() * g.pixels());
    let pad = g.padding as isize;
    for ci in 0..g.c_in {
        let plane = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let (lo, hi) = valid_columns(g, kx);
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        cols.resize(cols.len() + g.w_out, 0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    cols.resize(cols.len() + lo, 0.0);
                    if lo < hi {
                        let start = lo * g.stride + kx - g.padding;
                        if g.stride == 1 {
                            cols.extend_from_slice(&src[start..start + (hi - lo)]);
                        } else {
                            cols.extend(src[start..].iter().step_by(g.stride).take(hi - lo));
                        }
                    }
                    cols.resize(cols.len() + g.w_out - hi, 0.0);
                }
            }
        }
    }
    cols
}

/// Valid output-column range `lo..hi` for kernel column `kx`, where
/// `0 <= ox*stride + kx - pad < w`.
fn valid_columns(g: &ConvGeometry, kx: usize) -> (usize, usize) {
    let pad = g.padding as isize;
    let first = (pad - kx as isize).max(0) as usize;
    let lo = first.div_ceil(g.stride).min(g.w_out);
    let last = g.w as isize - 1 + pad - kx as isize;
    let hi = if last < 0 { 0 } else { (last as usize / g.stride + 1).clamp(lo, g.w_out) };
    (lo, hi)
}

/// Adjoint of [`im2col`]: scatters columns back onto the input grid.
fn col2im(g: &ConvGeometry, cols: &[f64]) -> Vec<f64> {
    let p = g.pixels();
    let mut out = vec![0.0; g.c_in * g.h * g.w];
    let pad = g.padding as isize;
    for ci in 0..g.c_in {
        let plane = &mut out[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * p;
                let (lo, hi) = valid_columns(g, kx);
                if lo == hi {
                    continue;
                }
                let start = lo * g.stride + kx - g.padding;
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w + start..(iy as usize + 1) * g.w];
                    let src = &cols[row + oy * g.w_out + lo..row + oy * g.w_out + hi];
                    for (d, s) in dst.iter_mut().step_by(g.stride).zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

/// `a * b` for row-major `a: [m, k]` and `b: [k, n]` with the given
/// strides, into a freshly allocated `[m, n]` matrix.
#[allow(clippy::too_many_arguments)]
fn gemm_new(m: usize, k: usize, n: usize, a: &[f64], rsa: isize, csa: isize, b: &[f64], rsb: isize, csb: isize) -> Vec<f64> {
    let mut c: Vec<f64> = Vec::with_capacity(m * n);
    // SAFETY: with beta = 0 dgemm writes every element of C without reading
    // it, so the buffer is fully initialized before `set_len`.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, 0.0, c.as_mut_ptr(), n as isize, 1,
        );
        c.set_len(m * n);
    }
    c
}

pub fn conv2d_forward(g: &ConvGeometry, input: &[f64], kernel: &[f64]) -> Vec<f64> {
    conv2d_forward_cols(g, input, kernel).0
}

/// Forward pass that also returns the unfolded input for reuse in the
/// backward pass (empty for pointwise kernels, which use the input as is).
pub(crate) fn conv2d_forward_cols(g: &ConvGeometry, input: &[f64], kernel: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (q, p) = (g.patch(), g.pixels());
    if g.is_pointwise() {
        return (gemm_new(g.c_out, q, p, kernel, q as isize, 1, input, p as isize, 1), Vec::new());
    }
    let cols = im2col(g, input);
    let out = gemm_new(g.c_out, q, p, kernel, q as isize, 1, &cols, p as isize, 1);
    (out, cols)
}

/// Returns `(d_input, d_kernel)` for an upstream gradient on the output.
pub fn conv2d_backward(
    g: &ConvGeometry,
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    need_input: bool,
    need_kernel: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let cols = if need_kernel && !g.is_pointwise() { im2col(g, input) } else { Vec::new() };
    conv2d_backward_cols(g, input, &cols, kernel, grad_out, need_input, need_kernel)
}

/// As [`conv2d_backward`] with the unfolded input precomputed; `cols` is
/// ignored for pointwise kernels.
pub(crate) fn conv2d_backward_cols(
    g: &ConvGeometry,
    input: &[f64],
    cols: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    need_input: bool,
    need_kernel: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let (q, p) = (g.patch(), g.pixels());
    let cols = if g.is_pointwise() { input } else { cols };
    // grad_out [C_out, P] x cols^T [P, Q]
    let d_kernel = need_kernel.then(|| gemm_new(g.c_out, p, q, grad_out, p as isize, 1, cols, 1, p as isize));
    let d_input = need_input.then(|| {
        // kernel^T [Q, C_out] x grad_out [C_out, P]
        let dcols = gemm_new(q, g.c_out, p, kernel, 1, q as isize, grad_out, p as isize, 1);
        if g.is_pointwise() {
            dcols
        } else {
            col2im(g, &dcols)
        }
    });
    (d_input, d_kernel)
}

pub fn upsample_nearest_forward(c: usize, h: usize, w: usize, f: usize, x: &[f64]) -> Vec<f64> {
    let (ho, wo) = (h * f, w * f);
    let mut out = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for oy in 0..ho {
            let row = &x[ch * h * w + (oy / f) * w..ch * h * w + (oy / f + 1) * w];
            for &v in row {
                out.extend(std::iter::repeat(v).take(f));
            }
        }
    }
    out
}

pub fn upsample_nearest_backward(c: usize, h: usize, w: usize, f: usize, g: &[f64]) -> Vec<f64> {
    let (ho, wo) = (h * f, w * f);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for oy in 0..ho {
            let src = &g[ch * ho * wo + oy * wo..ch * ho * wo + (oy + 1) * wo];
            let dst = &mut out[ch * h * w + (oy / f) * w..ch * h * w + (oy / f + 1) * w];
            for (ox, s) in src.iter().enumerate() {
                dst[ox / f] += s;
            }
        }
    }
    out
}

/// Per-channel standardization. Returns the normalized values and the
/// per-channel reciprocal standard deviations.
pub fn instance_norm_forward(c: usize, n: usize, x: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; c * n];
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let xs = &x[ch * n..(ch + 1) * n];
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let r = 1.0 / (var + eps).sqrt();
        inv_std[ch] = r;
        for (o, v) in out[ch * n..(ch + 1) * n].iter_mut().zip(xs) {
            *o = (v - mean) * r;
        }
    }
    (out, inv_std)
}

/// `dx = r/N * (N dy - sum(dy) - xhat * sum(dy*xhat))` per channel.
pub fn instance_norm_backward(
    c: usize,
    n: usize,
    xhat: &[f64],
    inv_std: &[f64],
    g: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; c * n];
    let nf = n as f64;
    for ch in 0..c {
        let gs = &g[ch * n..(ch + 1) * n];
        let xs = &xhat[ch * n..(ch + 1) * n];
        let sum_g: f64 = gs.iter().sum();
        let sum_gx: f64 = gs.iter().zip(xs).map(|(a, b)| a * b).sum();
        let r = inv_std[ch];
        for ((o, gv), xv) in out[ch * n..(ch + 1) * n].iter_mut().zip(gs).zip(xs) {
            *o = r / nf * (nf * gv - sum_g - xv * sum_gx);
        }
    }
    out
}
