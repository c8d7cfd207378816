//! Raw numeric kernels behind the autograd ops. All image buffers are NCHW.

use alloc::vec;
use alloc::vec::Vec;

/// `c = alpha * op(a) * op(b) + beta * c` over row-major buffers.
///
/// `a` is `m x k` (or `k x m` when `trans_a`), `b` is `k x n` (or `n x k`
/// when `trans_b`), `c` is `m x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover exactly the strided extents described above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a stride-1, "same"-padded square convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
}

impl ConvGeom {
    fn pad(&self) -> isize {
        (self.kernel / 2) as isize
    }

    fn spatial(&self) -> usize {
        self.height * self.width
    }

    /// Rows of the unfolded matrix.
    pub fn col_rows(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    /// Columns of the unfolded matrix.
    pub fn col_cols(&self) -> usize {
        self.batch * self.spatial()
    }
}

/// Unfolds `input` into a `[in_ch*k*k, batch*h*w]` matrix.
pub fn im2col(g: &ConvGeom, input: &[f64]) -> Vec<f64> {
    let (h, w, k, pad) = (g.height, g.width, g.kernel, g.pad());
    let hw = g.spatial();
    let ncols = g.col_cols();
    let mut cols = vec![0.0; g.col_rows() * ncols];
    for c in 0..g.in_ch {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst_row = &mut cols[row * ncols..(row + 1) * ncols];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for n in 0..g.batch {
                    let src = &input[(n * g.in_ch + c) * hw..(n * g.in_ch + c + 1) * hw];
                    let dst = &mut dst_row[n * hw..(n + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src_row = &src[sy as usize * w..(sy as usize + 1) * w];
                        let dst_row = &mut dst[y * w..(y + 1) * w];
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                        for x in x0..x1 {
                            dst_row[x] = src_row[(x as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates a column matrix back into an image buffer.
pub fn col2im(g: &ConvGeom, cols: &[f64]) -> Vec<f64> {
    let (h, w, k, pad) = (g.height, g.width, g.kernel, g.pad());
    let hw = g.spatial();
    let ncols = g.col_cols();
    let mut out = vec![0.0; g.batch * g.in_ch * hw];
    for c in 0..g.in_ch {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src_row = &cols[row * ncols..(row + 1) * ncols];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for n in 0..g.batch {
                    let dst = &mut out[(n * g.in_ch + c) * hw..(n * g.in_ch + c + 1) * hw];
                    let src = &src_row[n * hw..(n + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                        for x in x0..x1 {
                            dst[sy as usize * w + (x as isize + dx) as usize] += src[y * w + x];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Forward convolution. Returns `(output, cols)`; `cols` is kept for backward.
pub fn conv2d_forward(g: &ConvGeom, input: &[f64], weight: &[f64], bias: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cols = if g.kernel == 1 {
        nchw_to_cn(g.batch, g.in_ch, g.spatial(), input)
    } else {
        im2col(g, input)
    };
    let ncols = g.col_cols();
    let mut mat = vec![0.0; g.out_ch * ncols];
    gemm(
        g.out_ch,
        g.col_rows(),
        ncols,
        1.0,
        weight,
        false,
        &cols,
        false,
        0.0,
        &mut mat,
    );
    let mut out = cn_to_nchw(g.batch, g.out_ch, g.spatial(), &mat);
    let hw = g.spatial();
    for n in 0..g.batch {
        for (co, &b) in bias.iter().enumerate() {
            for v in &mut out[(n * g.out_ch + co) * hw..(n * g.out_ch + co + 1) * hw] {
                *v += b;
            }
        }
    }
    (out, cols)
}

/// Gradients of a convolution.
pub struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Backward convolution. `cols` may be empty when the weight gradient is not wanted.
pub fn conv2d_backward(
    g: &ConvGeom,
    cols: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    want_input: bool,
    want_weight: bool,
) -> ConvGrads {
    let ncols = g.col_cols();
    let rows = g.col_rows();
    let dmat = nchw_to_cn(g.batch, g.out_ch, g.spatial(), grad_out);
    let d_weight = want_weight.then(|| {
        let mut d = vec![0.0; g.out_ch * rows];
        gemm(g.out_ch, ncols, rows, 1.0, &dmat, false, cols, true, 0.0, &mut d);
        d
    });
    let bias = dmat.chunks(ncols).map(|r| r.iter().sum()).collect();
    let d_input = want_input.then(|| {
        let mut dcols = vec![0.0; rows * ncols];
        gemm(rows, g.out_ch, ncols, 1.0, weight, true, &dmat, false, 0.0, &mut dcols);
        if g.kernel == 1 {
            cn_to_nchw(g.batch, g.in_ch, g.spatial(), &dcols)
        } else {
            col2im(g, &dcols)
        }
    });
    ConvGrads {
        input: d_input,
        weight: d_weight,
        bias,
    }
}

/// `[N, C, S]` to `[C, N*S]`.
fn nchw_to_cn(batch: usize, ch: usize, spatial: usize, src: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    let ncols = batch * spatial;
    for n in 0..batch {
        for c in 0..ch {
            out[c * ncols + n * spatial..c * ncols + (n + 1) * spatial]
                .copy_from_slice(&src[(n * ch + c) * spatial..(n * ch + c + 1) * spatial]);
        }
    }
    out
}

/// `[C, N*S]` to `[N, C, S]`.
fn cn_to_nchw(batch: usize, ch: usize, spatial: usize, src: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    let ncols = batch * spatial;
    for n in 0..batch {
        for c in 0..ch {
            out[(n * ch + c) * spatial..(n * ch + c + 1) * spatial]
                .copy_from_slice(&src[c * ncols + n * spatial..c * ncols + (n + 1) * spatial]);
        }
    }
    out
}

/// 2x2 average pooling over `planes` planes of `h x w`.
pub fn avg_pool2(planes: usize, h: usize, w: usize, input: &[f64]) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &input[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let i = 2 * y * w + 2 * x;
                dst[y * ow + x] = 0.25 * (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]);
            }
        }
    }
    out
}

pub fn avg_pool2_backward(planes: usize, h: usize, w: usize, grad_out: &[f64]) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; planes * h * w];
    for p in 0..planes {
        let src = &grad_out[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let g = 0.25 * src[y * ow + x];
                let i = 2 * y * w + 2 * x;
                dst[i] = g;
                dst[i + 1] = g;
                dst[i + w] = g;
                dst[i + w + 1] = g;
            }
        }
    }
    out
}

/// Nearest-neighbour 2x upsampling of `planes` planes of `h x w`.
pub fn upsample2(planes: usize, h: usize, w: usize, input: &[f64]) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &input[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                dst[y * ow + x] = src[(y / 2) * w + x / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward(planes: usize, h: usize, w: usize, grad_out: &[f64]) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; planes * h * w];
    for p in 0..planes {
        let src = &grad_out[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                dst[(y / 2) * w + x / 2] += src[y * ow + x];
            }
        }
    }
    out
}

/// Per-plane normalization to zero mean and unit variance.
///
/// Returns `(normalized, inv_std per plane)`.
pub fn instance_norm(planes: usize, size: usize, eps: f64, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; input.len()];
    let mut inv = vec![0.0; planes];
    let m = size as f64;
    for p in 0..planes {
        let src = &input[p * size..(p + 1) * size];
        let mean = src.iter().sum::<f64>() / m;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        let is = 1.0 / libm::sqrt(var + eps);
        inv[p] = is;
        for (o, &v) in out[p * size..(p + 1) * size].iter_mut().zip(src) {
            *o = (v - mean) * is;
        }
    }
    (out, inv)
}

pub fn instance_norm_backward(
    planes: usize,
    size: usize,
    normalized: &[f64],
    inv_std: &[f64],
    grad_out: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; grad_out.len()];
    let m = size as f64;
    for p in 0..planes {
        let xh = &normalized[p * size..(p + 1) * size];
        let dy = &grad_out[p * size..(p + 1) * size];
        let sum_dy: f64 = dy.iter().sum();
        let sum_dy_xh: f64 = dy.iter().zip(xh).map(|(a, b)| a * b).sum();
        let k = inv_std[p] / m;
        for i in 0..size {
            out[p * size + i] = k * (m * dy[i] - sum_dy - xh[i] * sum_dy_xh);
        }
    }
    out
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
