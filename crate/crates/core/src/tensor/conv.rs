//! Raw convolution and matrix kernels on row-major slices.
//!
//! Convolution is lowered per sample to a matrix product via im2col:
//! `out[F, H'W'] = kernel[F, C·kH·kW] × cols[C·kH·kW, H'W']`.

use crate::{Error, Result};

/// Geometry of a 2-D cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, padding: usize) -> Result<Self> {
        if input.len() != 4 {
            return Err(Error::Dimension(format!("conv2d input must be [N,C,H,W], got {input:?}")));
        }
        if kernel.len() != 4 {
            return Err(Error::Dimension(format!(
                "conv2d kernel must be [F,C,kH,kW], got {kernel:?}"
            )));
        }
        if stride == 0 {
            return Err(Error::Argument("conv2d stride must be >= 1".into()));
        }
        let (n, c, h, w) = (input[0], input[1], input[2], input[3]);
        let (f, kc, kh, kw) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if kc != c {
            return Err(Error::Dimension(format!(
                "channel axis mismatch: input axis 1 = {c}, kernel axis 1 = {kc}"
            )));
        }
        if kh == 0 || kh > h + 2 * padding {
            return Err(Error::Dimension(format!(
                "kernel height (axis 2) {kh} exceeds padded input height {}",
                h + 2 * padding
            )));
        }
        if kw == 0 || kw > w + 2 * padding {
            return Err(Error::Dimension(format!(
                "kernel width (axis 3) {kw} exceeds padded input width {}",
                w + 2 * padding
            )));
        }
        Ok(Self {
            batch: n,
            in_channels: c,
            height: h,
            width: w,
            filters: f,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            padding,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.filters, self.out_h, self.out_w]
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn sample_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }
}

/// `c[m,n] = beta·c + a[m,k]·b[k,n]` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    debug_assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the index bounds of all three operands are checked above
    // (in debug builds) and by construction at every call site.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn im2col(g: &ConvGeometry, sample: &[f64], cols: &mut [f64]) {
    let p = g.positions();
    for c in 0..g.in_channels {
        let plane = &sample[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        *v = if ix < 0 || ix >= g.width as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im_add(g: &ConvGeometry, cols: &[f64], sample: &mut [f64]) {
    let p = g.positions();
    for c in 0..g.in_channels {
        let plane = &mut sample[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(g: &ConvGeometry, input: &[f64], kernel: &[f64]) -> Vec<f64> {
    let (k, p) = (g.patch_len(), g.positions());
    let mut out = vec![0.0; g.batch * g.filters * p];
    let mut cols = vec![0.0; k * p];
    for s in 0..g.batch {
        im2col(g, &input[s * g.sample_len()..(s + 1) * g.sample_len()], &mut cols);
        let dst = &mut out[s * g.filters * p..(s + 1) * g.filters * p];
        gemm(g.filters, k, p, kernel, (k, 1), &cols, (p, 1), 0.0, dst, (p, 1));
    }
    out
}

/// Gradients of a convolution given the upstream gradient `grad_out`.
/// Returns `(grad_input, grad_kernel)`; the input gradient is skipped when
/// `need_input` is false.
pub fn conv2d_backward(
    g: &ConvGeometry,
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    need_input: bool,
) -> (Option<Vec<f64>>, Vec<f64>) {
    let (k, p) = (g.patch_len(), g.positions());
    let mut grad_kernel = vec![0.0; g.filters * k];
    let mut grad_input = need_input.then(|| vec![0.0; input.len()]);
    let mut cols = vec![0.0; k * p];
    let mut dcols = vec![0.0; k * p];
    for s in 0..g.batch {
        let go = &grad_out[s * g.filters * p..(s + 1) * g.filters * p];
        im2col(g, &input[s * g.sample_len()..(s + 1) * g.sample_len()], &mut cols);
        // dK[F,K] += dY[F,P] · cols[K,P]^T
        gemm(g.filters, p, k, go, (p, 1), &cols, (1, p), 1.0, &mut grad_kernel, (k, 1));
        if let Some(gi) = grad_input.as_mut() {
            // dcols[K,P] = K[F,K]^T · dY[F,P]
            gemm(k, g.filters, p, kernel, (1, k), go, (p, 1), 0.0, &mut dcols, (p, 1));
            col2im_add(g, &dcols, &mut gi[s * g.sample_len()..(s + 1) * g.sample_len()]);
        }
    }
    (grad_input, grad_kernel)
}
