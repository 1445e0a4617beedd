//! Spatial operations: 2-D convolution (cross-correlation semantics) and 2x
//! upsampling, plus the flat matmul kernels the whole engine runs on.
//!
//! Convolution is lowered to im2col + matmul; the column matrix is kept
//! alive in the backward closure so the gradient pass is two more matmuls
//! and a col2im scatter.

use super::Tensor;
use crate::error::{Error, Result};

/// C[M,N] = A[M,K] * B[K,N]
pub(crate) fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// C[K,N] = Aᵀ B for A[M,K], B[M,N]
pub(crate) fn mm_at_b(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// C[M,K] = A Bᵀ for A[M,N], B[K,N]
pub(crate) fn mm_a_bt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * k + p] = acc;
        }
    }
    out
}

fn im2col(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    ksize: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    let rows = c_in * ksize * ksize;
    let mut cols = vec![0.0; rows * oh * ow];
    for c in 0..c_in {
        for ky in 0..ksize {
            for kx in 0..ksize {
                let r = (c * ksize + ky) * ksize + kx;
                let dst = &mut cols[r * oh * ow..(r + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &input[(c * h + iy as usize) * w..(c * h + iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * ow + ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    cols: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    ksize: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; c_in * h * w];
    for c in 0..c_in {
        for ky in 0..ksize {
            for kx in 0..ksize {
                let r = (c * ksize + ky) * ksize + kx;
                let src = &cols[r * oh * ow..(r + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row =
                        &mut out[(c * h + iy as usize) * w..(c * h + iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Interpolation mode for [`Tensor::upsample2x`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsampleMode {
    Nearest,
    Bilinear,
}

impl Tensor {
    /// 2-D cross-correlation of a [C_in,H,W] input with [C_out,C_in,k,k]
    /// kernels. The kernel size must be odd and the output extent
    /// (H + 2*padding - k)/stride + 1 must be integral.
    pub fn conv2d(&self, kernels: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
        let si = self.shape();
        let sk = kernels.shape();
        if si.len() != 3 || sk.len() != 4 || sk[1] != si[0] || sk[2] != sk[3] {
            return Err(Error::ShapeMismatch {
                left: si.to_vec(),
                right: sk.to_vec(),
            });
        }
        let (c_in, h, w) = (si[0], si[1], si[2]);
        let (c_out, ksize) = (sk[0], sk[2]);
        if ksize % 2 == 0 {
            return Err(Error::invalid(format!("kernel size must be odd, got {ksize}")));
        }
        if stride == 0 {
            return Err(Error::invalid("stride must be >= 1"));
        }
        let span_h = h + 2 * padding;
        let span_w = w + 2 * padding;
        if span_h < ksize || span_w < ksize || (span_h - ksize) % stride != 0 || (span_w - ksize) % stride != 0
        {
            return Err(Error::invalid(format!(
                "conv2d output size not integral: input {h}x{w}, kernel {ksize}, stride {stride}, padding {padding}"
            )));
        }
        let oh = (span_h - ksize) / stride + 1;
        let ow = (span_w - ksize) / stride + 1;

        let cols = im2col(self.data(), c_in, h, w, ksize, stride, padding, oh, ow);
        let rows = c_in * ksize * ksize;
        let out = mm(kernels.data(), &cols, c_out, rows, oh * ow);

        let kern = kernels.clone();
        Ok(Tensor::from_op(
            vec![c_out, oh, ow],
            out,
            vec![self.clone(), kernels.clone()],
            Box::new(move |up| {
                // dKernels = G colsᵀ, dInput = col2im(Kᵀ G)
                let gk = mm_a_bt(up, &cols, c_out, oh * ow, rows);
                let gcols = mm_at_b(kern.data(), up, c_out, rows, oh * ow);
                let gi = col2im(&gcols, c_in, h, w, ksize, stride, padding, oh, ow);
                vec![gi, gk]
            }),
        ))
    }

    /// 2x2 average pooling of a [C,H,W] tensor with even H and W; the exact
    /// inverse resolution step of `upsample2x`.
    pub fn avgpool2x(&self) -> Result<Tensor> {
        let shape = self.shape();
        if shape.len() != 3 {
            return Err(Error::invalid(format!(
                "avgpool2x expects [C,H,W], got {shape:?}"
            )));
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
            return Err(Error::invalid(format!(
                "avgpool2x needs even positive spatial dims, got {h}x{w}"
            )));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for x in 0..ow {
                    let base = (ch * h + 2 * y) * w + 2 * x;
                    out[(ch * oh + y) * ow + x] =
                        0.25 * (self.data()[base]
                            + self.data()[base + 1]
                            + self.data()[base + w]
                            + self.data()[base + w + 1]);
                }
            }
        }
        Ok(Tensor::from_op(
            vec![c, oh, ow],
            out,
            vec![self.clone()],
            Box::new(move |up| {
                let mut g = vec![0.0; c * h * w];
                for ch in 0..c {
                    for y in 0..oh {
                        for x in 0..ow {
                            let u = 0.25 * up[(ch * oh + y) * ow + x];
                            let base = (ch * h + 2 * y) * w + 2 * x;
                            g[base] += u;
                            g[base + 1] += u;
                            g[base + w] += u;
                            g[base + w + 1] += u;
                        }
                    }
                }
                vec![g]
            }),
        ))
    }

    /// Exact 2x spatial upsampling of a [C,H,W] tensor.
    pub fn upsample2x(&self, mode: UpsampleMode) -> Result<Tensor> {
        let shape = self.shape();
        if shape.len() != 3 {
            return Err(Error::invalid(format!(
                "upsample2x expects [C,H,W], got {shape:?}"
            )));
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let (oh, ow) = (2 * h, 2 * w);
        match mode {
            UpsampleMode::Nearest => {
                let mut out = vec![0.0; c * oh * ow];
                for ch in 0..c {
                    for y in 0..oh {
                        for x in 0..ow {
                            out[(ch * oh + y) * ow + x] =
                                self.data()[(ch * h + y / 2) * w + x / 2];
                        }
                    }
                }
                Ok(Tensor::from_op(
                    vec![c, oh, ow],
                    out,
                    vec![self.clone()],
                    Box::new(move |up| {
                        let mut g = vec![0.0; c * h * w];
                        for ch in 0..c {
                            for y in 0..oh {
                                for x in 0..ow {
                                    g[(ch * h + y / 2) * w + x / 2] +=
                                        up[(ch * oh + y) * ow + x];
                                }
                            }
                        }
                        vec![g]
                    }),
                ))
            }
            UpsampleMode::Bilinear => {
                // Half-pixel-centered sampling with edge clamping: 4 taps per
                // output pixel, the same taps reused for the backward scatter.
                let taps = |d: usize, extent: usize| -> (usize, usize, f64) {
                    let s = (d as f64 + 0.5) / 2.0 - 0.5;
                    let f = s.floor();
                    let frac = s - f;
                    let lo = f.max(0.0) as usize;
                    let hi = ((f + 1.0).min(extent as f64 - 1.0)).max(0.0) as usize;
                    (lo, hi, frac)
                };
                let mut out = vec![0.0; c * oh * ow];
                for ch in 0..c {
                    for y in 0..oh {
                        let (y0, y1, fy) = taps(y, h);
                        for x in 0..ow {
                            let (x0, x1, fx) = taps(x, w);
                            let v00 = self.data()[(ch * h + y0) * w + x0];
                            let v01 = self.data()[(ch * h + y0) * w + x1];
                            let v10 = self.data()[(ch * h + y1) * w + x0];
                            let v11 = self.data()[(ch * h + y1) * w + x1];
                            out[(ch * oh + y) * ow + x] = v00 * (1.0 - fy) * (1.0 - fx)
                                + v01 * (1.0 - fy) * fx
                                + v10 * fy * (1.0 - fx)
                                + v11 * fy * fx;
                        }
                    }
                }
                Ok(Tensor::from_op(
                    vec![c, oh, ow],
                    out,
                    vec![self.clone()],
                    Box::new(move |up| {
                        let mut g = vec![0.0; c * h * w];
                        for ch in 0..c {
                            for y in 0..oh {
                                let (y0, y1, fy) = taps(y, h);
                                for x in 0..ow {
                                    let (x0, x1, fx) = taps(x, w);
                                    let u = up[(ch * oh + y) * ow + x];
                                    g[(ch * h + y0) * w + x0] += u * (1.0 - fy) * (1.0 - fx);
                                    g[(ch * h + y0) * w + x1] += u * (1.0 - fy) * fx;
                                    g[(ch * h + y1) * w + x0] += u * fy * (1.0 - fx);
                                    g[(ch * h + y1) * w + x1] += u * fy * fx;
                                }
                            }
                        }
                        vec![g]
                    }),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::grad_check;
    use super::*;

    #[test]
    fn conv_1x1_identity() {
        let x = Tensor::from_vec(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let k = Tensor::from_vec(vec![1, 1, 1, 1], vec![1.0]);
        let y = x.conv2d(&k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_one_hot_box_sum() {
        // 3x3 all-ones kernel over a one-hot 5x5 input, pad 1: the hot pixel
        // spreads into the 3x3 block of outputs whose window covers it.
        let mut input = vec![0.0; 25];
        input[2 * 5 + 2] = 1.0;
        let x = Tensor::from_vec(vec![1, 5, 5], input);
        let k = Tensor::from_vec(vec![1, 1, 3, 3], vec![1.0; 9]);
        let y = x.conv2d(&k, 1, 1).unwrap();
        assert_eq!(y.shape(), &[1, 5, 5]);
        for yy in 0..5 {
            for xx in 0..5 {
                let expected = if (1..=3).contains(&yy) && (1..=3).contains(&xx) {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(y.data()[yy * 5 + xx], expected, "at ({yy},{xx})");
            }
        }
    }

    #[test]
    fn conv_matches_direct_summation() {
        // independent oracle: direct quadruple loop cross-correlation
        let c_in = 2;
        let c_out = 3;
        let (h, w, k, stride, pad) = (5, 4, 3, 1, 1);
        let input: Vec<f64> = (0..c_in * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let kern: Vec<f64> = (0..c_out * c_in * k * k)
            .map(|i| (i as f64 * 0.11).cos())
            .collect();
        let x = Tensor::from_vec(vec![c_in, h, w], input.clone());
        let kt = Tensor::from_vec(vec![c_out, c_in, k, k], kern.clone());
        let y = x.conv2d(&kt, stride, pad).unwrap();

        for co in 0..c_out {
            for oy in 0..h {
                for ox in 0..w {
                    let mut acc = 0.0;
                    for ci in 0..c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = oy as isize + ky as isize - pad as isize;
                                let ix = ox as isize + kx as isize - pad as isize;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                    acc += input[(ci * h + iy as usize) * w + ix as usize]
                                        * kern[((co * c_in + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                    let got = y.data()[(co * h + oy) * w + ox];
                    assert!((got - acc).abs() < 1e-12, "mismatch at ({co},{oy},{ox})");
                }
            }
        }
    }

    #[test]
    fn conv_non_integral_output_errors() {
        let x = Tensor::from_vec(vec![1, 4, 4], vec![0.0; 16]);
        let k = Tensor::from_vec(vec![1, 1, 3, 3], vec![0.0; 9]);
        assert!(x.conv2d(&k, 2, 0).is_err());
    }

    #[test]
    fn conv_kernel_grad_matches_fd() {
        let kern = Tensor::from_vec(
            vec![2, 1, 3, 3],
            (0..18).map(|i| (i as f64 * 0.21).sin() * 0.5).collect(),
        );
        let err = grad_check(
            |k| {
                let x = Tensor::from_vec(
                    vec![1, 4, 4],
                    (0..16).map(|i| (i as f64 * 0.33).cos()).collect(),
                );
                Ok(x.conv2d(k, 1, 1)?.square().sum())
            },
            &kern,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "conv kernel grad err {err}");
    }

    #[test]
    fn conv_input_grad_matches_fd() {
        let x = Tensor::from_vec(
            vec![2, 5, 5],
            (0..50).map(|i| (i as f64 * 0.17).sin()).collect(),
        );
        let err = grad_check(
            |x| {
                let k = Tensor::from_vec(
                    vec![1, 2, 3, 3],
                    (0..18).map(|i| (i as f64 * 0.29).cos() * 0.3).collect(),
                );
                Ok(x.conv2d(&k, 2, 1)?.square().sum())
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "conv input grad err {err}");
    }

    #[test]
    fn avgpool_hand_case_and_grad() {
        let x = Tensor::from_vec(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = x.avgpool2x().unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[2.5]);

        let x = Tensor::from_vec(
            vec![2, 4, 4],
            (0..32).map(|i| (i as f64 * 0.23).sin()).collect(),
        );
        let err = grad_check(|x| Ok(x.avgpool2x()?.square().sum()), &x, 1e-6).unwrap();
        assert!(err < 1e-8, "avgpool grad err {err}");

        // odd extent rejected
        assert!(Tensor::zeros(vec![1, 3, 4]).avgpool2x().is_err());
    }

    #[test]
    fn nearest_upsample_replicates() {
        let x = Tensor::from_vec(vec![1, 1, 1], vec![1.0]);
        let y = x.upsample2x(UpsampleMode::Nearest).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 1.0, 1.0]);

        let x = Tensor::from_vec(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = x.upsample2x(UpsampleMode::Nearest).unwrap();
        assert_eq!(
            y.data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
    }

    #[test]
    fn bilinear_grad_matches_fd() {
        let x = Tensor::from_vec(
            vec![1, 3, 3],
            (0..9).map(|i| (i as f64 * 0.41).sin()).collect(),
        );
        let err = grad_check(
            |x| Ok(x.upsample2x(UpsampleMode::Bilinear)?.square().sum()),
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "bilinear grad err {err}");
    }
}
