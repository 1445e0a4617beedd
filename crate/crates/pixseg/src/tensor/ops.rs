//! Differentiable tensor operations.
//!
//! Binary elementwise ops accept equal shapes or a scalar on either side;
//! anything else is a loud shape error. Subgradients at kinks (relu, the
//! hinge it induces) are 0.

use super::Tensor;
use crate::error::{Error, Result};

enum Broadcast {
    Same,
    LeftScalar,
    RightScalar,
}

fn broadcast(a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        Ok(Broadcast::Same)
    } else if a.is_scalar() {
        Ok(Broadcast::LeftScalar)
    } else if b.is_scalar() {
        Ok(Broadcast::RightScalar)
    } else {
        Err(Error::ShapeMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        })
    }
}

fn binary_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<(Vec<usize>, Vec<f64>)> {
    Ok(match broadcast(a, b)? {
        Broadcast::Same => (
            a.shape().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
        ),
        Broadcast::LeftScalar => {
            let x = a.data()[0];
            (b.shape().to_vec(), b.data().iter().map(|&y| f(x, y)).collect())
        }
        Broadcast::RightScalar => {
            let y = b.data()[0];
            (a.shape().to_vec(), a.data().iter().map(|&x| f(x, y)).collect())
        }
    })
}

/// Reduce an output-shaped gradient to the operand's shape (sum if the
/// operand was a broadcast scalar).
fn reduce_to(grad: Vec<f64>, operand_len: usize) -> Vec<f64> {
    if grad.len() == operand_len {
        grad
    } else {
        debug_assert_eq!(operand_len, 1);
        vec![grad.iter().sum()]
    }
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let (shape, data) = binary_map(self, other, |x, y| x + y)?;
        let (la, lb) = (self.numel(), other.numel());
        Ok(Tensor::from_op(
            shape,
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |up| {
                vec![reduce_to(up.to_vec(), la), reduce_to(up.to_vec(), lb)]
            }),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        let (shape, data) = binary_map(self, other, |x, y| x - y)?;
        let (la, lb) = (self.numel(), other.numel());
        Ok(Tensor::from_op(
            shape,
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |up| {
                vec![
                    reduce_to(up.to_vec(), la),
                    reduce_to(up.iter().map(|g| -g).collect(), lb),
                ]
            }),
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        let (shape, data) = binary_map(self, other, |x, y| x * y)?;
        let a = self.clone();
        let b = other.clone();
        Ok(Tensor::from_op(
            shape,
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |up| {
                let ga: Vec<f64> = if b.numel() == up.len() {
                    up.iter().zip(b.data()).map(|(g, y)| g * y).collect()
                } else {
                    let y = b.data()[0];
                    up.iter().map(|g| g * y).collect()
                };
                let gb: Vec<f64> = if a.numel() == up.len() {
                    up.iter().zip(a.data()).map(|(g, x)| g * x).collect()
                } else {
                    let x = a.data()[0];
                    up.iter().map(|g| g * x).collect()
                };
                vec![reduce_to(ga, a.numel()), reduce_to(gb, b.numel())]
            }),
        ))
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        let (shape, data) = binary_map(self, other, |x, y| x / y)?;
        let a = self.clone();
        let b = other.clone();
        Ok(Tensor::from_op(
            shape,
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |up| {
                let bval = |i: usize| if b.numel() == 1 { b.data()[0] } else { b.data()[i] };
                let aval = |i: usize| if a.numel() == 1 { a.data()[0] } else { a.data()[i] };
                let ga: Vec<f64> = (0..up.len()).map(|i| up[i] / bval(i)).collect();
                let gb: Vec<f64> = (0..up.len())
                    .map(|i| -up[i] * aval(i) / (bval(i) * bval(i)))
                    .collect();
                vec![reduce_to(ga, a.numel()), reduce_to(gb, b.numel())]
            }),
        ))
    }

    pub fn relu(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| x.max(0.0)).collect();
        let input = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |up| {
                vec![up
                    .iter()
                    .zip(input.data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect()]
            }),
        )
    }

    pub fn sigmoid(&self) -> Tensor {
        let data: Vec<f64> = self
            .data()
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let out = data.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |up| {
                vec![up
                    .iter()
                    .zip(&out)
                    .map(|(g, &s)| g * s * (1.0 - s))
                    .collect()]
            }),
        )
    }

    pub fn square(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| x * x).collect();
        let input = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |up| {
                vec![up
                    .iter()
                    .zip(input.data())
                    .map(|(g, &x)| g * 2.0 * x)
                    .collect()]
            }),
        )
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        if let Some(&bad) = self.data().iter().find(|&&x| x < 0.0) {
            return Err(Error::NegativeSqrt(bad));
        }
        let data: Vec<f64> = self.data().iter().map(|&x| x.sqrt()).collect();
        let out = data.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |up| {
                vec![up
                    .iter()
                    .zip(&out)
                    .map(|(g, &s)| if s > 0.0 { g / (2.0 * s) } else { 0.0 })
                    .collect()]
            }),
        ))
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&self, factor: f64) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| x * factor).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |up| vec![up.iter().map(|g| g * factor).collect()]),
        )
    }

    /// Add a constant to every element.
    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| x + c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |up| vec![up.to_vec()]),
        )
    }

    /// Elementwise x^p for a constant exponent p >= 0.
    pub fn powf(&self, p: f64) -> Result<Tensor> {
        if p < 0.0 {
            return Err(Error::invalid(format!("powf exponent must be >= 0, got {p}")));
        }
        let data: Vec<f64> = self.data().iter().map(|&x| x.powf(p)).collect();
        let input = self.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |up| {
                vec![up
                    .iter()
                    .zip(input.data())
                    .map(|(g, &x)| {
                        if p == 0.0 {
                            0.0
                        } else {
                            g * p * x.powf(p - 1.0)
                        }
                    })
                    .collect()]
            }),
        ))
    }

    /// Natural log with the argument clamped below at `floor`. Keeps losses
    /// finite on saturated probabilities; the gradient is zero in the
    /// clamped region.
    pub fn ln_clamped(&self, floor: f64) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| x.max(floor).ln()).collect();
        let input = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |up| {
                vec![up
                    .iter()
                    .zip(input.data())
                    .map(|(g, &x)| if x > floor { g / x } else { 0.0 })
                    .collect()]
            }),
        )
    }

    pub fn sum(&self) -> Tensor {
        let total: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(
            vec![],
            vec![total],
            vec![self.clone()],
            Box::new(move |up| vec![vec![up[0]; n]]),
        )
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        let total: f64 = self.data().iter().sum();
        Tensor::from_op(
            vec![],
            vec![total / n as f64],
            vec![self.clone()],
            Box::new(move |up| vec![vec![up[0] / n as f64; n]]),
        )
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce_axis(axis, false)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce_axis(axis, true)
    }

    fn reduce_axis(&self, axis: usize, mean: bool) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::AxisOutOfRange { axis, shape });
        }
        let extent = shape[axis];
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let scale = if mean { 1.0 / extent as f64 } else { 1.0 };

        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..extent {
                let base = (o * extent + a) * inner;
                let obase = o * inner;
                for i in 0..inner {
                    out[obase + i] += self.data()[base + i];
                }
            }
        }
        if mean {
            for v in &mut out {
                *v *= scale;
            }
        }
        let in_len = self.numel();
        Ok(Tensor::from_op(
            out_shape,
            out,
            vec![self.clone()],
            Box::new(move |up| {
                let mut g = vec![0.0; in_len];
                for o in 0..outer {
                    for a in 0..extent {
                        let base = (o * extent + a) * inner;
                        let obase = o * inner;
                        for i in 0..inner {
                            g[base + i] = up[obase + i] * scale;
                        }
                    }
                }
                vec![g]
            }),
        ))
    }

    /// Matrix product of [M,K] x [K,N]. Gradients: dA = G Bᵀ, dB = Aᵀ G.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = super::conv::mm(self.data(), other.data(), m, k, n);
        let a = self.clone();
        let b = other.clone();
        Ok(Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |up| {
                let ga = super::conv::mm_a_bt(up, b.data(), m, n, k);
                let gb = super::conv::mm_at_b(a.data(), up, m, k, n);
                vec![ga, gb]
            }),
        ))
    }

    /// Numerically stable per-pixel softmax over the channel axis of [C,H,W].
    pub fn softmax_channel(&self) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::invalid(format!(
                "softmax_channel expects [C,H,W], got {shape:?}"
            )));
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let hw = h * w;
        let mut out = vec![0.0; c * hw];
        for p in 0..hw {
            let mut maxv = f64::NEG_INFINITY;
            for ch in 0..c {
                maxv = maxv.max(self.data()[ch * hw + p]);
            }
            let mut denom = 0.0;
            for ch in 0..c {
                let e = (self.data()[ch * hw + p] - maxv).exp();
                out[ch * hw + p] = e;
                denom += e;
            }
            for ch in 0..c {
                out[ch * hw + p] /= denom;
            }
        }
        let probs = out.clone();
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            Box::new(move |up| {
                let mut g = vec![0.0; c * hw];
                for p in 0..hw {
                    let mut dot = 0.0;
                    for ch in 0..c {
                        dot += probs[ch * hw + p] * up[ch * hw + p];
                    }
                    for ch in 0..c {
                        g[ch * hw + p] = probs[ch * hw + p] * (up[ch * hw + p] - dot);
                    }
                }
                vec![g]
            }),
        ))
    }

    /// Extract channel `c` of a [C,H,W] tensor as [H,W].
    pub fn channel(&self, c: usize) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if shape.len() != 3 || c >= shape[0] {
            return Err(Error::invalid(format!(
                "channel {c} out of range for shape {shape:?}"
            )));
        }
        let (channels, h, w) = (shape[0], shape[1], shape[2]);
        let hw = h * w;
        let data = self.data()[c * hw..(c + 1) * hw].to_vec();
        Ok(Tensor::from_op(
            vec![h, w],
            data,
            vec![self.clone()],
            Box::new(move |up| {
                let mut g = vec![0.0; channels * hw];
                g[c * hw..(c + 1) * hw].copy_from_slice(up);
                vec![g]
            }),
        ))
    }

    /// Concatenate two [C,H,W] tensors along the channel axis.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[1..] != sb[1..] {
            return Err(Error::ShapeMismatch {
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (ca, cb, h, w) = (sa[0], sb[0], sa[1], sa[2]);
        let mut data = Vec::with_capacity((ca + cb) * h * w);
        data.extend_from_slice(self.data());
        data.extend_from_slice(other.data());
        let (na, nb) = (self.numel(), other.numel());
        Ok(Tensor::from_op(
            vec![ca + cb, h, w],
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |up| vec![up[..na].to_vec(), up[na..na + nb].to_vec()]),
        ))
    }

    /// Add a per-channel bias [C] to a [C,H,W] feature map.
    pub fn add_channel_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if shape.len() != 3 || bias.shape() != [shape[0]] {
            return Err(Error::ShapeMismatch {
                left: shape,
                right: bias.shape().to_vec(),
            });
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let hw = h * w;
        let mut data = self.data().to_vec();
        for ch in 0..c {
            let b = bias.data()[ch];
            for v in &mut data[ch * hw..(ch + 1) * hw] {
                *v += b;
            }
        }
        Ok(Tensor::from_op(
            shape,
            data,
            vec![self.clone(), bias.clone()],
            Box::new(move |up| {
                let gb = (0..c)
                    .map(|ch| up[ch * hw..(ch + 1) * hw].iter().sum())
                    .collect();
                vec![up.to_vec(), gb]
            }),
        ))
    }

    /// View the same data under a new shape with equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::ShapeMismatch {
                left: self.shape().to_vec(),
                right: shape,
            });
        }
        Ok(Tensor::from_op(
            shape,
            self.data().to_vec(),
            vec![self.clone()],
            Box::new(move |up| vec![up.to_vec()]),
        ))
    }

    /// Transpose of a [M,N] matrix.
    pub fn transpose2d(&self) -> Result<Tensor> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(Error::invalid(format!(
                "transpose2d expects a matrix, got {shape:?}"
            )));
        }
        let (m, n) = (shape[0], shape[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data()[i * n + j];
            }
        }
        Ok(Tensor::from_op(
            vec![n, m],
            data,
            vec![self.clone()],
            Box::new(move |up| {
                let mut g = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        g[i * n + j] = up[j * m + i];
                    }
                }
                vec![g]
            }),
        ))
    }

    /// Gather pixel embeddings from a [D,H,W] map at the given (row, col)
    /// coordinates, producing a [K,D] matrix. Backward scatters gradients
    /// back into the map.
    pub fn gather_pixels(&self, coords: &[(usize, usize)]) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::invalid(format!(
                "gather_pixels expects [D,H,W], got {shape:?}"
            )));
        }
        let (d, h, w) = (shape[0], shape[1], shape[2]);
        for &(r, c) in coords {
            if r >= h || c >= w {
                return Err(Error::invalid(format!(
                    "pixel ({r},{c}) outside {h}x{w} map"
                )));
            }
        }
        let hw = h * w;
        let k = coords.len();
        let mut out = vec![0.0; k * d];
        for (i, &(r, c)) in coords.iter().enumerate() {
            let p = r * w + c;
            for ch in 0..d {
                out[i * d + ch] = self.data()[ch * hw + p];
            }
        }
        let coords = coords.to_vec();
        Ok(Tensor::from_op(
            vec![k, d],
            out,
            vec![self.clone()],
            Box::new(move |up| {
                let mut g = vec![0.0; d * hw];
                for (i, &(r, c)) in coords.iter().enumerate() {
                    let p = r * w + c;
                    for ch in 0..d {
                        g[ch * hw + p] += up[i * d + ch];
                    }
                }
                vec![g]
            }),
        ))
    }
}
