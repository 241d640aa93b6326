//! Standard and grouped 2-D convolution over CHW tensors.
//!
//! Each group's input block is unrolled (im2col) and multiplied by that
//! group's filter bank; group outputs land in consecutive output channel
//! blocks, so the result is the channel concatenation of the group outputs
//! in group order.

use serde::{Deserialize, Serialize};

use super::linalg::{gemm, Op};
use super::xcorr::out_extent;
use crate::tensor::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    /// Symmetric zero padding on both spatial axes.
    pub padding: usize,
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    /// Square kernel, stride 1, "same" padding, with bias.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize, groups: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride: 1,
            padding: kernel / 2,
            groups,
            bias: true,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(TensorError::Config("groups must be at least 1".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(TensorError::Config("channel counts must be positive".into()));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 {
            return Err(TensorError::Config("kernel extents and stride must be positive".into()));
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return Err(TensorError::Config(format!(
                "channels {}→{} not divisible by {} groups",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        Ok(())
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_per_group(), self.kernel_h, self.kernel_w]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((
            out_extent(h, self.kernel_h, self.stride, self.padding)?,
            out_extent(w, self.kernel_w, self.stride, self.padding)?,
        ))
    }
}

/// Conventional convolution (`groups == 1`).
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    if spec.groups != 1 {
        return Err(TensorError::Config(format!(
            "conv2d expects groups = 1, got {}",
            spec.groups
        )));
    }
    conv_forward(input, weights, Some(bias), spec)
}

/// Grouped convolution; `groups == 1` degenerates to [`conv2d`].
pub fn grouped_conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
) -> Result<Tensor> {
    conv_forward(input, weights, Some(bias), spec)
}

fn check_operands(
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&Tensor>,
    spec: &ConvSpec,
) -> Result<(usize, usize, usize, usize)> {
    spec.validate()?;
    if input.rank() != 3 {
        return Err(TensorError::Dimension(format!(
            "conv input must be CHW, got {:?}",
            input.shape()
        )));
    }
    if input.shape()[0] != spec.in_channels {
        return Err(TensorError::Dimension(format!(
            "conv input has {} channels, spec expects {}",
            input.shape()[0],
            spec.in_channels
        )));
    }
    if weights.shape() != spec.weight_shape() {
        return Err(TensorError::Dimension(format!(
            "conv weights {:?}, spec expects {:?}",
            weights.shape(),
            spec.weight_shape()
        )));
    }
    if let Some(b) = bias {
        if b.len() != spec.out_channels {
            return Err(TensorError::Dimension(format!(
                "conv bias has {} entries, spec expects {}",
                b.len(),
                spec.out_channels
            )));
        }
    }
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let (oh, ow) = spec.output_hw(h, w)?;
    Ok((h, w, oh, ow))
}

/// Unroll channels `c0 .. c0 + count` of a CHW plane stack into a
/// `(count·kh·kw) × (oh·ow)` matrix.
#[allow(clippy::too_many_arguments)]
fn im2col(
    src: &[f64],
    h: usize,
    w: usize,
    c0: usize,
    count: usize,
    spec: &ConvSpec,
    oh: usize,
    ow: usize,
    cols: &mut [f64],
) {
    let (kh, kw, s, pad) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding as isize);
    let n = oh * ow;
    for c in 0..count {
        let plane = &src[(c0 + c) * h * w..(c0 + c + 1) * h * w];
        for m in 0..kh {
            for k in 0..kw {
                let row = &mut cols[((c * kh + m) * kw + k) * n..][..n];
                for ox in 0..oh {
                    let r = (ox * s + m) as isize - pad;
                    let dst = &mut row[ox * ow..(ox + 1) * ow];
                    if r < 0 || r >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[r as usize * w..(r as usize + 1) * w];
                    for (oy, d) in dst.iter_mut().enumerate() {
                        let cc = (oy * s + k) as isize - pad;
                        *d = if cc < 0 || cc >= w as isize {
                            0.0
                        } else {
                            src_row[cc as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Inverse scatter of [`im2col`], accumulating into `dst`.
#[allow(clippy::too_many_arguments)]
fn col2im_acc(
    cols: &[f64],
    h: usize,
    w: usize,
    c0: usize,
    count: usize,
    spec: &ConvSpec,
    oh: usize,
    ow: usize,
    dst: &mut [f64],
) {
    let (kh, kw, s, pad) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding as isize);
    let n = oh * ow;
    for c in 0..count {
        let plane = &mut dst[(c0 + c) * h * w..(c0 + c + 1) * h * w];
        for m in 0..kh {
            for k in 0..kw {
                let row = &cols[((c * kh + m) * kw + k) * n..][..n];
                for ox in 0..oh {
                    let r = (ox * s + m) as isize - pad;
                    if r < 0 || r >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[r as usize * w..(r as usize + 1) * w];
                    for oy in 0..ow {
                        let cc = (oy * s + k) as isize - pad;
                        if cc >= 0 && cc < w as isize {
                            dst_row[cc as usize] += row[ox * ow + oy];
                        }
                    }
                }
            }
        }
    }
}

/// Forward pass shared by the standard and grouped paths. `bias` may be
/// omitted for bias-free layers.
pub fn conv_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&Tensor>,
    spec: &ConvSpec,
) -> Result<Tensor> {
    let (h, w, oh, ow) = check_operands(input, weights, bias, spec)?;
    let (cin_g, cout_g) = (spec.in_per_group(), spec.out_per_group());
    let k = cin_g * spec.kernel_h * spec.kernel_w;
    let n = oh * ow;
    let mut out = vec![0.0; spec.out_channels * n];
    if let Some(b) = bias {
        for (z, chunk) in out.chunks_mut(n).enumerate() {
            chunk.fill(b.data()[z]);
        }
    }
    let mut cols = vec![0.0; k * n];
    for g in 0..spec.groups {
        im2col(input.data(), h, w, g * cin_g, cin_g, spec, oh, ow, &mut cols);
        let wg = &weights.data()[g * cout_g * k..(g + 1) * cout_g * k];
        let og = &mut out[g * cout_g * n..(g + 1) * cout_g * n];
        gemm(cout_g, k, n, wg, Op::N, &cols, Op::N, 1.0, og);
    }
    Tensor::new([spec.out_channels, oh, ow], out)
}

/// Gradients of a convolution with respect to its input, weights and bias.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Option<Tensor>,
}

pub fn conv_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
    spec: &ConvSpec,
) -> Result<ConvGrads> {
    let (h, w, oh, ow) = check_operands(input, weights, None, spec)?;
    if grad_out.shape() != [spec.out_channels, oh, ow] {
        return Err(TensorError::Dimension(format!(
            "conv grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [spec.out_channels, oh, ow]
        )));
    }
    let (cin_g, cout_g) = (spec.in_per_group(), spec.out_per_group());
    let k = cin_g * spec.kernel_h * spec.kernel_w;
    let n = oh * ow;
    let go = grad_out.data();

    let mut d_input = vec![0.0; input.len()];
    let mut d_weights = vec![0.0; weights.len()];
    let mut cols = vec![0.0; k * n];
    let mut d_cols = vec![0.0; k * n];
    for g in 0..spec.groups {
        im2col(input.data(), h, w, g * cin_g, cin_g, spec, oh, ow, &mut cols);
        let gog = &go[g * cout_g * n..(g + 1) * cout_g * n];
        let dwg = &mut d_weights[g * cout_g * k..(g + 1) * cout_g * k];
        gemm(cout_g, n, k, gog, Op::N, &cols, Op::T, 0.0, dwg);
        let wg = &weights.data()[g * cout_g * k..(g + 1) * cout_g * k];
        gemm(k, cout_g, n, wg, Op::T, gog, Op::N, 0.0, &mut d_cols);
        col2im_acc(&d_cols, h, w, g * cin_g, cin_g, spec, oh, ow, &mut d_input);
    }
    let d_bias = spec
        .bias
        .then(|| Tensor::vector(go.chunks(n).map(|c| c.iter().sum()).collect()));
    Ok(ConvGrads {
        input: Tensor::new(input.shape(), d_input)?,
        weights: Tensor::new(weights.shape(), d_weights)?,
        bias: d_bias,
    })
}

/// Embed grouped weights `Z × P/G × kh × kw` into block-diagonal standard
/// weights `Z × P × kh × kw` (cross-group taps zero).
pub fn block_diagonal_weights(weights: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    spec.validate()?;
    if weights.shape() != spec.weight_shape() {
        return Err(TensorError::Dimension("weights do not match spec".into()));
    }
    let (cin_g, cout_g) = (spec.in_per_group(), spec.out_per_group());
    let taps = spec.kernel_h * spec.kernel_w;
    let mut dense = Tensor::zeros([spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w]);
    let src = weights.data();
    let dst = dense.data_mut();
    for z in 0..spec.out_channels {
        let g = z / cout_g;
        for p in 0..cin_g {
            let from = (z * cin_g + p) * taps;
            let to = (z * spec.in_channels + g * cin_g + p) * taps;
            dst[to..to + taps].copy_from_slice(&src[from..from + taps]);
        }
    }
    Ok(dense)
}
