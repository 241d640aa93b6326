use serde::{Deserialize, Serialize};

use super::xcorr::out_extent;
use crate::tensor::{Result, Tensor, TensorError};

/// Unpadded max-pooling window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub window_h: usize,
    pub window_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
}

impl PoolSpec {
    pub fn square(window: usize, stride: usize) -> Self {
        Self {
            window_h: window,
            window_w: window,
            stride_h: stride,
            stride_w: stride,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.window_h > h || self.window_w > w {
            return Err(TensorError::Dimension(format!(
                "pool window {}x{} exceeds input {h}x{w}",
                self.window_h, self.window_w
            )));
        }
        Ok((
            out_extent(h, self.window_h, self.stride_h, 0)?,
            out_extent(w, self.window_w, self.stride_w, 0)?,
        ))
    }
}

/// Pooled output plus, per output cell, the flat index of the winning input
/// element within its channel plane.
#[derive(Debug, Clone)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Per-channel windowed maximum. Ties resolve to the first element in
/// row-major scan order.
pub fn maxpool2d(input: &Tensor, spec: &PoolSpec) -> Result<Pooled> {
    if input.rank() != 3 {
        return Err(TensorError::Dimension(format!(
            "maxpool input must be CHW, got {:?}",
            input.shape()
        )));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = spec.output_hw(h, w)?;
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = input.channel(ch);
        for ox in 0..oh {
            for oy in 0..ow {
                let (r0, c0) = (ox * spec.stride_h, oy * spec.stride_w);
                let mut best = r0 * w + c0;
                for r in r0..r0 + spec.window_h {
                    for cc in c0..c0 + spec.window_w {
                        if plane[r * w + cc] > plane[best] {
                            best = r * w + cc;
                        }
                    }
                }
                out.push(plane[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new([c, oh, ow], out)?,
        argmax,
    })
}

/// Route each output gradient to its argmax input cell.
pub fn maxpool2d_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != argmax.len() || input_shape.len() != 3 {
        return Err(TensorError::Dimension("maxpool backward shape mismatch".into()));
    }
    let c = input_shape[0];
    let plane = input_shape[1] * input_shape[2];
    let per_channel = argmax.len() / c;
    let mut grad_in = Tensor::zeros(input_shape.to_vec());
    let gi = grad_in.data_mut();
    for (i, (&idx, &g)) in argmax.iter().zip(grad_out.data()).enumerate() {
        gi[(i / per_channel) * plane + idx] += g;
    }
    Ok(grad_in)
}
