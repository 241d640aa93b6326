//! Analytic parameter and FLOP counts. A multiply–add counts as 2 FLOPs.

use super::conv::ConvSpec;
use super::lstm::LstmSpec;

/// Filter weights only, `Z · (P/G) · kh · kw`.
pub fn conv_weight_params(spec: &ConvSpec) -> u64 {
    (spec.out_channels * spec.in_per_group() * spec.kernel_h * spec.kernel_w) as u64
}

pub fn conv_params(spec: &ConvSpec) -> u64 {
    conv_weight_params(spec) + if spec.bias { spec.out_channels as u64 } else { 0 }
}

pub fn conv_flops(spec: &ConvSpec, out_h: usize, out_w: usize) -> u64 {
    2 * conv_weight_params(spec) * (out_h * out_w) as u64
}

pub fn dense_params(inputs: usize, outputs: usize) -> u64 {
    (inputs * outputs + outputs) as u64
}

pub fn dense_flops(inputs: usize, outputs: usize) -> u64 {
    2 * (inputs * outputs) as u64
}

pub fn lstm_params(spec: &LstmSpec) -> u64 {
    let (f, h) = (spec.input_size as u64, spec.hidden_size as u64);
    4 * (h * (f + h) + h)
}

/// Input and recurrent matrix–vector products over the whole sequence.
pub fn lstm_flops(spec: &LstmSpec) -> u64 {
    let (f, h) = (spec.input_size as u64, spec.hidden_size as u64);
    spec.seq_len as u64 * 2 * 4 * h * (f + h)
}
