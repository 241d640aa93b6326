//! Single-layer LSTM over a fixed-length sequence, with backpropagation
//! through time.
//!
//! Gate rows in the stacked parameter matrices are ordered input, forget,
//! candidate, output.

use serde::{Deserialize, Serialize};

use super::activation::sigmoid;
use super::linalg::{matvec, matvec_t_acc, outer_acc};
use crate::tensor::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmSpec {
    pub input_size: usize,
    pub hidden_size: usize,
    pub seq_len: usize,
}

impl LstmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.hidden_size == 0 || self.seq_len == 0 {
            return Err(TensorError::Config(format!("invalid LSTM spec {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4H × F`
    pub w_input: Tensor,
    /// `4H × H`
    pub w_hidden: Tensor,
    /// `4H`
    pub bias: Tensor,
}

impl LstmParams {
    pub fn zeros(spec: &LstmSpec) -> Self {
        let g = 4 * spec.hidden_size;
        Self {
            w_input: Tensor::zeros([g, spec.input_size]),
            w_hidden: Tensor::zeros([g, spec.hidden_size]),
            bias: Tensor::zeros([g]),
        }
    }
}

/// Hidden and cell state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            hidden: vec![0.0; hidden_size],
            cell: vec![0.0; hidden_size],
        }
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    input: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates, `4H`, same order as the parameter rows.
    gates: Vec<f64>,
    c_tanh: Vec<f64>,
}

/// Per-step activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<StepCache>,
}

/// One cell update; returns the new state and the step's cache.
fn cell_step(params: &LstmParams, h: usize, x: &[f64], state: &LstmState) -> (LstmState, StepCache) {
    let f = x.len();
    let mut z = params.bias.data().to_vec();
    matvec(params.w_input.data(), 4 * h, f, x, 1.0, &mut z);
    matvec(params.w_hidden.data(), 4 * h, h, &state.hidden, 1.0, &mut z);
    let mut gates = z;
    for (j, v) in gates.iter_mut().enumerate() {
        *v = if (2 * h..3 * h).contains(&j) {
            v.tanh()
        } else {
            sigmoid(*v)
        };
    }
    let mut cell = vec![0.0; h];
    let mut hidden = vec![0.0; h];
    let mut c_tanh = vec![0.0; h];
    for k in 0..h {
        let (i, fg, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
        cell[k] = fg * state.cell[k] + i * g;
        c_tanh[k] = cell[k].tanh();
        hidden[k] = o * c_tanh[k];
    }
    let cache = StepCache {
        input: x.to_vec(),
        h_prev: state.hidden.clone(),
        c_prev: state.cell.clone(),
        gates,
        c_tanh,
    };
    (LstmState { hidden, cell }, cache)
}

/// Run the recurrence over a `T × F` input, starting from `initial` (zero
/// state when `None`). Returns the final state, whose `hidden` is the
/// sequence output.
pub fn lstm_sequence(
    inputs: &Tensor,
    spec: &LstmSpec,
    params: &LstmParams,
    initial: Option<&LstmState>,
) -> Result<(LstmState, LstmCache)> {
    spec.validate()?;
    if inputs.rank() != 2 || inputs.shape()[1] != spec.input_size {
        return Err(TensorError::Dimension(format!(
            "LSTM input {:?}, expected [T, {}]",
            inputs.shape(),
            spec.input_size
        )));
    }
    if inputs.shape()[0] != spec.seq_len {
        return Err(TensorError::Dimension(format!(
            "sequence length {} does not match LSTM length {}",
            inputs.shape()[0],
            spec.seq_len
        )));
    }
    let h = spec.hidden_size;
    let mut state = initial.cloned().unwrap_or_else(|| LstmState::zeros(h));
    if state.hidden.len() != h || state.cell.len() != h {
        return Err(TensorError::Dimension("initial LSTM state has wrong width".into()));
    }
    let mut steps = Vec::with_capacity(spec.seq_len);
    for x in inputs.data().chunks(spec.input_size) {
        let (next, cache) = cell_step(params, h, x, &state);
        steps.push(cache);
        state = next;
    }
    Ok((state, LstmCache { steps }))
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    /// `T × F`
    pub inputs: Tensor,
    pub params: LstmParams,
    /// Gradient with respect to the initial state.
    pub initial: LstmState,
}

/// Backpropagation through time from a gradient on the final hidden state.
pub fn lstm_backward(params: &LstmParams, cache: &LstmCache, grad_hidden: &[f64]) -> Result<LstmGrads> {
    let g4 = params.bias.len();
    let h = g4 / 4;
    let f = params.w_input.shape()[1];
    if grad_hidden.len() != h {
        return Err(TensorError::Dimension("LSTM grad width mismatch".into()));
    }
    let t_len = cache.steps.len();
    let mut grads = LstmParams {
        w_input: Tensor::zeros([g4, f]),
        w_hidden: Tensor::zeros([g4, h]),
        bias: Tensor::zeros([g4]),
    };
    let mut d_inputs = vec![0.0; t_len * f];
    let mut dh = grad_hidden.to_vec();
    let mut dc = vec![0.0; h];
    let mut dz = vec![0.0; g4];
    for (t, step) in cache.steps.iter().enumerate().rev() {
        let gates = &step.gates;
        for k in 0..h {
            let (i, fg, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let ct = step.c_tanh[k];
            let d_o = dh[k] * ct;
            dc[k] += dh[k] * o * (1.0 - ct * ct);
            let d_i = dc[k] * g;
            let d_g = dc[k] * i;
            let d_f = dc[k] * step.c_prev[k];
            dz[k] = d_i * i * (1.0 - i);
            dz[h + k] = d_f * fg * (1.0 - fg);
            dz[2 * h + k] = d_g * (1.0 - g * g);
            dz[3 * h + k] = d_o * o * (1.0 - o);
            dc[k] *= fg;
        }
        outer_acc(grads.w_input.data_mut(), &dz, &step.input);
        outer_acc(grads.w_hidden.data_mut(), &dz, &step.h_prev);
        for (b, d) in grads.bias.data_mut().iter_mut().zip(&dz) {
            *b += d;
        }
        matvec_t_acc(params.w_input.data(), g4, f, &dz, &mut d_inputs[t * f..(t + 1) * f]);
        let mut dh_prev = vec![0.0; h];
        matvec_t_acc(params.w_hidden.data(), g4, h, &dz, &mut dh_prev);
        dh = dh_prev;
    }
    Ok(LstmGrads {
        inputs: Tensor::new([t_len, f], d_inputs)?,
        params: grads,
        initial: LstmState { hidden: dh, cell: dc },
    })
}
