//! Layer stacks with forward caching and exact reverse-mode gradients.
//!
//! A network is a per-frame feature stack, an optional LSTM that runs over
//! the per-frame features of a fixed-length sequence, a head stack, and an
//! output activation. Parameters are stored flat in declaration order.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;
use crate::kernels::accounting;
use crate::kernels::activation::{relu, relu_backward, sigmoid, softmax, softmax_backward};
use crate::kernels::conv::{conv_backward, conv_forward, ConvSpec};
use crate::kernels::dense::{dense, dense_backward};
use crate::kernels::lstm::{lstm_backward, lstm_sequence, LstmCache, LstmParams, LstmSpec, LstmState};
use crate::kernels::pool::{maxpool2d, maxpool2d_backward, PoolSpec};
use crate::tensor::Tensor;

type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv(ConvSpec),
    MaxPool(PoolSpec),
    Relu,
    Dense { inputs: usize, outputs: usize },
}

impl LayerSpec {
    fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            LayerSpec::Conv(c) => {
                let mut v = vec![c.weight_shape().to_vec()];
                if c.bias {
                    v.push(vec![c.out_channels]);
                }
                v
            }
            LayerSpec::Dense { inputs, outputs } => vec![vec![*outputs, *inputs], vec![*outputs]],
            LayerSpec::MaxPool(_) | LayerSpec::Relu => Vec::new(),
        }
    }
}

/// Activation applied to the final layer's outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    Identity,
    Softmax,
    /// `[tanh(l0), sigmoid(l1)]`: steering in [−1, 1], throttle in [0, 1].
    SteerThrottle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    /// Per-frame input `[C, H, W]`.
    pub input: [usize; 3],
    pub frame_layers: Vec<LayerSpec>,
    pub recurrent: Option<LstmSpec>,
    pub head_layers: Vec<LayerSpec>,
    pub output: OutputHead,
}

/// Shape and cost of one layer, from static shape inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSummary {
    pub label: String,
    pub output_shape: Vec<usize>,
    pub params: u64,
    pub flops: u64,
}

impl NetworkSpec {
    /// Number of frames one forward pass consumes.
    pub fn seq_len(&self) -> usize {
        self.recurrent.map_or(1, |r| r.seq_len)
    }

    /// Infer every layer's output shape, checking compatibility.
    pub fn summarize(&self) -> Result<Vec<LayerSummary>> {
        let mut rows = Vec::new();
        let mut shape = self.input.to_vec();
        let frames = self.seq_len() as u64;
        for (i, layer) in self.frame_layers.iter().enumerate() {
            let mut row = infer_layer(layer, &shape).map_err(|e| e.at(format!("frame layer {i}")))?;
            row.flops *= frames;
            shape = row.output_shape.clone();
            rows.push(row);
        }
        let mut features = shape.iter().product::<usize>();
        if let Some(lstm) = &self.recurrent {
            lstm.validate()?;
            if lstm.input_size != features {
                return Err(NnError::Config(format!(
                    "flattened frame features ({features} = {shape:?}) do not match LSTM input size {}",
                    lstm.input_size
                )));
            }
            rows.push(LayerSummary {
                label: format!("lstm {}→{} x{}", lstm.input_size, lstm.hidden_size, lstm.seq_len),
                output_shape: vec![lstm.hidden_size],
                params: accounting::lstm_params(lstm),
                flops: accounting::lstm_flops(lstm),
            });
            features = lstm.hidden_size;
        }
        let mut shape = vec![features];
        for (i, layer) in self.head_layers.iter().enumerate() {
            let row = infer_layer(layer, &shape).map_err(|e| e.at(format!("head layer {i}")))?;
            shape = row.output_shape.clone();
            rows.push(row);
        }
        let out = shape.iter().product::<usize>();
        if self.output == OutputHead::SteerThrottle && out != 2 {
            return Err(NnError::Config(format!("steer/throttle head needs 2 outputs, got {out}")));
        }
        Ok(rows)
    }

    pub fn param_count(&self) -> Result<u64> {
        Ok(self.summarize()?.iter().map(|r| r.params).sum())
    }

    pub fn flop_count(&self) -> Result<u64> {
        Ok(self.summarize()?.iter().map(|r| r.flops).sum())
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes: Vec<Vec<usize>> = self.frame_layers.iter().flat_map(LayerSpec::param_shapes).collect();
        if let Some(l) = &self.recurrent {
            let g = 4 * l.hidden_size;
            shapes.push(vec![g, l.input_size]);
            shapes.push(vec![g, l.hidden_size]);
            shapes.push(vec![g]);
        }
        shapes.extend(self.head_layers.iter().flat_map(LayerSpec::param_shapes));
        shapes
    }
}

fn infer_layer(layer: &LayerSpec, shape: &[usize]) -> Result<LayerSummary> {
    match layer {
        LayerSpec::Conv(c) => {
            c.validate()?;
            if shape.len() != 3 || shape[0] != c.in_channels {
                return Err(NnError::Config(format!("conv expects {} channels, input is {shape:?}", c.in_channels)));
            }
            let (oh, ow) = c.output_hw(shape[1], shape[2])?;
            let label = if c.groups > 1 {
                format!("grouped conv {}→{} {}x{} G={}", c.in_channels, c.out_channels, c.kernel_h, c.kernel_w, c.groups)
            } else {
                format!("conv {}→{} {}x{}", c.in_channels, c.out_channels, c.kernel_h, c.kernel_w)
            };
            Ok(LayerSummary {
                label,
                output_shape: vec![c.out_channels, oh, ow],
                params: accounting::conv_params(c),
                flops: accounting::conv_flops(c, oh, ow),
            })
        }
        LayerSpec::MaxPool(p) => {
            if shape.len() != 3 {
                return Err(NnError::Config(format!("maxpool expects CHW, input is {shape:?}")));
            }
            let (oh, ow) = p.output_hw(shape[1], shape[2])?;
            Ok(LayerSummary {
                label: format!("maxpool {}x{}/{}x{}", p.window_h, p.window_w, p.stride_h, p.stride_w),
                output_shape: vec![shape[0], oh, ow],
                params: 0,
                flops: 0,
            })
        }
        LayerSpec::Relu => Ok(LayerSummary {
            label: "relu".into(),
            output_shape: shape.to_vec(),
            params: 0,
            flops: 0,
        }),
        LayerSpec::Dense { inputs, outputs } => {
            let flat = shape.iter().product::<usize>();
            if flat != *inputs {
                return Err(NnError::Config(format!("dense expects {inputs} inputs, got {flat} ({shape:?})")));
            }
            Ok(LayerSummary {
                label: format!("dense {inputs}→{outputs}"),
                output_shape: vec![*outputs],
                params: accounting::dense_params(*inputs, *outputs),
                flops: accounting::dense_flops(*inputs, *outputs),
            })
        }
    }
}

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<Tensor>,
    id: u64,
    generation: u64,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            params: self.params.clone(),
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        }
    }
}

/// Per-parameter gradient store, same shapes and order as the network's
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            tensors: net.params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_scaled(b, scale);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sum_sq).sum::<f64>().sqrt()
    }

    /// Rescale so the global L2 norm is at most `max_norm`; returns the
    /// norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            self.tensors.iter_mut().for_each(|t| t.scale(k));
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| !t.has_non_finite())
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    Conv { input: Tensor },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Relu { input: Tensor },
    Dense { input: Tensor },
}

/// Activations retained by [`Network::forward`] for one backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    network_id: u64,
    generation: u64,
    frames: Vec<(Vec<LayerCache>, Vec<usize>)>,
    lstm: Option<LstmCache>,
    head: Vec<LayerCache>,
    logits: Tensor,
    output: Tensor,
}

impl ForwardCache {
    pub fn logits(&self) -> &Tensor {
        &self.logits
    }

    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

/// Where the loss gradient entering [`Network::backward`] is taken.
#[derive(Debug, Clone)]
pub enum OutputGrad {
    /// With respect to the pre-activation logits (e.g. fused softmax + CE).
    Logits(Tensor),
    /// With respect to the activated outputs.
    Output(Tensor),
}

/// Result of a forward pass that does not retain activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub output: Tensor,
    pub state: Option<LstmState>,
}

impl Network {
    /// Build with parameters drawn from He-style uniform bounds
    /// `±sqrt(6 / fan_in)`; biases start at zero except the LSTM forget gate
    /// bias, which starts at one.
    pub fn new(spec: NetworkSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.summarize()?;
        let mut params = Vec::new();
        let init_stack = |layers: &[LayerSpec], params: &mut Vec<Tensor>, rng: &mut dyn rand::RngCore| {
            for layer in layers {
                match layer {
                    LayerSpec::Conv(c) => {
                        let fan_in = c.in_per_group() * c.kernel_h * c.kernel_w;
                        params.push(uniform(&c.weight_shape(), fan_in, rng));
                        if c.bias {
                            params.push(Tensor::zeros([c.out_channels]));
                        }
                    }
                    LayerSpec::Dense { inputs, outputs } => {
                        params.push(uniform(&[*outputs, *inputs], *inputs, rng));
                        params.push(Tensor::zeros([*outputs]));
                    }
                    _ => {}
                }
            }
        };
        init_stack(&spec.frame_layers, &mut params, rng);
        if let Some(l) = &spec.recurrent {
            let g = 4 * l.hidden_size;
            params.push(uniform(&[g, l.input_size], l.input_size + l.hidden_size, rng));
            params.push(uniform(&[g, l.hidden_size], l.input_size + l.hidden_size, rng));
            let mut b = Tensor::zeros([g]);
            b.data_mut()[l.hidden_size..2 * l.hidden_size].fill(1.0);
            params.push(b);
        }
        init_stack(&spec.head_layers, &mut params, rng);
        Self::from_params(spec, params)
    }

    /// Build around explicit parameters, checked against the spec's shapes.
    pub fn from_params(spec: NetworkSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.summarize()?;
        let shapes = spec.param_shapes();
        if shapes.len() != params.len() {
            return Err(NnError::Config(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (i, (s, p)) in shapes.iter().zip(&params).enumerate() {
            if s.as_slice() != p.shape() {
                return Err(NnError::Config(format!("parameter {i} has shape {:?}, expected {s:?}", p.shape())));
            }
        }
        Ok(Self {
            spec,
            params,
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [Tensor] {
        self.generation += 1;
        &mut self.params
    }

    pub fn param_count(&self) -> u64 {
        self.params.iter().map(|p| p.len() as u64).sum()
    }

    fn check_frames(&self, frames: &[Tensor]) -> Result<()> {
        let t = self.spec.seq_len();
        if frames.len() != t {
            return Err(NnError::Input(format!("expected {t} frame(s), got {}", frames.len())));
        }
        for f in frames {
            if f.shape() != self.spec.input {
                return Err(NnError::Input(format!(
                    "frame shape {:?} does not match network input {:?}",
                    f.shape(),
                    self.spec.input
                )));
            }
        }
        Ok(())
    }

    /// Forward pass retaining activations for [`Network::backward`].
    pub fn forward(&self, frames: &[Tensor]) -> Result<ForwardCache> {
        self.forward_impl(frames, None, true).map(|(cache, _)| cache)
    }

    /// Forward pass without caches; `initial` seeds the LSTM state.
    pub fn infer(&self, frames: &[Tensor], initial: Option<&LstmState>) -> Result<Inference> {
        let (cache, state) = self.forward_impl(frames, initial, false)?;
        Ok(Inference {
            output: cache.output,
            state,
        })
    }

    fn forward_impl(
        &self,
        frames: &[Tensor],
        initial: Option<&LstmState>,
        keep: bool,
    ) -> Result<(ForwardCache, Option<LstmState>)> {
        self.check_frames(frames)?;
        let mut cursor = 0;
        let mut frame_caches = Vec::with_capacity(frames.len());
        let mut features = Vec::with_capacity(frames.len());
        for frame in frames {
            let mut c = 0;
            let mut caches = Vec::new();
            let out = run_stack(&self.spec.frame_layers, &self.params, &mut c, frame.clone(), keep.then_some(&mut caches))?;
            cursor = c;
            frame_caches.push((caches, out.shape().to_vec()));
            features.push(out);
        }
        let (head_in, lstm_cache, state) = match &self.spec.recurrent {
            Some(spec) => {
                let seq: Vec<f64> = features.into_iter().flat_map(Tensor::into_data).collect();
                let seq = Tensor::new([spec.seq_len, spec.input_size], seq)?;
                let lp = self.lstm_params(cursor);
                cursor += 3;
                let (state, cache) = lstm_sequence(&seq, spec, &lp, initial)?;
                (Tensor::vector(state.hidden.clone()), Some(cache), Some(state))
            }
            None => {
                let f = features.pop().expect("one frame");
                let n = f.len();
                (f.reshape([n])?, None, None)
            }
        };
        let mut head_caches = Vec::new();
        let logits = run_stack(&self.spec.head_layers, &self.params, &mut cursor, head_in, keep.then_some(&mut head_caches))?;
        let output = apply_head(self.spec.output, &logits);
        Ok((
            ForwardCache {
                network_id: self.id,
                generation: self.generation,
                frames: frame_caches,
                lstm: if keep { lstm_cache } else { None },
                head: head_caches,
                logits,
                output,
            },
            state,
        ))
    }

    fn lstm_params(&self, at: usize) -> LstmParams {
        LstmParams {
            w_input: self.params[at].clone(),
            w_hidden: self.params[at + 1].clone(),
            bias: self.params[at + 2].clone(),
        }
    }

    /// Exact gradients of the loss with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, grad: OutputGrad) -> Result<Gradients> {
        if cache.network_id != self.id || cache.generation != self.generation {
            return Err(NnError::StaleCache);
        }
        if self.spec.recurrent.is_some() && cache.lstm.is_none() {
            return Err(NnError::MissingCache);
        }
        let g_logits = match grad {
            OutputGrad::Logits(g) => g,
            OutputGrad::Output(g) => head_backward(self.spec.output, &cache.logits, &cache.output, &g),
        };
        if g_logits.len() != cache.logits.len() {
            return Err(NnError::Input("loss gradient does not match output width".into()));
        }
        let mut grads = Gradients::zeros_like(self);
        let n_frame_params: usize = self.spec.frame_layers.iter().map(|l| l.param_shapes().len()).sum();
        let lstm_slots = if self.spec.recurrent.is_some() { 3 } else { 0 };

        let mut end = self.params.len();
        let g_head_in = backprop_stack(&self.spec.head_layers, &self.params, &mut grads, &mut end, &cache.head, g_logits)?;

        let frame_grads: Vec<Tensor> = match (&self.spec.recurrent, &cache.lstm) {
            (Some(spec), Some(lc)) => {
                let at = n_frame_params;
                let lg = lstm_backward(&self.lstm_params(at), lc, g_head_in.data())?;
                grads.tensors[at].add_scaled(&lg.params.w_input, 1.0);
                grads.tensors[at + 1].add_scaled(&lg.params.w_hidden, 1.0);
                grads.tensors[at + 2].add_scaled(&lg.params.bias, 1.0);
                lg.inputs
                    .data()
                    .chunks(spec.input_size)
                    .map(|c| Tensor::vector(c.to_vec()))
                    .collect()
            }
            _ => vec![g_head_in],
        };
        debug_assert_eq!(end, n_frame_params + lstm_slots);
        for ((caches, out_shape), g) in cache.frames.iter().zip(frame_grads) {
            let mut frame_end = n_frame_params;
            let g = g.reshape(out_shape.clone())?;
            backprop_stack(&self.spec.frame_layers, &self.params, &mut grads, &mut frame_end, caches, g)?;
        }
        Ok(grads)
    }

    /// `p ← p − lr · g` for every parameter.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        super::optim::sgd_step(self.params_mut(), grads, learning_rate)
    }
}

fn uniform(shape: &[usize], fan_in: usize, rng: &mut dyn rand::RngCore) -> Tensor {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-bound..bound))
}

fn apply_head(head: OutputHead, logits: &Tensor) -> Tensor {
    match head {
        OutputHead::Identity => logits.clone(),
        OutputHead::Softmax => softmax(logits),
        OutputHead::SteerThrottle => {
            let d = logits.data();
            Tensor::vector(vec![d[0].tanh(), sigmoid(d[1])])
        }
    }
}

fn head_backward(head: OutputHead, _logits: &Tensor, output: &Tensor, g: &Tensor) -> Tensor {
    match head {
        OutputHead::Identity => g.clone(),
        OutputHead::Softmax => softmax_backward(output, g),
        OutputHead::SteerThrottle => {
            let (s, t) = (output.data()[0], output.data()[1]);
            Tensor::vector(vec![g.data()[0] * (1.0 - s * s), g.data()[1] * t * (1.0 - t)])
        }
    }
}

fn run_stack(
    layers: &[LayerSpec],
    params: &[Tensor],
    cursor: &mut usize,
    mut x: Tensor,
    mut caches: Option<&mut Vec<LayerCache>>,
) -> Result<Tensor> {
    for layer in layers {
        let (y, cache) = match layer {
            LayerSpec::Conv(spec) => {
                let w = &params[*cursor];
                let b = spec.bias.then(|| &params[*cursor + 1]);
                *cursor += if spec.bias { 2 } else { 1 };
                (conv_forward(&x, w, b, spec)?, LayerCache::Conv { input: x })
            }
            LayerSpec::MaxPool(spec) => {
                let pooled = maxpool2d(&x, spec)?;
                let shape = x.shape().to_vec();
                (pooled.output, LayerCache::Pool { input_shape: shape, argmax: pooled.argmax })
            }
            LayerSpec::Relu => (relu(&x), LayerCache::Relu { input: x }),
            LayerSpec::Dense { .. } => {
                let (w, b) = (&params[*cursor], &params[*cursor + 1]);
                *cursor += 2;
                (dense(&x, w, b)?, LayerCache::Dense { input: x })
            }
        };
        if let Some(c) = caches.as_deref_mut() {
            c.push(cache);
        }
        x = y;
    }
    Ok(x)
}

/// Walk `layers` in reverse, consuming parameter slots ending at `end`.
fn backprop_stack(
    layers: &[LayerSpec],
    params: &[Tensor],
    grads: &mut Gradients,
    end: &mut usize,
    caches: &[LayerCache],
    mut g: Tensor,
) -> Result<Tensor> {
    if caches.len() != layers.len() {
        return Err(NnError::MissingCache);
    }
    for (layer, cache) in layers.iter().zip(caches).rev() {
        g = match (layer, cache) {
            (LayerSpec::Conv(spec), LayerCache::Conv { input }) => {
                let slots = if spec.bias { 2 } else { 1 };
                *end -= slots;
                let cg = conv_backward(input, &params[*end], &g, spec)?;
                grads.tensors[*end].add_scaled(&cg.weights, 1.0);
                if let Some(b) = cg.bias {
                    grads.tensors[*end + 1].add_scaled(&b, 1.0);
                }
                cg.input
            }
            (LayerSpec::MaxPool(_), LayerCache::Pool { input_shape, argmax }) => maxpool2d_backward(input_shape, argmax, &g)?,
            (LayerSpec::Relu, LayerCache::Relu { input }) => relu_backward(input, &g),
            (LayerSpec::Dense { .. }, LayerCache::Dense { input }) => {
                *end -= 2;
                let dg = dense_backward(input, &params[*end], &g)?;
                grads.tensors[*end].add_scaled(&dg.weights, 1.0);
                grads.tensors[*end + 1].add_scaled(&dg.bias, 1.0);
                dg.input
            }
            _ => return Err(NnError::MissingCache),
        };
    }
    Ok(g)
}
