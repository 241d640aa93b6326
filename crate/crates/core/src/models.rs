//! Classifier (MCN) and regressor (RN) architectures and their inference
//! entry points.
//!
//! Both networks share a front end of conv → ReLU → max-pool blocks feeding
//! one grouped 3×3 convolution with four groups and no channel expansion.
//! The classifier global-max-pools that block into two dense layers and a
//! softmax; the regressor flattens it per frame and runs an LSTM over a
//! five-frame window before a two-unit head (steering via tanh, throttle via
//! sigmoid).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::lstm::{LstmSpec, LstmState};
use crate::kernels::{ConvSpec, PoolSpec};
use crate::nn::{LayerSpec, Network, NetworkSpec, NnError, OutputHead};
use crate::tensor::Tensor;

pub const MCN_NAME: &str = "mcn";
pub const RN_NAME: &str = "rn";

/// Class index of "pedestrian present" in the classifier output.
pub const PRESENT: usize = 0;
/// Class index of "pedestrian absent".
pub const ABSENT: usize = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("input error: {0}")]
    Input(String),
    #[error("expected a {expected} network, got {actual:?}")]
    Architecture { expected: &'static str, actual: String },
}

type Result<T> = std::result::Result<T, ModelError>;

/// Which convolution fills the grouped block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvVariant {
    Grouped,
    /// Same block with a conventional (G = 1) convolution.
    Standard,
}

/// One conv → ReLU stage followed by zero or more pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    pub pools: Vec<PoolSpec>,
}

impl ConvBlock {
    pub fn pooled(out_channels: usize, pools: &[PoolSpec]) -> Self {
        Self {
            out_channels,
            pools: pools.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McnConfig {
    pub input: [usize; 3],
    pub kernel: usize,
    pub blocks: Vec<ConvBlock>,
    pub groups: usize,
    pub grouped_kernel: usize,
    /// Hidden dense widths between the pooled features and the 2-way output.
    pub dense_hidden: Vec<usize>,
    pub variant: ConvVariant,
}

impl McnConfig {
    /// 6×120×160 input, channels 6→32→64, grouped 64-channel block with
    /// cardinality 4, dense 64→32→2.
    pub fn canonical() -> Self {
        Self {
            input: [6, 120, 160],
            kernel: 3,
            blocks: vec![
                ConvBlock::pooled(32, &[PoolSpec::square(2, 2)]),
                ConvBlock::pooled(64, &[PoolSpec::square(2, 2)]),
            ],
            groups: 4,
            grouped_kernel: 3,
            dense_hidden: vec![32],
            variant: ConvVariant::Grouped,
        }
    }

    /// Reduced-width classifier on a 4× box-downsampled frame (6×30×40).
    pub fn desk() -> Self {
        Self {
            input: [6, 30, 40],
            kernel: 3,
            blocks: vec![
                ConvBlock::pooled(8, &[PoolSpec::square(2, 2)]),
                ConvBlock::pooled(16, &[PoolSpec::square(2, 2)]),
            ],
            groups: 4,
            grouped_kernel: 3,
            dense_hidden: vec![16],
            variant: ConvVariant::Grouped,
        }
    }

    pub fn with_variant(mut self, variant: ConvVariant) -> Self {
        self.variant = variant;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnConfig {
    pub input: [usize; 3],
    pub kernel: usize,
    pub blocks: Vec<ConvBlock>,
    pub groups: usize,
    pub grouped_kernel: usize,
    /// LSTM input width; must equal the flattened grouped-block output.
    pub flatten_size: usize,
    pub hidden_size: usize,
    pub seq_len: usize,
    pub variant: ConvVariant,
}

impl RnConfig {
    /// 6×120×160 input, channels 6→32→64→256 pooled down to a 4×6 grid,
    /// grouped 256-channel block (G = 4), flatten 6144, LSTM with 60 units
    /// over 5 frames, dense 60→2.
    pub fn canonical() -> Self {
        Self {
            input: [6, 120, 160],
            kernel: 3,
            blocks: vec![
                ConvBlock::pooled(32, &[PoolSpec::square(2, 2)]),
                ConvBlock::pooled(64, &[PoolSpec::square(2, 2)]),
                ConvBlock::pooled(256, &[PoolSpec::square(2, 2), PoolSpec::square(5, 3)]),
            ],
            groups: 4,
            grouped_kernel: 3,
            flatten_size: 6144,
            hidden_size: 60,
            seq_len: 5,
            variant: ConvVariant::Grouped,
        }
    }

    /// Reduced-width regressor on an 8× box-downsampled frame (6×15×20),
    /// pooled to a 3×5 grid at 16 channels. LSTM width and window length
    /// are unchanged.
    pub fn desk() -> Self {
        Self {
            input: [6, 15, 20],
            kernel: 3,
            blocks: vec![
                ConvBlock::pooled(8, &[PoolSpec::square(2, 2)]),
                ConvBlock::pooled(16, &[PoolSpec::square(2, 2)]),
            ],
            groups: 4,
            grouped_kernel: 3,
            flatten_size: 16 * 3 * 5,
            hidden_size: 60,
            seq_len: 5,
            variant: ConvVariant::Grouped,
        }
    }

    pub fn with_variant(mut self, variant: ConvVariant) -> Self {
        self.variant = variant;
        self
    }
}

fn front_end(input: [usize; 3], kernel: usize, blocks: &[ConvBlock]) -> (Vec<LayerSpec>, usize) {
    let mut layers = Vec::new();
    let mut channels = input[0];
    for b in blocks {
        layers.push(LayerSpec::Conv(ConvSpec::same(channels, b.out_channels, kernel, 1)));
        layers.push(LayerSpec::Relu);
        layers.extend(b.pools.iter().map(|&p| LayerSpec::MaxPool(p)));
        channels = b.out_channels;
    }
    (layers, channels)
}

/// The grouped block: no channel expansion, no bias.
fn grouped_block(channels: usize, kernel: usize, groups: usize, variant: ConvVariant) -> Result<ConvSpec> {
    let g = match variant {
        ConvVariant::Grouped => groups,
        ConvVariant::Standard => 1,
    };
    let spec = ConvSpec::same(channels, channels, kernel, g).without_bias();
    spec.validate().map_err(NnError::from)?;
    Ok(spec)
}

/// Output spatial extent after running `layers` on `input`.
fn trailing_shape(input: [usize; 3], layers: &[LayerSpec]) -> Result<Vec<usize>> {
    let probe = NetworkSpec {
        name: "probe".into(),
        input,
        frame_layers: layers.to_vec(),
        recurrent: None,
        head_layers: vec![],
        output: OutputHead::Identity,
    };
    Ok(probe
        .summarize()?
        .last()
        .map(|r| r.output_shape.clone())
        .unwrap_or_else(|| input.to_vec()))
}

pub fn mcn_spec(cfg: &McnConfig) -> Result<NetworkSpec> {
    let (mut layers, channels) = front_end(cfg.input, cfg.kernel, &cfg.blocks);
    layers.push(LayerSpec::Conv(grouped_block(channels, cfg.grouped_kernel, cfg.groups, cfg.variant)?));
    layers.push(LayerSpec::Relu);
    let shape = trailing_shape(cfg.input, &layers)?;
    layers.push(LayerSpec::MaxPool(PoolSpec {
        window_h: shape[1],
        window_w: shape[2],
        stride_h: 1,
        stride_w: 1,
    }));
    let mut head = Vec::new();
    let mut width = channels;
    for &h in &cfg.dense_hidden {
        head.push(LayerSpec::Dense { inputs: width, outputs: h });
        head.push(LayerSpec::Relu);
        width = h;
    }
    head.push(LayerSpec::Dense { inputs: width, outputs: 2 });
    let spec = NetworkSpec {
        name: MCN_NAME.into(),
        input: cfg.input,
        frame_layers: layers,
        recurrent: None,
        head_layers: head,
        output: OutputHead::Softmax,
    };
    spec.summarize()?;
    Ok(spec)
}

pub fn rn_spec(cfg: &RnConfig) -> Result<NetworkSpec> {
    let (mut layers, channels) = front_end(cfg.input, cfg.kernel, &cfg.blocks);
    layers.push(LayerSpec::Conv(grouped_block(channels, cfg.grouped_kernel, cfg.groups, cfg.variant)?));
    layers.push(LayerSpec::Relu);
    let spec = NetworkSpec {
        name: RN_NAME.into(),
        input: cfg.input,
        frame_layers: layers,
        recurrent: Some(LstmSpec {
            input_size: cfg.flatten_size,
            hidden_size: cfg.hidden_size,
            seq_len: cfg.seq_len,
        }),
        head_layers: vec![LayerSpec::Dense { inputs: cfg.hidden_size, outputs: 2 }],
        output: OutputHead::SteerThrottle,
    };
    spec.summarize()?;
    Ok(spec)
}

pub fn build_mcn(cfg: &McnConfig, seed: u64) -> Result<Network> {
    Ok(Network::new(mcn_spec(cfg)?, &mut ChaCha8Rng::seed_from_u64(seed))?)
}

pub fn build_rn(cfg: &RnConfig, seed: u64) -> Result<Network> {
    Ok(Network::new(rn_spec(cfg)?, &mut ChaCha8Rng::seed_from_u64(seed))?)
}

/// Box-filter a `[C, H, W]` image down to `[C, h, w]`; `H/h` and `W/w` must
/// be equal integers.
pub fn downsample(image: &Tensor, target: [usize; 3]) -> Result<Tensor> {
    let s = image.shape();
    if s.len() != 3 || s[0] != target[0] {
        return Err(ModelError::Input(format!(
            "image {:?} does not have the {} channels the network expects",
            s, target[0]
        )));
    }
    if s[1..] == target[1..] {
        return Ok(image.clone());
    }
    let (fh, fw) = (s[1] / target[1], s[2] / target[2]);
    if fh == 0 || fh != fw || fh * target[1] != s[1] || fw * target[2] != s[2] {
        return Err(ModelError::Input(format!(
            "image {:?} is not an integer multiple of network input {:?}",
            s, target
        )));
    }
    let f = fh;
    let norm = 1.0 / (f * f) as f64;
    let (h, w) = (s[1], s[2]);
    let mut out = Tensor::zeros(target);
    let dst = out.data_mut();
    for c in 0..target[0] {
        let plane = image.channel(c);
        for r in 0..h {
            let row = &plane[r * w..(r + 1) * w];
            let base = (c * target[1] + r / f) * target[2];
            for (col, v) in row.iter().enumerate() {
                dst[base + col / f] += v;
            }
        }
    }
    dst.iter_mut().for_each(|v| *v *= norm);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McnOutput {
    pub p_present: f64,
    pub p_absent: f64,
}

impl McnOutput {
    /// Present only on a strict majority; an exact tie counts as absent.
    pub fn present(&self) -> bool {
        self.p_present > self.p_absent
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnOutput {
    /// Normalized steering in [−1, 1], negative is left.
    pub steering: f64,
    /// Normalized throttle in [0, 1].
    pub throttle: f64,
    pub state: LstmState,
}

/// Trained classifier wrapper.
#[derive(Debug, Clone)]
pub struct Mcn {
    net: Network,
}

impl Mcn {
    pub fn new(net: Network) -> Result<Self> {
        if net.spec().name != MCN_NAME || net.spec().output != OutputHead::Softmax {
            return Err(ModelError::Architecture {
                expected: MCN_NAME,
                actual: net.spec().name.clone(),
            });
        }
        Ok(Self { net })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.net.spec().input
    }

    /// Classify a 6-channel image in [0, 1] at network resolution or any
    /// integer multiple of it.
    pub fn infer(&self, image: &Tensor) -> Result<McnOutput> {
        let x = downsample(image, self.input_shape())?;
        let out = self.net.infer(&[x], None)?.output;
        Ok(McnOutput {
            p_present: out.data()[PRESENT],
            p_absent: out.data()[ABSENT],
        })
    }
}

/// Trained regressor wrapper.
#[derive(Debug, Clone)]
pub struct Rn {
    net: Network,
}

impl Rn {
    pub fn new(net: Network) -> Result<Self> {
        if net.spec().name != RN_NAME || net.spec().output != OutputHead::SteerThrottle || net.spec().recurrent.is_none() {
            return Err(ModelError::Architecture {
                expected: RN_NAME,
                actual: net.spec().name.clone(),
            });
        }
        Ok(Self { net })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.net.spec().input
    }

    pub fn seq_len(&self) -> usize {
        self.net.spec().seq_len()
    }

    /// Run one window of exactly `seq_len` frames (oldest first), starting
    /// the LSTM from `carry` or from zero.
    pub fn infer(&self, frames: &[Tensor], carry: Option<&LstmState>) -> Result<RnOutput> {
        if frames.len() != self.seq_len() {
            return Err(ModelError::Input(format!(
                "regressor needs a window of {} frames, got {}; pad underfull windows by repeating the oldest frame",
                self.seq_len(),
                frames.len()
            )));
        }
        let xs = frames
            .iter()
            .map(|f| downsample(f, self.input_shape()))
            .collect::<Result<Vec<_>>>()?;
        let inf = self.net.infer(&xs, carry)?;
        Ok(RnOutput {
            steering: inf.output.data()[0],
            throttle: inf.output.data()[1],
            state: inf.state.expect("recurrent network returns state"),
        })
    }
}

/// Fill a window to `len` frames by repeating the oldest one at the front.
pub fn pad_window(frames: &[Tensor], len: usize) -> Vec<Tensor> {
    assert!(!frames.is_empty(), "cannot pad an empty window");
    let start = frames.len().saturating_sub(len);
    let tail = &frames[start..];
    let mut out = Vec::with_capacity(len);
    out.extend(std::iter::repeat_n(tail[0].clone(), len - tail.len()));
    out.extend_from_slice(tail);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::accounting::conv_weight_params;

    #[test]
    fn canonical_rn_counts_reconcile() {
        let grouped = rn_spec(&RnConfig::canonical()).unwrap();
        let standard = rn_spec(&RnConfig::canonical().with_variant(ConvVariant::Standard)).unwrap();
        assert_eq!(standard.param_count().unwrap(), 2_247_114);
        assert_eq!(grouped.param_count().unwrap(), 1_804_746);
        assert_eq!(standard.param_count().unwrap() - grouped.param_count().unwrap(), 442_368);
        assert_eq!(442_368, 3 * 256 * 256 * 9 / 4);
    }

    #[test]
    fn canonical_rn_flattens_to_six_thousand() {
        let rows = rn_spec(&RnConfig::canonical()).unwrap().summarize().unwrap();
        let grouped = rows.iter().find(|r| r.label.starts_with("grouped")).unwrap();
        assert_eq!(grouped.output_shape, vec![256, 4, 6]);
    }

    #[test]
    fn flatten_mismatch_is_rejected() {
        let mut cfg = RnConfig::canonical();
        cfg.flatten_size = 6000;
        assert!(rn_spec(&cfg).is_err());
    }

    #[test]
    fn indivisible_group_plan_is_rejected() {
        let mut cfg = McnConfig::desk();
        cfg.blocks[1].out_channels = 18;
        assert!(mcn_spec(&cfg).is_err());
    }

    #[test]
    fn mcn_grouped_block_is_quarter_of_standard() {
        let find = |v: ConvVariant| {
            let spec = mcn_spec(&McnConfig::canonical().with_variant(v)).unwrap();
            spec.frame_layers
                .iter()
                .filter_map(|l| match l {
                    LayerSpec::Conv(c) => Some(*c),
                    _ => None,
                })
                .last()
                .unwrap()
        };
        assert_eq!(conv_weight_params(&find(ConvVariant::Standard)), 4 * conv_weight_params(&find(ConvVariant::Grouped)));
    }

    #[test]
    fn mcn_output_is_probability_pair() {
        let mcn = Mcn::new(build_mcn(&McnConfig::desk(), 3).unwrap()).unwrap();
        let img = Tensor::from_fn([6, 120, 160], |i| ((i * 31) % 97) as f64 / 97.0);
        let out = mcn.infer(&img).unwrap();
        assert!((out.p_present + out.p_absent - 1.0).abs() < 1e-12);
        assert!(out.p_present > 0.0 && out.p_absent > 0.0);
    }

    #[test]
    fn exact_tie_is_absent() {
        assert!(!McnOutput { p_present: 0.5, p_absent: 0.5 }.present());
    }

    #[test]
    fn wrong_channel_count_rejected() {
        let mcn = Mcn::new(build_mcn(&McnConfig::desk(), 3).unwrap()).unwrap();
        assert!(matches!(mcn.infer(&Tensor::zeros([3, 120, 160])), Err(ModelError::Input(_))));
    }

    #[test]
    fn zero_regressor_gives_neutral_outputs() {
        let net = build_rn(&RnConfig::desk(), 1).unwrap();
        let zeros = net.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        let rn = Rn::new(Network::from_params(net.spec().clone(), zeros).unwrap()).unwrap();
        let frames = vec![Tensor::zeros([6, 15, 20]); 5];
        let out = rn.infer(&frames, None).unwrap();
        assert_eq!(out.steering, 0.0);
        assert_eq!(out.throttle, 0.5);
    }

    #[test]
    fn regressor_is_deterministic() {
        let rn = Rn::new(build_rn(&RnConfig::desk(), 9).unwrap()).unwrap();
        let frames: Vec<Tensor> = (0..5).map(|k| Tensor::from_fn([6, 120, 160], |i| ((i + k) % 13) as f64 / 13.0)).collect();
        assert_eq!(rn.infer(&frames, None).unwrap(), rn.infer(&frames, None).unwrap());
    }

    #[test]
    fn underfull_window_is_rejected_and_padding_repeats_oldest() {
        let rn = Rn::new(build_rn(&RnConfig::desk(), 9).unwrap()).unwrap();
        let frames: Vec<Tensor> = (0..3).map(|k| Tensor::filled([6, 15, 20], k as f64 / 10.0)).collect();
        assert!(rn.infer(&frames, None).is_err());
        let padded = pad_window(&frames, 5);
        assert_eq!(padded.len(), 5);
        assert_eq!(padded[0], frames[0]);
        assert_eq!(padded[1], frames[0]);
        assert_eq!(padded[4], frames[2]);
    }

    #[test]
    fn downsample_averages_blocks() {
        let img = Tensor::from_fn([6, 4, 4], |i| (i % 16) as f64);
        let small = downsample(&img, [6, 2, 2]).unwrap();
        // Top-left block of channel 0 holds 0, 1, 4, 5.
        assert_eq!(small.at(&[0, 0, 0]), 2.5);
        assert!(downsample(&img, [6, 3, 3]).is_err());
    }
}
