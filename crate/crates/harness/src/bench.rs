//! `ftl bench`: layer-level and model-level throughput.

use std::time::Instant;

use anyhow::Result;
use ftl_core::kernels::conv::{conv_backward, conv_forward, ConvSpec};
use ftl_core::models::{build_mcn, build_rn, ConvVariant, McnConfig, RnConfig};
use ftl_core::nn::{train, Dataset, Network, Sample, Target, TrainConfig};
use ftl_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::train::{ModelKind, Preset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerTiming {
    pub channels: usize,
    pub groups: usize,
    pub height: usize,
    pub width: usize,
    /// Best forward+backward wall time over the repetitions, seconds.
    pub grouped_secs: f64,
    pub standard_secs: f64,
}

impl LayerTiming {
    pub fn speedup(&self) -> f64 {
        self.standard_secs / self.grouped_secs
    }
}

fn best_of(reps: usize, mut f: impl FnMut()) -> f64 {
    f();
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Time one 3×3 `channels → channels` convolution, grouped versus standard,
/// on a `[channels, height, width]` input.
pub fn layer_timing(channels: usize, groups: usize, height: usize, width: usize, reps: usize, seed: u64) -> Result<LayerTiming> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::from_fn([channels, height, width], |_| rng.gen_range(-1.0..1.0));
    let g_out = Tensor::from_fn([channels, height, width], |_| rng.gen_range(-1.0..1.0));
    let mut time = |spec: ConvSpec| -> Result<f64> {
        let w = Tensor::from_fn(spec.weight_shape(), |_| rng.gen_range(-0.1..0.1));
        // Surface errors once outside the timed loop.
        conv_forward(&x, &w, None, &spec)?;
        Ok(best_of(reps, || {
            let y = conv_forward(&x, &w, None, &spec).expect("validated");
            let g = conv_backward(&x, &w, &g_out, &spec).expect("validated");
            std::hint::black_box((y, g));
        }))
    };
    let grouped_secs = time(ConvSpec::same(channels, channels, 3, groups).without_bias())?;
    let standard_secs = time(ConvSpec::same(channels, channels, 3, 1).without_bias())?;
    Ok(LayerTiming {
        channels,
        groups,
        height,
        width,
        grouped_secs,
        standard_secs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub variant: String,
    pub batch_size: usize,
    pub passes: usize,
    /// Frames through forward, backward and update per second.
    pub images_per_sec: f64,
    pub params: u64,
}

fn synthetic(net: &Network, samples: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let window = net.spec().seq_len();
    let classes = net.spec().output == ftl_core::nn::OutputHead::Softmax;
    let frames = (0..samples * window)
        .map(|_| Tensor::from_fn(net.spec().input, |_| rng.gen::<f64>()))
        .collect();
    let samples = (0..samples)
        .map(|i| Sample {
            frames: (i * window..(i + 1) * window).collect(),
            target: if classes {
                Target::Class(i % 2)
            } else {
                Target::Controls([rng.gen_range(-1.0..1.0), rng.gen()])
            },
        })
        .collect();
    Dataset { frames, samples }
}

/// Training throughput on random frames: `passes` epochs over
/// `steps` minibatches of `batch_size`.
pub fn model_throughput(
    model: ModelKind,
    preset: Preset,
    variant: ConvVariant,
    batch_size: usize,
    steps: usize,
    passes: usize,
    seed: u64,
) -> Result<BenchReport> {
    let mut net = match (model, preset) {
        (ModelKind::Mcn, Preset::Desk) => build_mcn(&McnConfig::desk().with_variant(variant), seed)?,
        (ModelKind::Mcn, Preset::Canonical) => build_mcn(&McnConfig::canonical().with_variant(variant), seed)?,
        (ModelKind::Rn, Preset::Desk) => build_rn(&RnConfig::desk().with_variant(variant), seed)?,
        (ModelKind::Rn, Preset::Canonical) => build_rn(&RnConfig::canonical().with_variant(variant), seed)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = synthetic(&net, batch_size * steps, &mut rng);
    let mut cfg = match model {
        ModelKind::Mcn => TrainConfig::classifier(),
        ModelKind::Rn => TrainConfig::regressor(),
    };
    cfg.batch_size = batch_size;
    cfg.epochs = passes;
    cfg.seed = seed;
    let started = Instant::now();
    train(&mut net, &data, &cfg)?;
    let secs = started.elapsed().as_secs_f64();
    let images = (passes * data.samples.len() * net.spec().seq_len()) as f64;
    Ok(BenchReport {
        model: model.name().to_string(),
        variant: match variant {
            ConvVariant::Grouped => "grouped",
            ConvVariant::Standard => "standard",
        }
        .to_string(),
        batch_size,
        passes,
        images_per_sec: images / secs,
        params: net.param_count(),
    })
}
