//! Shuffled minibatch SGD.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{additive_l2_loss, cross_entropy_loss};
use super::{Gradients, Network, NnError, OutputGrad, OutputHead};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    AdditiveL2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Global gradient-norm ceiling applied per minibatch.
    pub clip_norm: Option<f64>,
}

impl TrainConfig {
    /// Classifier schedule: cross-entropy, lr 0.01, batch 8, 100 epochs.
    pub fn classifier() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 8,
            seed: 0,
            loss: LossKind::CrossEntropy,
            clip_norm: None,
        }
    }

    /// Regressor schedule: additive L2, lr 0.001, batch 1, 500 epochs,
    /// gradient norm clipped at 5.
    pub fn regressor() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 500,
            batch_size: 1,
            seed: 0,
            loss: LossKind::AdditiveL2,
            clip_norm: Some(5.0),
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0) {
            return Err(NnError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NnError::Config("epochs and batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    /// Normalized `[steering, throttle]`.
    Controls([f64; 2]),
}

/// One training example: indices into the dataset's frame pool (one per
/// timestep) and its target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub frames: Vec<usize>,
    pub target: Target,
}

/// Frames are stored once and shared by every sample window that uses them.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub frames: Vec<Tensor>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_frames(&self, i: usize) -> Vec<Tensor> {
        self.samples[i].frames.iter().map(|&f| self.frames[f].clone()).collect()
    }
}

/// Loss and output-gradient for one sample.
pub fn sample_loss(net: &Network, kind: LossKind, output: &Tensor, target: &Target) -> Result<(f64, OutputGrad), NnError> {
    match (kind, target) {
        (LossKind::CrossEntropy, Target::Class(label)) => {
            if net.spec().output != OutputHead::Softmax {
                return Err(NnError::Config("cross-entropy requires a softmax output head".into()));
            }
            let (l, g) = cross_entropy_loss(output, *label)?;
            Ok((l, OutputGrad::Logits(g)))
        }
        (LossKind::AdditiveL2, Target::Controls(t)) => {
            let (l, g) = additive_l2_loss(output, t)?;
            Ok((l, OutputGrad::Output(g)))
        }
        _ => Err(NnError::Config(format!("loss {kind:?} does not accept target {target:?}"))),
    }
}

/// Train in place; returns the mean loss of every epoch.
pub fn train(net: &mut Network, data: &Dataset, config: &TrainConfig) -> Result<Vec<f64>, NnError> {
    train_with(net, data, config, |_, _| {})
}

/// As [`train`], calling `on_epoch(epoch, mean_loss)` after every epoch.
pub fn train_with(
    net: &mut Network,
    data: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>, NnError> {
    config.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::zeros_like(net);
            // Accumulate in ascending sample order so the sum is independent
            // of how the batch was assembled.
            let mut members = batch.to_vec();
            members.sort_unstable();
            for &i in &members {
                let cache = net.forward(&data.sample_frames(i))?;
                let (loss, g) = sample_loss(net, config.loss, cache.output(), &data.samples[i].target)?;
                if !loss.is_finite() {
                    return Err(NnError::NonFinite { epoch, sample: i, value: loss });
                }
                total += loss;
                grads.accumulate(&net.backward(&cache, g)?, 1.0);
            }
            for t in &mut grads.tensors {
                t.scale(1.0 / members.len() as f64);
            }
            if let Some(max) = config.clip_norm {
                grads.clip_global_norm(max);
            }
            if !grads.is_finite() {
                return Err(NnError::NonFinite { epoch, sample: members[0], value: f64::NAN });
            }
            net.sgd_step(&grads, config.learning_rate)?;
        }
        let mean = total / data.len() as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(history)
}
