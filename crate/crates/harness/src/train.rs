//! `ftl train` and `ftl eval`: fit a network on collected logs and score
//! it on the held-out split recorded in its checkpoint.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ftl_core::datalog::denormalize_target;
use ftl_core::models::{build_mcn, build_rn, ConvVariant, Mcn, McnConfig, Rn, RnConfig, MCN_NAME, RN_NAME};
use ftl_core::nn::checkpoint::{self, CheckpointMeta};
use ftl_core::nn::{train_with, Network, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::data::{discover, load_laps, lap_windows, regressor_dataset, split_laps, StillsData};
use crate::metrics::{confusion_precision, rmse_percent, EvalReport, LapRmse};

pub const STEERING_RANGE: f64 = 200.0;
pub const THROTTLE_RANGE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mcn,
    Rn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mcn => MCN_NAME,
            ModelKind::Rn => RN_NAME,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Reduced resolution sized for a single CPU core.
    Desk,
    /// Full-resolution architecture.
    Canonical,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub model: ModelKind,
    pub data: PathBuf,
    pub out: PathBuf,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub variant: ConvVariant,
    pub preset: Preset,
    pub test_fraction: f64,
    pub test_laps_per_direction: usize,
    pub verbose: bool,
}

impl TrainOptions {
    pub fn new(model: ModelKind, data: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            model,
            data: data.into(),
            out: out.into(),
            epochs: None,
            learning_rate: None,
            batch_size: None,
            seed: 0,
            variant: ConvVariant::Grouped,
            preset: Preset::Desk,
            test_fraction: 0.2,
            test_laps_per_direction: 2,
            verbose: false,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = match self.model {
            ModelKind::Mcn => TrainConfig::classifier(),
            ModelKind::Rn => TrainConfig::regressor(),
        };
        cfg.seed = self.seed;
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            cfg.learning_rate = lr;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        cfg
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model: String,
    pub checkpoint: PathBuf,
    pub params: u64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub losses: Vec<f64>,
    pub seconds: f64,
}

fn mcn_config(preset: Preset, variant: ConvVariant) -> McnConfig {
    match preset {
        Preset::Desk => McnConfig::desk(),
        Preset::Canonical => McnConfig::canonical(),
    }
    .with_variant(variant)
}

fn rn_config(preset: Preset, variant: ConvVariant) -> RnConfig {
    match preset {
        Preset::Desk => RnConfig::desk(),
        Preset::Canonical => RnConfig::canonical(),
    }
    .with_variant(variant)
}

fn variant_name(v: ConvVariant) -> &'static str {
    match v {
        ConvVariant::Grouped => "grouped",
        ConvVariant::Standard => "standard",
    }
}

pub fn cmd_train(opts: &TrainOptions) -> Result<TrainSummary> {
    let cfg = opts.train_config();
    let dir = discover(&opts.data)?;
    let started = Instant::now();
    let mut extra = BTreeMap::new();
    extra.insert("data".to_string(), opts.data.display().to_string());
    extra.insert("split_seed".to_string(), opts.seed.to_string());
    extra.insert("variant".to_string(), variant_name(opts.variant).to_string());
    extra.insert("learning_rate".to_string(), cfg.learning_rate.to_string());
    extra.insert("batch_size".to_string(), cfg.batch_size.to_string());

    let log = |epoch: usize, loss: f64| {
        if opts.verbose {
            eprintln!("{} epoch {:>4}  loss {loss:.6}  {:.1}s", opts.model.name(), epoch + 1, started.elapsed().as_secs_f64());
        }
    };

    let (mut net, data, test_samples): (Network, _, usize) = match opts.model {
        ModelKind::Mcn => {
            let net = build_mcn(&mcn_config(opts.preset, opts.variant), opts.seed)?;
            let stills = StillsData::load(&dir.stills, net.spec().input)?;
            let split = stills.split(opts.test_fraction, opts.seed)?;
            extra.insert("test_fraction".to_string(), opts.test_fraction.to_string());
            let n_test = split.test.len();
            (net, stills.dataset(&split.train), n_test)
        }
        ModelKind::Rn => {
            let net = build_rn(&rn_config(opts.preset, opts.variant), opts.seed)?;
            let laps = load_laps(&dir.laps, net.spec().input)?;
            let split = split_laps(&laps, opts.test_laps_per_direction, opts.seed)?;
            let names: Vec<&str> = split.test.iter().map(|&i| laps[i].name.as_str()).collect();
            extra.insert("test_laps".to_string(), names.join(","));
            let window = net.spec().seq_len();
            let n_test = lap_windows(&laps, &split.test, window)?.len();
            (net, regressor_dataset(&laps, &split.train, window)?, n_test)
        }
    };
    let losses = train_with(&mut net, &data, &cfg, log)?;
    if let Some(parent) = opts.out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    checkpoint::save(&opts.out, &net, opts.seed, cfg.epochs as u64, extra)
        .with_context(|| format!("writing {}", opts.out.display()))?;
    Ok(TrainSummary {
        model: opts.model.name().to_string(),
        checkpoint: opts.out.clone(),
        params: net.param_count(),
        train_samples: data.samples.len(),
        test_samples,
        losses,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// A checkpoint decoded into whichever wrapper its architecture names.
pub enum Loaded {
    Mcn(Mcn, CheckpointMeta),
    Rn(Rn, CheckpointMeta),
}

pub fn load_model(path: &Path) -> Result<Loaded> {
    let (net, meta) = checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(match meta.architecture.as_str() {
        MCN_NAME => Loaded::Mcn(Mcn::new(net)?, meta),
        RN_NAME => Loaded::Rn(Rn::new(net)?, meta),
        other => bail!("{}: unknown architecture {other:?}", path.display()),
    })
}

fn extra<'a>(meta: &'a CheckpointMeta, key: &str) -> Result<&'a str> {
    meta.extra
        .get(key)
        .map(String::as_str)
        .with_context(|| format!("checkpoint lacks {key:?}; it was not written by `ftl train`"))
}

/// Score a checkpoint on its held-out split. `data` overrides the data
/// directory recorded at training time.
pub fn cmd_eval(checkpoint_path: &Path, data: Option<&Path>) -> Result<EvalReport> {
    let loaded = load_model(checkpoint_path)?;
    let meta = match &loaded {
        Loaded::Mcn(_, m) | Loaded::Rn(_, m) => m,
    };
    let data_dir = match data {
        Some(d) => d.to_path_buf(),
        None => PathBuf::from(extra(meta, "data")?),
    };
    let seed: u64 = extra(meta, "split_seed")?.parse()?;
    let dir = discover(&data_dir)?;
    let mut report = EvalReport {
        model: meta.architecture.clone(),
        checkpoint: checkpoint_path.display().to_string(),
        train_samples: 0,
        test_samples: 0,
        confusion: None,
        accuracy: None,
        laps: Vec::new(),
        steering_rmse_pct: None,
        throttle_rmse_pct: None,
    };
    match &loaded {
        Loaded::Mcn(mcn, _) => {
            let fraction: f64 = extra(meta, "test_fraction")?.parse()?;
            let stills = StillsData::load(&dir.stills, mcn.input_shape())?;
            let split = stills.split(fraction, seed)?;
            let mut preds = Vec::with_capacity(split.test.len());
            let mut labels = Vec::with_capacity(split.test.len());
            for &i in &split.test {
                let out = mcn.infer(&stills.frames[i])?;
                preds.push(if out.present() { ftl_core::models::PRESENT } else { ftl_core::models::ABSENT });
                labels.push(stills.labels[i]);
            }
            let c = confusion_precision(&preds, &labels)?;
            report.accuracy = Some(c.accuracy());
            report.confusion = Some(c);
            report.train_samples = split.train.len();
            report.test_samples = split.test.len();
        }
        Loaded::Rn(rn, _) => {
            let laps = load_laps(&dir.laps, rn.input_shape())?;
            let wanted: Vec<&str> = extra(meta, "test_laps")?.split(',').filter(|s| !s.is_empty()).collect();
            let test: Vec<usize> = wanted
                .iter()
                .map(|w| laps.iter().position(|l| l.name == *w).with_context(|| format!("held-out lap {w} not found in {}", data_dir.display())))
                .collect::<Result<_>>()?;
            let train: Vec<usize> = (0..laps.len()).filter(|i| !test.contains(i)).collect();
            let window = rn.seq_len();
            report.train_samples = lap_windows(&laps, &train, window)?.len();
            let (mut all_ps, mut all_ts, mut all_pt, mut all_tt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for &i in &test {
                let lap = &laps[i];
                let (mut ps, mut ts, mut pt, mut tt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                // Score the following task: windows ending on a frame with a
                // pedestrian in the world.
                for seq in ftl_core::datalog::make_sequences(&lap.records, window)? {
                    if lap.records[seq.frames().end - 1].pedestrian.is_none() {
                        continue;
                    }
                    let out = rn.infer(&lap.frames[seq.frames()], None)?;
                    let (s, t) = denormalize_target([out.steering, out.throttle]);
                    let (s_true, t_true) = denormalize_target(seq.target);
                    ps.push(s);
                    ts.push(s_true);
                    pt.push(t);
                    tt.push(t_true);
                }
                report.laps.push(LapRmse {
                    lap: lap.name.clone(),
                    frames: ps.len(),
                    steering_pct: rmse_percent(&ps, &ts, STEERING_RANGE)?,
                    throttle_pct: rmse_percent(&pt, &tt, THROTTLE_RANGE)?,
                });
                all_ps.extend(ps);
                all_ts.extend(ts);
                all_pt.extend(pt);
                all_tt.extend(tt);
            }
            report.test_samples = all_ps.len();
            report.steering_rmse_pct = Some(rmse_percent(&all_ps, &all_ts, STEERING_RANGE)?);
            report.throttle_rmse_pct = Some(rmse_percent(&all_pt, &all_tt, THROTTLE_RANGE)?);
        }
    }
    Ok(report)
}
