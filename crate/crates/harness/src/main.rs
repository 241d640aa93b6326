use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use ftl_core::models::ConvVariant;
use ftl_harness::bench::{layer_timing, model_throughput};
use ftl_harness::collect::cmd_collect;
use ftl_harness::drive::{check_trace, run_drive, summarize, write_trace, Pilot};
use ftl_harness::serve::{spawn, ServeConfig};
use ftl_core::control::ControlParams;
use ftl_harness::scenario::Scenario;
use ftl_harness::train::{cmd_eval, cmd_train, ModelKind, Preset, TrainOptions};

#[derive(Parser)]
#[command(name = "ftl", version, about = "Follow-the-leader simulation, training and control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Variant {
    Grouped,
    Standard,
}

impl From<Variant> for ConvVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Grouped => ConvVariant::Grouped,
            Variant::Standard => ConvVariant::Standard,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Record expert-driven logs for a scenario.
    Collect {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a classifier or regressor on collected logs.
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Directory written by `ftl collect`.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long, value_enum, default_value = "grouped")]
        variant: Variant,
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        #[arg(long, short)]
        verbose: bool,
    },
    /// Score a checkpoint on its held-out split and print a JSON report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Data directory, if it moved since training.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop drive of a lap, vanish or random-walk scenario.
    Drive {
        #[arg(long)]
        scenario: PathBuf,
        /// Classifier and regressor checkpoints; without them the expert drives.
        #[arg(long, num_args = 1)]
        checkpoint: Vec<PathBuf>,
        /// CSV trace to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seconds to drive; defaults to the scenario's length.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Training throughput and the grouped-vs-standard layer timing.
    Bench {
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        /// Minibatch size; 8 for the classifier and 1 for the regressor by default.
        #[arg(long)]
        batch: Option<usize>,
        /// Benchmark one variant only.
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        #[arg(long, default_value_t = 10)]
        passes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the simulation live behind a WebSocket endpoint.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        /// Classifier and regressor checkpoints for auto mode.
        #[arg(long, num_args = 1)]
        checkpoint: Vec<PathBuf>,
        /// Scenario supplying the pedestrian identity and arena size.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

fn pilot(checkpoints: &[PathBuf]) -> Result<Pilot> {
    match checkpoints {
        [] => Ok(Pilot::Expert),
        [a, b] => Pilot::from_checkpoints(a, b),
        _ => bail!("pass either no --checkpoint or one classifier and one regressor"),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Collect { scenario, out, seed } => {
            let mut scn = Scenario::load(&scenario)?;
            if let Some(s) = seed {
                scn.seed = s;
            }
            let summary = cmd_collect(&scn, &out)?;
            println!("wrote {} frames to {} files in {}", summary.frames, summary.files.len(), out.display());
        }
        Command::Train { model, data, out, epochs, lr, seed, batch, variant, preset, verbose } => {
            let mut opts = TrainOptions::new(model, data, out);
            opts.epochs = epochs;
            opts.learning_rate = lr;
            opts.seed = seed;
            opts.batch_size = batch;
            opts.variant = variant.into();
            opts.preset = preset;
            opts.verbose = verbose;
            let s = cmd_train(&opts)?;
            if s.losses.is_empty() {
                bail!("training ran no epochs");
            }
            println!(
                "{}: {} params, {} train / {} test samples, final loss {:.6}, {:.1}s -> {}",
                s.model,
                s.params,
                s.train_samples,
                s.test_samples,
                s.losses.last().unwrap(),
                s.seconds,
                s.checkpoint.display()
            );
        }
        Command::Eval { checkpoint, data, out } => {
            let report = cmd_eval(&checkpoint, data.as_deref())?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(p) = out {
                std::fs::write(p, &text)?;
            }
            println!("{text}");
        }
        Command::Drive { scenario, checkpoint, out, duration } => {
            let scn = Scenario::load(&scenario)?;
            let mut p = pilot(&checkpoint)?;
            let rows = run_drive(scn.world()?, &mut p, duration.unwrap_or_else(|| scn.drive_duration()));
            if let Some(path) = out {
                write_trace(&path, &rows)?;
            }
            check_trace(&rows, &ControlParams::default()).map_err(anyhow::Error::msg)?;
            println!("{}", serde_json::to_string_pretty(&summarize(&rows, 5.0))?);
        }
        Command::Bench { model, batch, variant, preset, passes, seed } => {
            let layer = layer_timing(256, 4, 4, 6, 20, seed)?;
            let variants = match variant {
                Some(v) => vec![v.into()],
                None => vec![ConvVariant::Grouped, ConvVariant::Standard],
            };
            let models = match model {
                Some(m) => vec![m],
                None => vec![ModelKind::Mcn, ModelKind::Rn],
            };
            let mut reports = Vec::new();
            for m in models {
                let b = batch.unwrap_or(match m {
                    ModelKind::Mcn => 8,
                    ModelKind::Rn => 1,
                });
                for &v in &variants {
                    reports.push(model_throughput(m, preset, v, b, 8, passes, seed)?);
                }
            }
            let out = serde_json::json!({
                "layer": { "timing": layer, "speedup": layer.speedup() },
                "models": reports,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Serve { port, checkpoint, scenario } => {
            let mut cfg = ServeConfig { port, ..ServeConfig::default() };
            if let Some(path) = scenario {
                let scn = Scenario::load(&path)?;
                cfg.identity = scn.identity;
                cfg.arena_half_width = scn.arena;
            }
            cfg.checkpoints = match checkpoint.as_slice() {
                [] => None,
                [a, b] => Some((a.clone(), b.clone())),
                _ => bail!("pass either no --checkpoint or one classifier and one regressor"),
            };
            let handle = spawn(cfg)?;
            eprintln!("serving on ws://127.0.0.1:{}", handle.port());
            handle.join();
        }
    }
    Ok(())
}
