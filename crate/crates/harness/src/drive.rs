//! `ftl drive`: closed-loop runs of the controller (or the expert) in the
//! simulator, with a per-tick trace.

use std::path::Path;

use anyhow::{Context, Result};
use ftl_core::control::{transition, CommandSource, ControlParams, Controller, Mode, ModeKind};
use ftl_core::models::{Mcn, Rn};
use ftl_core::sim::World;
use serde::{Deserialize, Serialize};

use crate::train::{load_model, Loaded};

pub enum Pilot {
    /// The scripted pure-pursuit demonstrator.
    Expert,
    Learned(Box<Controller<Mcn, Rn>>),
}

impl Pilot {
    pub fn learned(mcn: Mcn, rn: Rn, params: ControlParams) -> Self {
        Pilot::Learned(Box::new(Controller::new(mcn, rn, params)))
    }

    /// Load a classifier and a regressor checkpoint, in either order.
    pub fn from_checkpoints(a: &Path, b: &Path) -> Result<Self> {
        let (mut mcn, mut rn) = (None, None);
        for p in [a, b] {
            match load_model(p)? {
                Loaded::Mcn(m, _) => mcn = Some(m),
                Loaded::Rn(r, _) => rn = Some(r),
            }
        }
        Ok(Pilot::learned(
            mcn.context("no classifier checkpoint given")?,
            rn.context("no regressor checkpoint given")?,
            ControlParams::default(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tick: u64,
    pub time: f64,
    pub av_x: f64,
    pub av_y: f64,
    pub av_heading: f64,
    pub av_speed: f64,
    pub ped_x: Option<f64>,
    pub ped_y: Option<f64>,
    pub visible: bool,
    pub distance: Option<f64>,
    pub p_present: Option<f64>,
    /// Classifier decision; None for the expert.
    pub present: Option<bool>,
    pub regressor_steering: Option<f64>,
    pub mode: String,
    pub steering: f64,
    pub throttle: f64,
    pub source: String,
}

pub fn mode_name(mode: &Mode) -> &'static str {
    match mode {
        Mode::Tracking => "tracking",
        Mode::SweepSearch { .. } => "sweep_search",
        Mode::EmergencyStop => "emergency_stop",
    }
}

fn source_name(s: CommandSource) -> &'static str {
    match s {
        CommandSource::Regressor => "regressor",
        CommandSource::Sweep => "sweep",
        CommandSource::Stop => "stop",
    }
}

/// Drive for `duration` seconds. Each row records the state a command was
/// computed from together with that command.
pub fn run_drive(mut world: World, pilot: &mut Pilot, duration: f64) -> Vec<TraceRow> {
    let ticks = (duration / world.state().dt).round() as usize;
    let mut rows = Vec::with_capacity(ticks);
    for _ in 0..ticks {
        let frame = world.render();
        let state = world.state().clone();
        let (steering, throttle, mode, source, cmd) = match pilot {
            Pilot::Expert => {
                let (s, t) = world.expert_command().unwrap_or((0.0, 0.0));
                (s, t, "expert", "expert", None)
            }
            Pilot::Learned(c) => {
                let cmd = c.step(&frame.image, state.time());
                (cmd.steering, cmd.throttle, mode_name(&c.state.mode), source_name(cmd.source), Some(cmd))
            }
        };
        rows.push(TraceRow {
            tick: state.tick,
            time: state.time(),
            av_x: state.av.x,
            av_y: state.av.y,
            av_heading: state.av.heading,
            av_speed: state.av.speed,
            ped_x: state.pedestrian.map(|p| p.x),
            ped_y: state.pedestrian.map(|p| p.y),
            visible: frame.visible,
            distance: state.distance(),
            p_present: cmd.and_then(|c| c.p_present),
            present: cmd.map(|c| c.present),
            regressor_steering: cmd.and_then(|c| c.regressor_steering),
            mode: mode.to_string(),
            steering,
            throttle,
            source: source.to_string(),
        });
        world.step(steering, throttle);
    }
    rows
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn mode_kind(name: &str) -> Option<ModeKind> {
    match name {
        "tracking" => Some(ModeKind::Tracking),
        "sweep_search" => Some(ModeKind::SweepSearch),
        "emergency_stop" => Some(ModeKind::EmergencyStop),
        _ => None,
    }
}

/// Check a controller trace: commands in range, each mode change legal when
/// replayed through [`transition`], sweeps at full lock in one direction
/// and zero commands once stopped. Expert rows are only range-checked.
pub fn check_trace(rows: &[TraceRow], params: &ControlParams) -> Result<(), String> {
    let mut prev = ModeKind::Tracking;
    let mut missing = 0usize;
    let mut sweep: Option<(f64, f64)> = None;
    for r in rows {
        let at = |m: &str| format!("tick {}: {m}", r.tick);
        if !(-100.0..=100.0).contains(&r.steering) || !(0.0..=100.0).contains(&r.throttle) {
            return Err(at(&format!("command ({}, {}) out of range", r.steering, r.throttle)));
        }
        let Some(kind) = mode_kind(&r.mode) else { continue };
        let expected = match (prev, r.present, r.regressor_steering, r.p_present) {
            (ModeKind::EmergencyStop, ..) => ModeKind::EmergencyStop,
            (_, Some(present), Some(rs), Some(_)) => {
                missing = if present { 0 } else { missing + 1 };
                let timed_out = prev == ModeKind::SweepSearch && sweep.is_some_and(|(t0, _)| r.time - t0 >= params.sweep_timeout);
                transition(prev, present, missing <= params.lost_frames_limit, rs.abs() >= params.steering_threshold, timed_out)
            }
            // A model fault stops the vehicle from any mode.
            _ => ModeKind::EmergencyStop,
        };
        if kind != expected {
            return Err(at(&format!("{prev:?} -> {kind:?}, expected {expected:?}")));
        }
        match kind {
            ModeKind::EmergencyStop => {
                if r.steering != 0.0 || r.throttle != 0.0 {
                    return Err(at("nonzero command while stopped"));
                }
            }
            ModeKind::SweepSearch => {
                if r.steering.abs() != params.sweep_steering || r.throttle != params.sweep_throttle {
                    return Err(at("sweep command is not full lock at sweep throttle"));
                }
                match sweep {
                    Some((_, sign)) if prev == ModeKind::SweepSearch && sign != r.steering.signum() => {
                        return Err(at("sweep changed direction"));
                    }
                    Some(_) if prev == ModeKind::SweepSearch => {}
                    _ => sweep = Some((r.time, r.steering.signum())),
                }
            }
            ModeKind::Tracking => sweep = None,
        }
        prev = kind;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSummary {
    pub ticks: usize,
    /// Distance band after the transient, over ticks with a pedestrian.
    pub min_distance: Option<f64>,
    pub max_distance: Option<f64>,
    pub final_mode: Option<&'static str>,
    pub final_command: Option<(f64, f64)>,
}

pub fn summarize(rows: &[TraceRow], transient: f64) -> DriveSummary {
    let settled: Vec<f64> = rows.iter().filter(|r| r.time >= transient).filter_map(|r| r.distance).collect();
    let last = rows.last();
    DriveSummary {
        ticks: rows.len(),
        min_distance: settled.iter().copied().reduce(f64::min),
        max_distance: settled.iter().copied().reduce(f64::max),
        final_mode: last.map(|r| match r.mode.as_str() {
            "tracking" => "tracking",
            "sweep_search" => "sweep_search",
            "emergency_stop" => "emergency_stop",
            _ => "expert",
        }),
        final_command: last.map(|r| (r.steering, r.throttle)),
    }
}
