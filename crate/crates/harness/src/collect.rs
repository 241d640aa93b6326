//! Expert data collection: classifier stills and regressor laps.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ftl_core::datalog::{FrameRecord, LogHeader, LogWriter};
use ftl_core::sim::{
    lap_start_pose, render_stereo, CameraModel, ClockLap, ClockPosition, Identity, LapDirection, PedestrianScript, PedestrianState,
    VehicleState, World, CHANNELS, DEFAULT_DT, IMAGE_H, IMAGE_W,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scenario::{Scenario, Script};

pub const STILLS_FILE: &str = "stills.ftllog";
pub const LAP_PREFIX: &str = "lap_";
pub const LOG_EXT: &str = "ftllog";

/// Smoothing of the steering/throttle perturbation injected while recording.
const NOISE_PERSISTENCE: f64 = 0.9;

/// One recorded lap of the protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LapPlan {
    pub index: usize,
    pub direction: LapDirection,
    pub identity: Identity,
    pub start: ClockPosition,
    pub seed: u64,
}

impl LapPlan {
    pub fn file_name(&self) -> String {
        format!(
            "{LAP_PREFIX}{:02}_{}_{}_{}.{LOG_EXT}",
            self.index,
            self.direction,
            self.identity,
            self.start.hour()
        )
    }

    pub fn descriptor(&self, scn: &Scenario) -> String {
        let mut t = scn.to_text();
        let _ = writeln!(t, "lap.index = {}", self.index);
        let _ = writeln!(t, "lap.direction = {}", self.direction);
        let _ = writeln!(t, "lap.identity = {}", self.identity);
        let _ = writeln!(t, "lap.start = {}", self.start.hour());
        let _ = writeln!(t, "lap.seed = {}", self.seed);
        t
    }
}

/// Laps for both directions, cycling identities and then start positions.
pub fn protocol_laps(scn: &Scenario) -> Vec<LapPlan> {
    let mut out = Vec::new();
    for (d, direction) in [LapDirection::Cw, LapDirection::Ccw].into_iter().enumerate() {
        for i in 0..scn.laps_per_direction {
            out.push(LapPlan {
                index: out.len(),
                direction,
                identity: Identity::ALL[i % 2],
                start: ClockPosition::ALL[(i / 2) % 4],
                seed: scn.seed.wrapping_mul(1000).wrapping_add((d * 100 + i) as u64),
            });
        }
    }
    out
}

fn header(descriptor: String) -> LogHeader {
    LogHeader::new([CHANNELS, IMAGE_H, IMAGE_W], DEFAULT_DT, descriptor)
}

/// Drive `world` with the expert for `ticks` steps, labelling every frame
/// with the clean expert command while the vehicle executes a perturbed one.
pub fn record_expert_run(
    mut world: World,
    ticks: usize,
    scn: &Scenario,
    seed: u64,
    mut sink: impl FnMut(FrameRecord) -> Result<()>,
) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innovation = (1.0 - NOISE_PERSISTENCE * NOISE_PERSISTENCE).sqrt();
    let (mut ns, mut nt) = (0.0, 0.0);
    for tick in 0..ticks {
        let frame = world.render();
        let state = world.state();
        let identity = state.pedestrian.map(|p| p.identity);
        let (s, t) = world.expert_command().unwrap_or((0.0, 0.0));
        sink(FrameRecord::new(tick as u64, state.time(), &frame.image, s, t, frame.visible, identity))?;
        let zs: f64 = rng.sample(StandardNormal);
        let zt: f64 = rng.sample(StandardNormal);
        ns = NOISE_PERSISTENCE * ns + innovation * scn.steering_noise * zs;
        nt = NOISE_PERSISTENCE * nt + innovation * scn.throttle_noise * zt;
        world.step((s + ns).clamp(-100.0, 100.0), (t + nt).clamp(0.0, 100.0));
    }
    Ok(ticks)
}

/// The world for one protocol lap: the lap itself, then `lap_tail`
/// seconds with the pedestrian gone.
pub fn lap_world(scn: &Scenario, plan: &LapPlan) -> (World, usize) {
    let lap = ClockLap {
        start: plan.start,
        direction: plan.direction,
        radius: scn.radius,
        speed: scn.speed,
        identity: plan.identity,
    };
    let ticks = ((lap.duration() + scn.lap_tail) / DEFAULT_DT).ceil() as usize;
    let world = World::new(lap_start_pose(&lap, scn.trail), PedestrianScript::Lap(lap), DEFAULT_DT).with_vanish(lap.duration());
    (world, ticks)
}

pub fn record_lap(scn: &Scenario, plan: &LapPlan, sink: impl FnMut(FrameRecord) -> Result<()>) -> Result<usize> {
    let (world, ticks) = lap_world(scn, plan);
    record_expert_run(world, ticks, scn, plan.seed, sink)
}

/// Stationary views: for each identity and clock position, the vehicle sits
/// near the centre looking roughly toward the pedestrian; then empty scenes.
pub fn record_stills(scn: &Scenario, mut sink: impl FnMut(FrameRecord) -> Result<()>) -> Result<usize> {
    let cam = CameraModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(scn.seed ^ 0x5717_1155);
    let jitter = scn.heading_jitter_deg.to_radians();
    let mut tick = 0u64;
    let mut emit = |av: &VehicleState, ped: Option<&PedestrianState>, sink: &mut dyn FnMut(FrameRecord) -> Result<()>| {
        let frame = render_stereo(av, ped, &cam);
        let rec = FrameRecord::new(tick, tick as f64 * DEFAULT_DT, &frame.image, 0.0, 0.0, frame.visible, ped.map(|p| p.identity));
        tick += 1;
        sink(rec)
    };
    let disk = |rng: &mut ChaCha8Rng| {
        let r = scn.position_jitter * rng.gen::<f64>().sqrt();
        let a = rng.gen::<f64>() * TAU;
        (r * a.cos(), r * a.sin())
    };
    for identity in Identity::ALL {
        for pos in ClockPosition::ALL {
            for _ in 0..scn.frames_per_position {
                let (x, y) = disk(&mut rng);
                let ped = PedestrianState {
                    x: scn.radius * pos.angle().cos(),
                    y: scn.radius * pos.angle().sin(),
                    heading: rng.gen::<f64>() * TAU,
                    speed: 0.0,
                    identity,
                };
                let bearing = (ped.y - y).atan2(ped.x - x);
                let av = VehicleState {
                    x,
                    y,
                    heading: bearing + rng.gen_range(-jitter..=jitter),
                    speed: 0.0,
                };
                emit(&av, Some(&ped), &mut sink)?;
            }
        }
    }
    for _ in 0..scn.empty_frames {
        let (x, y) = disk(&mut rng);
        let av = VehicleState {
            x,
            y,
            heading: rng.gen::<f64>() * TAU,
            speed: 0.0,
        };
        emit(&av, None, &mut sink)?;
    }
    Ok(tick as usize)
}

fn write_with(path: &Path, descriptor: String, f: impl FnOnce(&mut dyn FnMut(FrameRecord) -> Result<()>) -> Result<usize>) -> Result<usize> {
    let mut w = LogWriter::create(path, header(descriptor)).with_context(|| format!("creating {}", path.display()))?;
    f(&mut |r| w.append(&r).map_err(Into::into))?;
    Ok(w.finish()? as usize)
}

#[derive(Debug, Clone, Default)]
pub struct CollectSummary {
    pub files: Vec<PathBuf>,
    pub frames: usize,
}

/// Run the scenario's collection script and write its logs into `out_dir`.
pub fn cmd_collect(scn: &Scenario, out_dir: &Path) -> Result<CollectSummary> {
    std::fs::create_dir_all(out_dir)?;
    let mut summary = CollectSummary::default();
    let mut add = |path: PathBuf, n: usize| {
        summary.files.push(path);
        summary.frames += n;
    };
    if matches!(scn.script, Script::Stills | Script::Protocol) {
        let path = out_dir.join(STILLS_FILE);
        let n = write_with(&path, scn.to_text(), |sink| record_stills(scn, sink))?;
        add(path, n);
    }
    match scn.script {
        Script::Protocol => {
            for plan in protocol_laps(scn) {
                let path = out_dir.join(plan.file_name());
                let n = write_with(&path, plan.descriptor(scn), |sink| record_lap(scn, &plan, sink))?;
                add(path, n);
            }
        }
        Script::Lap => {
            let plan = LapPlan {
                index: 0,
                direction: scn.direction,
                identity: scn.identity,
                start: scn.start,
                seed: scn.seed,
            };
            let path = out_dir.join(plan.file_name());
            let n = write_with(&path, plan.descriptor(scn), |sink| record_lap(scn, &plan, sink))?;
            add(path, n);
        }
        Script::RandomWalk => {
            let path = out_dir.join(format!("walk.{LOG_EXT}"));
            let ticks = (scn.duration / DEFAULT_DT).ceil() as usize;
            let world = scn.world()?;
            let n = write_with(&path, scn.to_text(), |sink| record_expert_run(world, ticks, scn, scn.seed, sink))?;
            add(path, n);
        }
        Script::Stills => {}
        Script::Vanish => bail!("the vanish script is for closed-loop drives, not data collection"),
    }
    Ok(summary)
}
