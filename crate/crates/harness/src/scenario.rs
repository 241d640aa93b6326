//! Scenario files: `key = value` lines, `#` comments.
//!
//! ```text
//! script = protocol        # stills | lap | protocol | random_walk | vanish
//! seed = 7
//! radius = 3.0
//! start = 12
//! direction = ccw
//! identity = A
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ftl_core::sim::{
    lap_start_pose, Arena, ClockLap, ClockPosition, Identity, LapDirection, PedestrianScript, PedestrianState, RandomWalk, VehicleState,
    WalkParams, World, DEFAULT_DT,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("{0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Script {
    /// Classifier stills: stationary views of each clock position plus empty scenes.
    Stills,
    /// One expert-driven lap.
    Lap,
    /// The full collection protocol: stills plus laps in both directions.
    Protocol,
    RandomWalk,
    /// A lap whose pedestrian disappears for good at `vanish_at`.
    Vanish,
}

impl FromStr for Script {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "stills" => Script::Stills,
            "lap" => Script::Lap,
            "protocol" => Script::Protocol,
            "random_walk" => Script::RandomWalk,
            "vanish" => Script::Vanish,
            other => return Err(format!("unknown script {other:?}")),
        })
    }
}

impl Script {
    pub fn name(self) -> &'static str {
        match self {
            Script::Stills => "stills",
            Script::Lap => "lap",
            Script::Protocol => "protocol",
            Script::RandomWalk => "random_walk",
            Script::Vanish => "vanish",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub script: Script,
    pub seed: u64,
    pub radius: f64,
    pub speed: f64,
    pub start: ClockPosition,
    pub direction: LapDirection,
    pub identity: Identity,
    /// Metres of arc the vehicle starts behind the pedestrian.
    pub trail: f64,
    pub laps_per_direction: usize,
    pub test_laps: usize,
    pub frames_per_position: usize,
    pub empty_frames: usize,
    pub heading_jitter_deg: f64,
    pub position_jitter: f64,
    /// Standard deviation of the steering noise added while recording laps.
    pub steering_noise: f64,
    pub throttle_noise: f64,
    pub arena: f64,
    pub duration: f64,
    pub vanish_at: f64,
    /// Seconds recorded after a lap ends and the pedestrian leaves.
    pub lap_tail: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            script: Script::Lap,
            seed: 0,
            radius: 3.0,
            speed: 1.0,
            start: ClockPosition::Twelve,
            direction: LapDirection::Ccw,
            identity: Identity::A,
            trail: 1.8,
            laps_per_direction: 10,
            test_laps: 2,
            frames_per_position: 450,
            empty_frames: 1400,
            heading_jitter_deg: 50.0,
            position_jitter: 1.5,
            steering_noise: 20.0,
            throttle_noise: 8.0,
            arena: 5.0,
            duration: 30.0,
            vanish_at: 8.0,
            lap_tail: 3.0,
        }
    }
}

/// Split `key = value` text into a map; later keys win.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, (usize, String)>, ScenarioError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ScenarioError::Parse {
            line: i + 1,
            detail: format!("expected key = value, got {line:?}"),
        })?;
        out.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
    }
    Ok(out)
}

fn field<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ScenarioError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| ScenarioError::Parse {
        line,
        detail: format!("{key}: {e}"),
    })
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut s = Scenario::default();
        let mut has_script = false;
        for (key, (line, v)) in parse_kv(text)? {
            let v = v.as_str();
            match key.as_str() {
                "script" => {
                    s.script = field(line, &key, v)?;
                    has_script = true;
                }
                "seed" => s.seed = field(line, &key, v)?,
                "radius" => s.radius = field(line, &key, v)?,
                "speed" => s.speed = field(line, &key, v)?,
                "start" => s.start = field(line, &key, v)?,
                "direction" => s.direction = field(line, &key, v)?,
                "identity" => s.identity = field(line, &key, v)?,
                "trail" => s.trail = field(line, &key, v)?,
                "laps_per_direction" => s.laps_per_direction = field(line, &key, v)?,
                "test_laps" => s.test_laps = field(line, &key, v)?,
                "frames_per_position" => s.frames_per_position = field(line, &key, v)?,
                "empty_frames" => s.empty_frames = field(line, &key, v)?,
                "heading_jitter_deg" => s.heading_jitter_deg = field(line, &key, v)?,
                "position_jitter" => s.position_jitter = field(line, &key, v)?,
                "steering_noise" => s.steering_noise = field(line, &key, v)?,
                "throttle_noise" => s.throttle_noise = field(line, &key, v)?,
                "arena" => s.arena = field(line, &key, v)?,
                "duration" => s.duration = field(line, &key, v)?,
                "vanish_at" => s.vanish_at = field(line, &key, v)?,
                "lap_tail" => s.lap_tail = field(line, &key, v)?,
                other => {
                    return Err(ScenarioError::Parse {
                        line,
                        detail: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        if !has_script {
            return Err(ScenarioError::Invalid("scenario must name a script".into()));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.into()));
        if !(self.radius > 0.0) || !(self.speed > 0.0) {
            return bad("radius and speed must be positive");
        }
        if !(self.arena > 0.0) || !(self.duration > 0.0) {
            return bad("arena and duration must be positive");
        }
        if self.lap_tail < 0.0 {
            return bad("lap_tail must be non-negative");
        }
        if self.steering_noise < 0.0 || self.throttle_noise < 0.0 || self.position_jitter < 0.0 || self.heading_jitter_deg < 0.0 {
            return bad("noise and jitter must be non-negative");
        }
        if self.script == Script::Protocol && self.laps_per_direction <= self.test_laps {
            return bad("protocol needs more laps per direction than held-out laps");
        }
        Ok(())
    }

    pub fn lap(&self) -> ClockLap {
        ClockLap {
            start: self.start,
            direction: self.direction,
            radius: self.radius,
            speed: self.speed,
            identity: self.identity,
        }
    }

    /// The simulated world a drive or a single recording starts from.
    pub fn world(&self) -> Result<World, ScenarioError> {
        match self.script {
            Script::Lap => {
                let lap = self.lap();
                Ok(World::new(lap_start_pose(&lap, self.trail), PedestrianScript::Lap(lap), DEFAULT_DT))
            }
            Script::Vanish => {
                let lap = self.lap();
                Ok(World::new(lap_start_pose(&lap, self.trail), PedestrianScript::Lap(lap), DEFAULT_DT).with_vanish(self.vanish_at))
            }
            Script::RandomWalk => {
                let start = PedestrianState {
                    x: self.trail,
                    y: 0.0,
                    heading: 0.0,
                    speed: self.speed,
                    identity: self.identity,
                };
                let walk = RandomWalk::new(self.seed, Arena::square(self.arena), WalkParams::default(), start);
                Ok(World::new(VehicleState::default(), PedestrianScript::Walk(walk), DEFAULT_DT))
            }
            Script::Stills | Script::Protocol => Err(ScenarioError::Invalid(format!(
                "script {} describes a data set, not a single drive",
                self.script.name()
            ))),
        }
    }

    /// Seconds a drive of this scenario lasts.
    pub fn drive_duration(&self) -> f64 {
        match self.script {
            Script::Lap => self.lap().duration(),
            _ => self.duration,
        }
    }

    /// Canonical text form; parses back to an equal scenario.
    pub fn to_text(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(t, "script = {}", self.script.name());
        let _ = writeln!(t, "seed = {}", self.seed);
        let _ = writeln!(t, "radius = {}", self.radius);
        let _ = writeln!(t, "speed = {}", self.speed);
        let _ = writeln!(t, "start = {}", self.start.hour());
        let _ = writeln!(t, "direction = {}", self.direction);
        let _ = writeln!(t, "identity = {}", self.identity);
        let _ = writeln!(t, "trail = {}", self.trail);
        let _ = writeln!(t, "laps_per_direction = {}", self.laps_per_direction);
        let _ = writeln!(t, "test_laps = {}", self.test_laps);
        let _ = writeln!(t, "frames_per_position = {}", self.frames_per_position);
        let _ = writeln!(t, "empty_frames = {}", self.empty_frames);
        let _ = writeln!(t, "heading_jitter_deg = {}", self.heading_jitter_deg);
        let _ = writeln!(t, "position_jitter = {}", self.position_jitter);
        let _ = writeln!(t, "steering_noise = {}", self.steering_noise);
        let _ = writeln!(t, "throttle_noise = {}", self.throttle_noise);
        let _ = writeln!(t, "arena = {}", self.arena);
        let _ = writeln!(t, "duration = {}", self.duration);
        let _ = writeln!(t, "vanish_at = {}", self.vanish_at);
        let _ = writeln!(t, "lap_tail = {}", self.lap_tail);
        t
    }
}
