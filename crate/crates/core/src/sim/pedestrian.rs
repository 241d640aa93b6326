//! Scripted pedestrian trajectories: clock-face laps and a bounded random walk.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vehicle::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Identity {
    A,
    B,
}

impl Identity {
    pub const ALL: [Identity; 2] = [Identity::A, Identity::B];

    /// RGB in [0, 1].
    pub fn color(self) -> [f64; 3] {
        match self {
            Identity::A => [0.85, 0.2, 0.15],
            Identity::B => [0.15, 0.3, 0.9],
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Identity::A => 1,
            Identity::B => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Identity::A),
            2 => Some(Identity::B),
            _ => None,
        }
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Identity::A => "A",
            Identity::B => "B",
        })
    }
}

impl FromStr for Identity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "A" | "a" => Ok(Identity::A),
            "B" | "b" => Ok(Identity::B),
            other => Err(format!("unknown pedestrian identity {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedestrianState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub identity: Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClockPosition {
    Twelve,
    Three,
    Six,
    Nine,
}

impl ClockPosition {
    pub const ALL: [ClockPosition; 4] = [ClockPosition::Twelve, ClockPosition::Three, ClockPosition::Six, ClockPosition::Nine];

    /// Polar angle of the position on a circle centred at the origin,
    /// with 12 o'clock on +y and 3 o'clock on +x.
    pub fn angle(self) -> f64 {
        match self {
            ClockPosition::Twelve => FRAC_PI_2,
            ClockPosition::Three => 0.0,
            ClockPosition::Six => -FRAC_PI_2,
            ClockPosition::Nine => PI,
        }
    }

    pub fn hour(self) -> u8 {
        match self {
            ClockPosition::Twelve => 12,
            ClockPosition::Three => 3,
            ClockPosition::Six => 6,
            ClockPosition::Nine => 9,
        }
    }
}

impl FromStr for ClockPosition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "12" => Ok(ClockPosition::Twelve),
            "3" => Ok(ClockPosition::Three),
            "6" => Ok(ClockPosition::Six),
            "9" => Ok(ClockPosition::Nine),
            other => Err(format!("clock position must be 12, 3, 6 or 9, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LapDirection {
    Cw,
    Ccw,
}

impl LapDirection {
    pub fn sign(self) -> f64 {
        match self {
            LapDirection::Ccw => 1.0,
            LapDirection::Cw => -1.0,
        }
    }
}

impl fmt::Display for LapDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LapDirection::Cw => "cw",
            LapDirection::Ccw => "ccw",
        })
    }
}

impl FromStr for LapDirection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "cw" => Ok(LapDirection::Cw),
            "ccw" => Ok(LapDirection::Ccw),
            other => Err(format!("direction must be cw or ccw, got {other:?}")),
        }
    }
}

/// One circular lap about the origin from a clock position, then stop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockLap {
    pub start: ClockPosition,
    pub direction: LapDirection,
    pub radius: f64,
    pub speed: f64,
    pub identity: Identity,
}

impl ClockLap {
    pub fn new(start: ClockPosition, direction: LapDirection, identity: Identity) -> Self {
        Self {
            start,
            direction,
            radius: 3.0,
            speed: 1.0,
            identity,
        }
    }

    pub fn duration(&self) -> f64 {
        TAU * self.radius / self.speed
    }

    /// Polar angle after walking `arc` metres along the lap (may be negative).
    pub fn angle_at_arc(&self, arc: f64) -> f64 {
        self.start.angle() + self.direction.sign() * arc / self.radius
    }

    pub fn state_at(&self, t: f64) -> PedestrianState {
        let walking = t < self.duration();
        let arc = self.speed * t.clamp(0.0, self.duration());
        let phi = self.angle_at_arc(arc);
        PedestrianState {
            x: self.radius * phi.cos(),
            y: self.radius * phi.sin(),
            heading: wrap_angle(phi + self.direction.sign() * FRAC_PI_2),
            speed: if walking { self.speed } else { 0.0 },
            identity: self.identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl Arena {
    pub fn square(half: f64) -> Self {
        Self {
            min_x: -half,
            max_x: half,
            min_y: -half,
            max_y: half,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.min_x..=self.max_x).contains(&x) && (self.min_y..=self.max_y).contains(&y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    /// Largest heading change rate, rad/s.
    pub max_turn_rate: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Largest speed change per second.
    pub max_accel: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            max_turn_rate: 1.0,
            min_speed: 0.5,
            max_speed: 1.2,
            max_accel: 0.5,
        }
    }
}

/// Seeded random walk with bounded turn rate, reflecting at the arena walls.
#[derive(Debug, Clone)]
pub struct RandomWalk {
    pub arena: Arena,
    pub params: WalkParams,
    state: PedestrianState,
    rng: ChaCha8Rng,
}

fn reflect(v: f64, lo: f64, hi: f64) -> (f64, bool) {
    if v < lo {
        ((2.0 * lo - v).min(hi), true)
    } else if v > hi {
        ((2.0 * hi - v).max(lo), true)
    } else {
        (v, false)
    }
}

impl RandomWalk {
    pub fn new(seed: u64, arena: Arena, params: WalkParams, start: PedestrianState) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = start;
        state.speed = if params.max_speed > params.min_speed {
            rng.gen_range(params.min_speed..params.max_speed)
        } else {
            params.min_speed
        };
        state.x = state.x.clamp(arena.min_x, arena.max_x);
        state.y = state.y.clamp(arena.min_y, arena.max_y);
        Self { arena, params, state, rng }
    }

    pub fn state(&self) -> PedestrianState {
        self.state
    }

    pub fn step(&mut self, dt: f64) -> PedestrianState {
        let p = &self.params;
        let turn: f64 = self.rng.gen_range(-1.0..=1.0) * p.max_turn_rate;
        let accel: f64 = self.rng.gen_range(-1.0..=1.0) * p.max_accel;
        let s = &mut self.state;
        s.speed = (s.speed + accel * dt).clamp(p.min_speed, p.max_speed);
        s.heading = wrap_angle(s.heading + turn * dt);
        let (x, hit_x) = reflect(s.x + s.speed * dt * s.heading.cos(), self.arena.min_x, self.arena.max_x);
        let (y, hit_y) = reflect(s.y + s.speed * dt * s.heading.sin(), self.arena.min_y, self.arena.max_y);
        if hit_x {
            s.heading = wrap_angle(PI - s.heading);
        }
        if hit_y {
            s.heading = wrap_angle(-s.heading);
        }
        s.x = x;
        s.y = y;
        *s
    }
}

/// Pedestrian driven by live turn/speed input, kept inside an arena.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeredPedestrian {
    pub state: PedestrianState,
    pub arena: Arena,
    /// Heading rate at full turn input, rad/s.
    pub turn_rate: f64,
    /// −1 (left), 0 or 1 (right).
    pub turn: i8,
}

impl SteeredPedestrian {
    pub fn new(state: PedestrianState, arena: Arena) -> Self {
        Self {
            state,
            arena,
            turn_rate: 1.5,
            turn: 0,
        }
    }

    pub fn set_input(&mut self, turn: i8, speed: f64) {
        self.turn = turn.clamp(-1, 1);
        self.state.speed = speed.clamp(0.0, 1.2);
    }

    pub fn step(&mut self, dt: f64) -> PedestrianState {
        let s = &mut self.state;
        // A right turn is clockwise.
        s.heading = wrap_angle(s.heading - self.turn as f64 * self.turn_rate * dt);
        s.x = (s.x + s.speed * dt * s.heading.cos()).clamp(self.arena.min_x, self.arena.max_x);
        s.y = (s.y + s.speed * dt * s.heading.sin()).clamp(self.arena.min_y, self.arena.max_y);
        *s
    }
}
