//! World stepping: vehicle, scripted pedestrian and fixed-rate clock.

use serde::Serialize;

use super::expert::{expert_driver, ExpertParams};
use super::pedestrian::{ClockLap, PedestrianState, RandomWalk, SteeredPedestrian};
use super::render::{render_stereo, CameraModel, StereoFrame};
use super::vehicle::{vehicle_step, wrap_angle, VehicleParams, VehicleState};

pub const DEFAULT_DT: f64 = 0.1;

#[derive(Debug, Clone)]
pub enum PedestrianScript {
    Absent,
    Still(PedestrianState),
    Lap(ClockLap),
    Walk(RandomWalk),
    Steered(SteeredPedestrian),
}

impl PedestrianScript {
    fn state_at(&self, t: f64) -> Option<PedestrianState> {
        match self {
            PedestrianScript::Absent => None,
            PedestrianScript::Still(p) => Some(*p),
            PedestrianScript::Lap(lap) => Some(lap.state_at(t)),
            PedestrianScript::Walk(w) => Some(w.state()),
            PedestrianScript::Steered(p) => Some(p.state),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldState {
    pub av: VehicleState,
    pub pedestrian: Option<PedestrianState>,
    pub tick: u64,
    pub dt: f64,
}

impl WorldState {
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn distance(&self) -> Option<f64> {
        self.pedestrian.map(|p| (p.x - self.av.x).hypot(p.y - self.av.y))
    }
}

#[derive(Debug, Clone)]
pub struct World {
    state: WorldState,
    script: PedestrianScript,
    vanish_at: Option<f64>,
    pub vehicle: VehicleParams,
    pub camera: CameraModel,
    pub expert: ExpertParams,
}

impl World {
    pub fn new(av: VehicleState, script: PedestrianScript, dt: f64) -> Self {
        assert!(dt > 0.0, "time step must be positive");
        let pedestrian = script.state_at(0.0);
        Self {
            state: WorldState { av, pedestrian, tick: 0, dt },
            script,
            vanish_at: None,
            vehicle: VehicleParams::default(),
            camera: CameraModel::default(),
            expert: ExpertParams::default(),
        }
    }

    /// Remove the pedestrian from the scene from time `t` onward.
    pub fn with_vanish(mut self, t: f64) -> Self {
        self.vanish_at = Some(t);
        self.refresh_pedestrian();
        self
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.state.time()
    }

    fn refresh_pedestrian(&mut self) {
        let t = self.state.time();
        self.state.pedestrian = match self.vanish_at {
            Some(v) if t >= v => None,
            _ => self.script.state_at(t),
        };
    }

    pub fn step(&mut self, steering: f64, throttle: f64) {
        let dt = self.state.dt;
        self.state.av = vehicle_step(&self.state.av, steering, throttle, dt, &self.vehicle);
        match &mut self.script {
            PedestrianScript::Walk(w) => {
                w.step(dt);
            }
            PedestrianScript::Steered(p) => {
                p.step(dt);
            }
            _ => {}
        }
        self.state.tick += 1;
        self.refresh_pedestrian();
    }

    pub fn script_mut(&mut self) -> &mut PedestrianScript {
        &mut self.script
    }

    pub fn render(&self) -> StereoFrame {
        render_stereo(&self.state.av, self.state.pedestrian.as_ref(), &self.camera)
    }

    /// Expert command, or None with no pedestrian in the world.
    pub fn expert_command(&self) -> Option<(f64, f64)> {
        self.state
            .pedestrian
            .map(|p| expert_driver(&self.state.av, &p, &self.vehicle, &self.expert))
    }
}

/// Vehicle pose `trail` metres of arc behind the lap's starting point,
/// on the same circle, facing the pedestrian.
pub fn lap_start_pose(lap: &ClockLap, trail: f64) -> VehicleState {
    let phi = lap.angle_at_arc(-trail);
    let (x, y) = (lap.radius * phi.cos(), lap.radius * phi.sin());
    let p = lap.state_at(0.0);
    VehicleState {
        x,
        y,
        heading: wrap_angle((p.y - y).atan2(p.x - x)),
        speed: 0.0,
    }
}
