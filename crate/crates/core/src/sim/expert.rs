//! Pure-pursuit expert that stands in for the human teleoperator.

use serde::{Deserialize, Serialize};

use super::pedestrian::PedestrianState;
use super::vehicle::{VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertParams {
    /// Distance at which throttle reaches zero, metres.
    pub standoff: f64,
    /// Throttle units per metre beyond the standoff.
    pub gain: f64,
    pub max_throttle: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        Self {
            standoff: 1.5,
            gain: 100.0,
            max_throttle: 60.0,
        }
    }
}

/// Steering and throttle toward the pedestrian; steering is negative for
/// a pedestrian on the left.
pub fn expert_driver(av: &VehicleState, ped: &PedestrianState, vehicle: &VehicleParams, params: &ExpertParams) -> (f64, f64) {
    let (dx, dy) = (ped.x - av.x, ped.y - av.y);
    let (c, s) = (av.heading.cos(), av.heading.sin());
    let left = -dx * s + dy * c;
    let d2 = dx * dx + dy * dy;
    if d2 < 1e-12 {
        return (0.0, 0.0);
    }
    let curvature = 2.0 * left / d2;
    let wheel = (curvature * vehicle.wheelbase).atan();
    let steering = (-wheel / vehicle.max_wheel_angle * 100.0).clamp(-100.0, 100.0);
    let throttle = (params.gain * (d2.sqrt() - params.standoff)).clamp(0.0, params.max_throttle);
    (steering, throttle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::pedestrian::Identity;

    fn ped(x: f64, y: f64) -> PedestrianState {
        PedestrianState {
            x,
            y,
            heading: 0.0,
            speed: 0.0,
            identity: Identity::B,
        }
    }

    #[test]
    fn standoff_dead_ahead_is_equilibrium() {
        let out = expert_driver(&VehicleState::default(), &ped(1.5, 0.0), &VehicleParams::default(), &ExpertParams::default());
        assert_eq!(out, (0.0, 0.0));
    }

    #[test]
    fn pedestrian_on_left_steers_negative() {
        let a = 30f64.to_radians();
        let (s, t) = expert_driver(&VehicleState::default(), &ped(2.0 * a.cos(), 2.0 * a.sin()), &VehicleParams::default(), &ExpertParams::default());
        assert!(s < 0.0);
        assert!(t > 0.0);
        let (s, _) = expert_driver(&VehicleState::default(), &ped(2.0 * a.cos(), -2.0 * a.sin()), &VehicleParams::default(), &ExpertParams::default());
        assert!(s > 0.0);
    }

    #[test]
    fn throttle_is_capped() {
        let (_, t) = expert_driver(&VehicleState::default(), &ped(10.0, 0.0), &VehicleParams::default(), &ExpertParams::default());
        assert_eq!(t, 60.0);
    }
}
