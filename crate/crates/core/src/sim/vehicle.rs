//! Kinematic bicycle model for the scaled vehicle.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    /// Wheel angle at full lock, radians.
    pub max_wheel_angle: f64,
    pub max_speed: f64,
    /// Time constant of the first-order speed lag, seconds.
    pub speed_tau: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.5,
            max_wheel_angle: 30f64.to_radians(),
            max_speed: 2.0,
            speed_tau: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Radians, counter-clockwise from +x.
    pub heading: f64,
    pub speed: f64,
}

impl VehicleParams {
    /// Wheel angle for a steering command; negative commands steer left,
    /// which is a counter-clockwise (positive) wheel angle.
    pub fn wheel_angle(&self, steering: f64) -> f64 {
        -(steering.clamp(-100.0, 100.0) / 100.0) * self.max_wheel_angle
    }

    pub fn target_speed(&self, throttle: f64) -> f64 {
        throttle.clamp(0.0, 100.0) / 100.0 * self.max_speed
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    if a > -std::f64::consts::PI && a <= std::f64::consts::PI {
        return a;
    }
    let t = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU);
    t - std::f64::consts::PI
}

/// Advance one step. Speed relaxes exponentially toward the throttle
/// target; the pose follows the exact arc for the distance covered.
pub fn vehicle_step(state: &VehicleState, steering: f64, throttle: f64, dt: f64, params: &VehicleParams) -> VehicleState {
    let target = params.target_speed(throttle);
    let decay = (-dt / params.speed_tau).exp();
    let speed = target + (state.speed - target) * decay;
    let dist = target * dt + (state.speed - target) * params.speed_tau * (1.0 - decay);
    let curvature = params.wheel_angle(steering).tan() / params.wheelbase;
    let turn = curvature * dist;
    let (x, y) = if turn.abs() < 1e-12 {
        (state.x + dist * state.heading.cos(), state.y + dist * state.heading.sin())
    } else {
        let h1 = state.heading + turn;
        (
            state.x + (h1.sin() - state.heading.sin()) / curvature,
            state.y - (h1.cos() - state.heading.cos()) / curvature,
        )
    };
    VehicleState {
        x,
        y,
        heading: wrap_angle(state.heading + turn),
        speed: speed.clamp(0.0, params.max_speed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn idle_vehicle_comes_to_rest() {
        let mut s = VehicleState { speed: 1.5, ..Default::default() };
        for _ in 0..200 {
            s = vehicle_step(&s, 40.0, 0.0, 0.1, &p());
        }
        let before = s;
        s = vehicle_step(&s, 40.0, 0.0, 0.1, &p());
        assert!(s.speed < 1e-12);
        assert!((s.x - before.x).abs() < 1e-12 && (s.y - before.y).abs() < 1e-12);
    }

    #[test]
    fn zero_steering_goes_straight() {
        let mut s = VehicleState { heading: 0.7, ..Default::default() };
        for _ in 0..50 {
            s = vehicle_step(&s, 0.0, 60.0, 0.1, &p());
        }
        assert_eq!(s.heading, 0.7);
        assert!((s.y.atan2(s.x) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn full_lock_closes_analytic_circle() {
        let params = p();
        let radius = params.wheelbase / params.max_wheel_angle.tan();
        assert!((radius - 0.866).abs() < 1e-3);
        let mut s = VehicleState { speed: 1.0, ..Default::default() };
        let period = std::f64::consts::TAU * radius / 1.0;
        let steps = (period / 0.1).floor() as usize;
        let mut max_off = 0.0f64;
        for _ in 0..steps {
            s = vehicle_step(&s, 100.0, 50.0, 0.1, &params);
            // Full right lock: centre of the circle is at (0, -r).
            max_off = max_off.max(((s.x).hypot(s.y + radius) - radius).abs());
        }
        s = vehicle_step(&s, 100.0, 50.0, period - steps as f64 * 0.1, &params);
        assert!(s.x.hypot(s.y) < 0.02, "ended at ({}, {})", s.x, s.y);
        assert!(max_off < 1e-9);
    }

    #[test]
    fn negative_steering_turns_left() {
        let s = VehicleState { speed: 1.0, ..Default::default() };
        let next = vehicle_step(&s, -50.0, 50.0, 0.1, &p());
        assert!(next.heading > 0.0 && next.y > 0.0);
    }

    #[test]
    fn inputs_are_clamped_and_speed_bounded() {
        let mut s = VehicleState::default();
        for _ in 0..100 {
            s = vehicle_step(&s, 1e6, 1e6, 0.1, &p());
            assert!(s.speed <= 2.0);
        }
        let clamped = vehicle_step(&s, 100.0, 100.0, 0.1, &p());
        assert_eq!(vehicle_step(&s, 500.0, 900.0, 0.1, &p()), clamped);
    }
}
