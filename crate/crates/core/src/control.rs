//! Hierarchical follow controller: the classifier gates the regressor,
//! a circular sweep searches for a lost pedestrian, and an emergency stop
//! ends a search that times out.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::models::{pad_window, McnOutput, Mcn, ModelError, Rn};
use crate::tensor::Tensor;

pub trait PresenceClassifier {
    fn classify(&self, image: &Tensor) -> Result<McnOutput, ModelError>;
}

pub trait ControlRegressor {
    fn window_len(&self) -> usize;
    /// Normalized (steering ∈ [−1, 1], throttle ∈ [0, 1]) for a full window.
    fn regress(&self, frames: &[Tensor]) -> Result<(f64, f64), ModelError>;
}

impl PresenceClassifier for Mcn {
    fn classify(&self, image: &Tensor) -> Result<McnOutput, ModelError> {
        self.infer(image)
    }
}

impl ControlRegressor for Rn {
    fn window_len(&self) -> usize {
        self.seq_len()
    }

    fn regress(&self, frames: &[Tensor]) -> Result<(f64, f64), ModelError> {
        let out = self.infer(frames, None)?;
        Ok((out.steering, out.throttle))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepDirection {
    Left,
    Right,
}

impl SweepDirection {
    pub fn sign(self) -> f64 {
        match self {
            SweepDirection::Left => -1.0,
            SweepDirection::Right => 1.0,
        }
    }

    pub fn of(steering: f64) -> Self {
        if steering < 0.0 {
            SweepDirection::Left
        } else {
            SweepDirection::Right
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Tracking,
    SweepSearch { direction: SweepDirection, started_at: f64 },
    EmergencyStop,
}

/// Mode without its payload, for the transition table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeKind {
    Tracking,
    SweepSearch,
    EmergencyStop,
}

impl Mode {
    pub fn kind(&self) -> ModeKind {
        match self {
            Mode::Tracking => ModeKind::Tracking,
            Mode::SweepSearch { .. } => ModeKind::SweepSearch,
            Mode::EmergencyStop => ModeKind::EmergencyStop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Minimum |steering| (of ±100) for the regressor to override a search.
    pub steering_threshold: f64,
    pub lost_frames_limit: usize,
    pub sweep_timeout: f64,
    pub sweep_steering: f64,
    pub sweep_throttle: f64,
    pub moving_average_n: usize,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            steering_threshold: 15.0,
            lost_frames_limit: 10,
            sweep_timeout: 10.0,
            sweep_steering: 100.0,
            sweep_throttle: 30.0,
            moving_average_n: 10,
        }
    }
}

/// Ring buffer of recently commanded throttles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThrottleHistory {
    values: VecDeque<f64>,
    capacity: usize,
}

impl ThrottleHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "moving average needs at least one slot");
        Self {
            values: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn filled(capacity: usize, value: f64) -> Self {
        let mut h = Self::new(capacity);
        h.values.extend(std::iter::repeat_n(value, capacity));
        h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    fn push(&mut self, v: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(v);
    }
}

/// Mean of the previous commands (or `raw` itself when there are none),
/// then record `raw`.
pub fn smooth_throttle(history: &mut ThrottleHistory, raw: f64) -> f64 {
    let out = if history.is_empty() {
        raw
    } else {
        history.values.iter().sum::<f64>() / history.len() as f64
    };
    history.push(raw);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub mode: Mode,
    pub last_significant: SweepDirection,
    pub frames_since_seen: usize,
    pub throttle_history: ThrottleHistory,
    #[serde(skip)]
    pub frame_window: VecDeque<Tensor>,
    pub diagnostic: Option<String>,
}

impl ControllerState {
    pub fn new(params: &ControlParams) -> Self {
        Self {
            mode: Mode::Tracking,
            last_significant: SweepDirection::Left,
            frames_since_seen: 0,
            throttle_history: ThrottleHistory::new(params.moving_average_n),
            frame_window: VecDeque::new(),
            diagnostic: None,
        }
    }
}

pub fn reset(params: &ControlParams) -> ControllerState {
    ControllerState::new(params)
}

/// Successor mode for one tick.
///
/// `within_recovery`: the pedestrian has been missing for no more than the
/// lost-frames limit (counting this tick). `significant`: the regressor's
/// steering magnitude reaches the threshold. `timed_out`: an ongoing sweep
/// has lasted at least the sweep timeout.
pub fn transition(mode: ModeKind, present: bool, within_recovery: bool, significant: bool, timed_out: bool) -> ModeKind {
    match mode {
        ModeKind::EmergencyStop => ModeKind::EmergencyStop,
        _ if present || within_recovery || significant => ModeKind::Tracking,
        ModeKind::SweepSearch if timed_out => ModeKind::EmergencyStop,
        _ => ModeKind::SweepSearch,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSource {
    Regressor,
    Sweep,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    /// [−100, 100], negative is left.
    pub steering: f64,
    /// [0, 100].
    pub throttle: f64,
    pub source: CommandSource,
    /// Classifier decision this tick.
    pub present: bool,
    /// Classifier probability of "present"; None when it did not run.
    pub p_present: Option<f64>,
    /// Steering the regressor proposed this tick, whether or not it was used.
    pub regressor_steering: Option<f64>,
}

impl Command {
    fn stop(present: bool, p_present: Option<f64>, regressor_steering: Option<f64>) -> Self {
        Self {
            steering: 0.0,
            throttle: 0.0,
            source: CommandSource::Stop,
            present,
            p_present,
            regressor_steering,
        }
    }
}

fn emergency(state: &mut ControllerState, why: String) -> Command {
    state.mode = Mode::EmergencyStop;
    state.diagnostic = Some(why);
    Command::stop(false, None, None)
}

/// One control tick on a fresh 6-channel image at simulated time `clock`.
pub fn controller_step(
    image: &Tensor,
    clock: f64,
    state: &mut ControllerState,
    params: &ControlParams,
    mcn: &impl PresenceClassifier,
    rn: &impl ControlRegressor,
) -> Command {
    if state.mode == Mode::EmergencyStop {
        return Command::stop(false, None, None);
    }
    let (seen, p_present) = match mcn.classify(image) {
        Ok(o) if o.p_present.is_finite() && o.p_absent.is_finite() => (o.present(), Some(o.p_present)),
        Ok(o) => return emergency(state, format!("classifier produced non-finite output {o:?}")),
        Err(e) => return emergency(state, format!("classifier failed: {e}")),
    };

    let len = rn.window_len();
    state.frame_window.push_back(image.clone());
    while state.frame_window.len() > len {
        state.frame_window.pop_front();
    }
    let window = pad_window(state.frame_window.make_contiguous(), len);
    let (steer_n, throttle_n) = match rn.regress(&window) {
        Ok((s, t)) if s.is_finite() && t.is_finite() => (s, t),
        Ok((s, t)) => return emergency(state, format!("regressor produced non-finite output ({s}, {t})")),
        Err(e) => return emergency(state, format!("regressor failed: {e}")),
    };
    let steering = (steer_n * 100.0).clamp(-100.0, 100.0);
    let raw_throttle = (throttle_n * 100.0).clamp(0.0, 100.0);

    if seen {
        state.frames_since_seen = 0;
    } else {
        state.frames_since_seen += 1;
    }
    let within_recovery = state.frames_since_seen <= params.lost_frames_limit;
    let significant = steering.abs() >= params.steering_threshold;
    let timed_out = matches!(state.mode, Mode::SweepSearch { started_at, .. } if clock - started_at >= params.sweep_timeout);

    match transition(state.mode.kind(), seen, within_recovery, significant, timed_out) {
        ModeKind::Tracking => {
            state.mode = Mode::Tracking;
            if significant {
                state.last_significant = SweepDirection::of(steering);
            }
            Command {
                steering,
                throttle: smooth_throttle(&mut state.throttle_history, raw_throttle),
                source: CommandSource::Regressor,
                present: seen,
                p_present,
                regressor_steering: Some(steering),
            }
        }
        ModeKind::SweepSearch => {
            let direction = match state.mode {
                Mode::SweepSearch { direction, .. } => direction,
                _ => {
                    let direction = state.last_significant;
                    state.mode = Mode::SweepSearch { direction, started_at: clock };
                    direction
                }
            };
            Command {
                steering: params.sweep_steering * direction.sign(),
                throttle: params.sweep_throttle,
                source: CommandSource::Sweep,
                present: seen,
                p_present,
                regressor_steering: Some(steering),
            }
        }
        ModeKind::EmergencyStop => {
            state.mode = Mode::EmergencyStop;
            state.diagnostic = Some(format!("sweep search timed out at t = {clock:.1} s"));
            Command::stop(seen, p_present, Some(steering))
        }
    }
}

/// Controller bundled with its models and state.
pub struct Controller<M, R> {
    pub params: ControlParams,
    pub state: ControllerState,
    pub mcn: M,
    pub rn: R,
}

impl<M: PresenceClassifier, R: ControlRegressor> Controller<M, R> {
    pub fn new(mcn: M, rn: R, params: ControlParams) -> Self {
        Self {
            state: ControllerState::new(&params),
            params,
            mcn,
            rn,
        }
    }

    pub fn step(&mut self, image: &Tensor, clock: f64) -> Command {
        controller_step(image, clock, &mut self.state, &self.params, &self.mcn, &self.rn)
    }

    pub fn reset(&mut self) {
        self.state = reset(&self.params);
    }
}
