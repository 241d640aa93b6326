//! Two-dimensional stand-in for the vehicle, the pedestrian and the stereo camera.

pub mod expert;
pub mod pedestrian;
pub mod render;
pub mod vehicle;
pub mod world;

pub use expert::{expert_driver, ExpertParams};
pub use pedestrian::{Arena, ClockLap, ClockPosition, Identity, LapDirection, PedestrianState, RandomWalk, SteeredPedestrian, WalkParams};
pub use render::{render_stereo, CameraModel, StereoFrame, CHANNELS, IMAGE_H, IMAGE_W};
pub use vehicle::{vehicle_step, VehicleParams, VehicleState};
pub use world::{lap_start_pose, PedestrianScript, World, WorldState, DEFAULT_DT};
