//! Minimal stereo renderer: checkerboard ground, flat sky, and the
//! pedestrian as an upright camera-facing rectangle.

use serde::{Deserialize, Serialize};

use super::pedestrian::PedestrianState;
use super::vehicle::VehicleState;
use crate::tensor::Tensor;

pub const IMAGE_H: usize = 120;
pub const IMAGE_W: usize = 160;
pub const CHANNELS: usize = 6;

const SKY: [f64; 3] = [0.62, 0.74, 0.9];
const GROUND_LIGHT: [f64; 3] = [0.58, 0.56, 0.5];
const GROUND_DARK: [f64; 3] = [0.36, 0.35, 0.32];
const NEAR_PLANE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Focal length in pixels.
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    pub mount_height: f64,
    pub baseline: f64,
    pub ped_width: f64,
    pub ped_height: f64,
    pub checker: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            focal: 80.0,
            width: IMAGE_W,
            height: IMAGE_H,
            mount_height: 0.3,
            baseline: 0.12,
            ped_width: 0.5,
            ped_height: 1.7,
            checker: 0.5,
        }
    }
}

impl CameraModel {
    pub fn horizontal_fov(&self) -> f64 {
        2.0 * (self.width as f64 / 2.0 / self.focal).atan()
    }

    fn cx(&self) -> f64 {
        self.width as f64 / 2.0
    }

    fn cy(&self) -> f64 {
        self.height as f64 / 2.0
    }
}

/// Pixel-space bounds of the pedestrian in one image, half-open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
    pub depth: f64,
}

impl Projection {
    fn covers(&self, row: usize, col: usize) -> bool {
        let (u, v) = (col as f64 + 0.5, row as f64 + 0.5);
        u >= self.left && u < self.right && v >= self.top && v < self.bottom
    }

    pub fn center_u(&self) -> f64 {
        (self.left + self.right) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoFrame {
    /// `[6, H, W]`: left RGB then right RGB, values k/255 in [0, 1].
    pub image: Tensor,
    pub visible: bool,
}

/// Camera-frame coordinates of a world point: (forward, right).
fn to_camera(av: &VehicleState, x: f64, y: f64) -> (f64, f64) {
    let (dx, dy) = (x - av.x, y - av.y);
    let (c, s) = (av.heading.cos(), av.heading.sin());
    (dx * c + dy * s, dx * s - dy * c)
}

/// Project the pedestrian into the camera offset `lateral` metres to the
/// right of the vehicle axis. None if behind the near plane.
pub fn project(av: &VehicleState, ped: &PedestrianState, cam: &CameraModel, lateral: f64) -> Option<Projection> {
    let (z, right) = to_camera(av, ped.x, ped.y);
    if z <= NEAR_PLANE {
        return None;
    }
    let x = right - lateral;
    let f = cam.focal / z;
    Some(Projection {
        left: cam.cx() + f * (x - cam.ped_width / 2.0),
        right: cam.cx() + f * (x + cam.ped_width / 2.0),
        top: cam.cy() - f * (cam.ped_height - cam.mount_height),
        bottom: cam.cy() + f * cam.mount_height,
        depth: z,
    })
}

/// Left and right camera projections (left camera sits baseline/2 to the left).
pub fn project_stereo(av: &VehicleState, ped: &PedestrianState, cam: &CameraModel) -> (Option<Projection>, Option<Projection>) {
    (
        project(av, ped, cam, -cam.baseline / 2.0),
        project(av, ped, cam, cam.baseline / 2.0),
    )
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn draw_view(av: &VehicleState, cam: &CameraModel, lateral: f64, ped: Option<(&Projection, [f64; 3])>, out: &mut [f64]) -> bool {
    let (w, h) = (cam.width, cam.height);
    let plane = w * h;
    let (cx, cy) = (cam.cx(), cam.cy());
    let (c, s) = (av.heading.cos(), av.heading.sin());
    // Camera origin in world coordinates.
    let ox = av.x + lateral * s;
    let oy = av.y - lateral * c;
    let mut drew = false;
    for row in 0..h {
        let v = row as f64 + 0.5 - cy;
        for col in 0..w {
            let idx = row * w + col;
            let rgb = if let Some((_, color)) = ped.filter(|(p, _)| p.covers(row, col)) {
                drew = true;
                color
            } else if v > 0.0 {
                let z = cam.focal * cam.mount_height / v;
                let r = (col as f64 + 0.5 - cx) * z / cam.focal;
                let gx = ox + z * c + r * s;
                let gy = oy + z * s - r * c;
                let parity = ((gx / cam.checker).floor() + (gy / cam.checker).floor()).rem_euclid(2.0);
                if parity < 0.5 {
                    GROUND_LIGHT
                } else {
                    GROUND_DARK
                }
            } else {
                SKY
            };
            for ch in 0..3 {
                out[ch * plane + idx] = quantize(rgb[ch]);
            }
        }
    }
    drew
}

/// Render both views of the scene from the vehicle's cameras.
pub fn render_stereo(av: &VehicleState, ped: Option<&PedestrianState>, cam: &CameraModel) -> StereoFrame {
    let plane = cam.width * cam.height;
    let mut data = vec![0.0; CHANNELS * plane];
    let mut visible = false;
    for (view, lateral) in [(0usize, -cam.baseline / 2.0), (1, cam.baseline / 2.0)] {
        let proj = ped.and_then(|p| project(av, p, cam, lateral).map(|pr| (pr, p.identity.color())));
        let slot = &mut data[view * 3 * plane..(view + 1) * 3 * plane];
        visible |= draw_view(av, cam, lateral, proj.as_ref().map(|(p, col)| (p, *col)), slot);
    }
    StereoFrame {
        image: Tensor::new([CHANNELS, cam.height, cam.width], data).expect("renderer shape"),
        visible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::pedestrian::Identity;

    fn ped_at(x: f64, y: f64) -> PedestrianState {
        PedestrianState {
            x,
            y,
            heading: 0.0,
            speed: 0.0,
            identity: Identity::A,
        }
    }

    /// Column and row extents of identity-A pixels in one view.
    fn extent(frame: &StereoFrame, view: usize) -> Option<(f64, usize, usize)> {
        let color = Identity::A.color().map(quantize);
        let (mut cols, mut rows) = (Vec::new(), Vec::new());
        for r in 0..IMAGE_H {
            for c in 0..IMAGE_W {
                if (0..3).all(|ch| frame.image.at(&[view * 3 + ch, r, c]) == color[ch]) {
                    cols.push(c as f64 + 0.5);
                    rows.push(r);
                }
            }
        }
        if cols.is_empty() {
            return None;
        }
        let centroid = cols.iter().sum::<f64>() / cols.len() as f64;
        Some((centroid, *rows.iter().min().unwrap(), *rows.iter().max().unwrap()))
    }

    #[test]
    fn fov_is_ninety_degrees() {
        assert!((CameraModel::default().horizontal_fov().to_degrees() - 90.0).abs() < 1e-9);
    }

    #[test]
    fn pedestrian_behind_is_invisible() {
        let cam = CameraModel::default();
        let av = VehicleState::default();
        let with = render_stereo(&av, Some(&ped_at(-2.0, 0.1)), &cam);
        let without = render_stereo(&av, None, &cam);
        assert!(!with.visible);
        assert_eq!(with.image, without.image);
    }

    #[test]
    fn dead_ahead_disparity_matches_pinhole() {
        let cam = CameraModel::default();
        for depth in [1.0, 2.0, 3.0, 5.0] {
            let frame = render_stereo(&VehicleState::default(), Some(&ped_at(depth, 0.0)), &cam);
            assert!(frame.visible);
            let (ul, top_l, bot_l) = extent(&frame, 0).unwrap();
            let (ur, top_r, bot_r) = extent(&frame, 1).unwrap();
            let want = cam.focal * cam.baseline / depth;
            assert!(((ul - ur) - want).abs() <= 1.0, "depth {depth}: {} vs {want}", ul - ur);
            assert_eq!((top_l, bot_l), (top_r, bot_r));
        }
    }

    #[test]
    fn doubling_depth_halves_height() {
        let cam = CameraModel::default();
        let height = |d: f64| {
            let frame = render_stereo(&VehicleState::default(), Some(&ped_at(d, 0.0)), &cam);
            let (_, top, bot) = extent(&frame, 0).unwrap();
            (bot - top + 1) as f64
        };
        let (near, far) = (height(2.0), height(4.0));
        assert!((near / 2.0 - far).abs() <= 1.0, "{near} {far}");
    }

    #[test]
    fn visible_flag_tracks_drawn_pixels() {
        let cam = CameraModel::default();
        let av = VehicleState::default();
        // Sweep the pedestrian across the edge of the field of view.
        for k in 0..60 {
            let angle = (30.0 + k as f64).to_radians();
            let ped = ped_at(3.0 * angle.cos(), 3.0 * angle.sin());
            let frame = render_stereo(&av, Some(&ped), &cam);
            let drawn = extent(&frame, 0).is_some() || extent(&frame, 1).is_some();
            assert_eq!(frame.visible, drawn, "angle {angle}");
        }
    }

    #[test]
    fn pixels_are_eight_bit_levels_in_unit_range() {
        let frame = render_stereo(&VehicleState { x: 0.3, y: -0.2, heading: 0.4, speed: 0.0 }, Some(&ped_at(2.0, 1.0)), &CameraModel::default());
        for &v in frame.image.data() {
            assert!((0.0..=1.0).contains(&v));
            assert_eq!((v * 255.0).round() / 255.0, v);
        }
    }

    #[test]
    fn ground_texture_moves_with_vehicle() {
        let cam = CameraModel::default();
        let a = render_stereo(&VehicleState::default(), None, &cam);
        let b = render_stereo(&VehicleState { x: 0.25, ..Default::default() }, None, &cam);
        assert_ne!(a.image, b.image);
    }

    #[test]
    fn identities_render_distinct_colors() {
        let cam = CameraModel::default();
        let mut p = ped_at(2.0, 0.0);
        let a = render_stereo(&VehicleState::default(), Some(&p), &cam);
        p.identity = Identity::B;
        let b = render_stereo(&VehicleState::default(), Some(&p), &cam);
        assert_ne!(a.image, b.image);
    }
}
