//! Fisheye cameras, ground-plane back-projection and the synthesized
//! bird's-eye (IPM) label image.
//!
//! Camera frame convention: +z is the optical axis, +x points right and +y
//! points down in the image. The camera extrinsic is the pose of the camera
//! in the vehicle frame (x forward, y left, z up), so
//! `x_vehicle = R_c * x_cam + t_c`.

use crate::geometry::{matrix_to_rotvec, Pose6};
use crate::semantics::SemanticClass;
use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use thiserror::Error;

/// Rays may reach this far past 90 degrees from the optical axis.
pub const FOV_MARGIN: f64 = 0.1;
const NEWTON_MAX_ITER: usize = 10;
const NEWTON_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("point is behind the camera (theta = {0:.4} rad)")]
    BehindCamera(f64),
    #[error("pixel ({0:.2}, {1:.2}) lies outside the calibrated field of view")]
    OutOfFov(f64, f64),
    #[error("ray does not intersect the ground plane in front of the camera")]
    NoIntersection,
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("calibration file: {0}")]
    Io(#[from] std::io::Error),
    #[error("calibration file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Equidistant fisheye with a 4-term odd polynomial in the incidence angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisheyeCamera {
    #[serde(default)]
    pub name: String,
    pub focal: f64,
    pub principal_point: Vector2<f64>,
    pub distortion: [f64; 4],
    pub extrinsic: Pose6,
    pub image_size: (u32, u32),
}

impl FisheyeCamera {
    /// Camera at `position` (vehicle frame) looking along heading `yaw`,
    /// tilted `pitch_down` radians below the horizon.
    pub fn mounted(
        name: &str,
        focal: f64,
        image_size: (u32, u32),
        position: Vector3<f64>,
        yaw: f64,
        pitch_down: f64,
    ) -> Self {
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch_down.sin_cos();
        let forward = Vector3::new(cp * cy, cp * sy, -sp);
        let right = Vector3::new(sy, -cy, 0.0);
        let down = forward.cross(&right);
        let m = Matrix3::from_columns(&[right, down, forward]);
        let r = matrix_to_rotvec(&m).expect("orthonormal by construction");
        Self {
            name: name.to_string(),
            focal,
            principal_point: Vector2::new(
                f64::from(image_size.0) / 2.0,
                f64::from(image_size.1) / 2.0,
            ),
            distortion: [0.0; 4],
            extrinsic: Pose6::new(r, position),
            image_size,
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.focal > 0.0) {
            return Err(CameraError::InvalidCalibration(format!(
                "{}: focal must be positive",
                self.name
            )));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(CameraError::InvalidCalibration(format!(
                "{}: empty image",
                self.name
            )));
        }
        let m = self.extrinsic.rotation();
        if (m * m.transpose() - Matrix3::identity()).norm() > 1e-9 {
            return Err(CameraError::InvalidCalibration(format!(
                "{}: extrinsic rotation not orthonormal",
                self.name
            )));
        }
        Ok(())
    }

    fn distort(&self, theta: f64) -> f64 {
        let [k1, k2, k3, k4] = self.distortion;
        let t2 = theta * theta;
        theta * (1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4))))
    }

    fn distort_derivative(&self, theta: f64) -> f64 {
        let [k1, k2, k3, k4] = self.distortion;
        let t2 = theta * theta;
        1.0 + t2 * (3.0 * k1 + t2 * (5.0 * k2 + t2 * (7.0 * k3 + t2 * 9.0 * k4)))
    }

    fn max_theta(&self) -> f64 {
        FRAC_PI_2 + FOV_MARGIN
    }

    /// Image radius of the widest admissible ray.
    pub fn max_radius(&self) -> f64 {
        self.focal * self.distort(self.max_theta())
    }

    pub fn contains_pixel(&self, uv: &Vector2<f64>) -> bool {
        uv.x >= 0.0
            && uv.y >= 0.0
            && uv.x <= f64::from(self.image_size.0) - 1.0
            && uv.y <= f64::from(self.image_size.1) - 1.0
    }
}

pub fn fisheye_project(cam: &FisheyeCamera, x_cam: &Vector3<f64>) -> Result<Vector2<f64>, CameraError> {
    let rho = x_cam.x.hypot(x_cam.y);
    let theta = rho.atan2(x_cam.z);
    if rho == 0.0 && x_cam.z <= 0.0 || theta >= cam.max_theta() {
        return Err(CameraError::BehindCamera(theta));
    }
    let radius = cam.focal * cam.distort(theta);
    let dir = if rho > 0.0 {
        Vector2::new(x_cam.x / rho, x_cam.y / rho)
    } else {
        Vector2::zeros()
    };
    Ok(cam.principal_point + dir * radius)
}

/// Unit ray through a pixel, recovering the incidence angle by Newton
/// iteration on the distortion polynomial.
pub fn fisheye_unproject(cam: &FisheyeCamera, uv: &Vector2<f64>) -> Result<Vector3<f64>, CameraError> {
    let d = uv - cam.principal_point;
    let radius = d.norm();
    if radius > cam.max_radius() {
        return Err(CameraError::OutOfFov(uv.x, uv.y));
    }
    if radius == 0.0 {
        return Ok(Vector3::z());
    }
    let target = radius / cam.focal;
    let mut theta = target;
    for _ in 0..NEWTON_MAX_ITER {
        let f = cam.distort(theta) - target;
        if f.abs() < NEWTON_TOL {
            break;
        }
        let df = cam.distort_derivative(theta);
        if df <= 0.0 {
            return Err(CameraError::OutOfFov(uv.x, uv.y));
        }
        theta -= f / df;
    }
    let (s, c) = theta.sin_cos();
    Ok(Vector3::new(s * d.x / radius, s * d.y / radius, c))
}

/// Ground-plane point (vehicle frame, z = 0) seen at pixel `uv`.
pub fn pixel_to_ground(cam: &FisheyeCamera, uv: &Vector2<f64>) -> Result<Vector2<f64>, CameraError> {
    let ray = cam.extrinsic.rotation() * fisheye_unproject(cam, uv)?;
    let origin = cam.extrinsic.t;
    if ray.z > -1e-9 {
        return Err(CameraError::NoIntersection);
    }
    let lambda = -origin.z / ray.z;
    if !(lambda > 0.0) {
        return Err(CameraError::NoIntersection);
    }
    let g = origin + ray * lambda;
    Ok(Vector2::new(g.x, g.y))
}

/// Pixel at which the vehicle-frame ground point `g` appears.
pub fn ground_to_pixel(cam: &FisheyeCamera, g: &Vector2<f64>) -> Result<Vector2<f64>, CameraError> {
    let x_v = Vector3::new(g.x, g.y, 0.0);
    let x_c = cam.extrinsic.rotation().transpose() * (x_v - cam.extrinsic.t);
    fisheye_project(cam, &x_c)
}

/// Intrinsics of the synthesized bird's-eye image: `u = s*x + c_u`, `v = s*y + c_v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpmIntrinsics {
    /// Pixels per meter.
    pub scale: f64,
    pub center: Vector2<f64>,
    pub size: (u32, u32),
}

impl Default for IpmIntrinsics {
    fn default() -> Self {
        Self {
            scale: 50.0,
            center: Vector2::new(500.0, 500.0),
            size: (1000, 1000),
        }
    }
}

impl IpmIntrinsics {
    pub fn validate(&self) -> Result<(), CameraError> {
        let inside = self.center.x >= 0.0
            && self.center.y >= 0.0
            && self.center.x < f64::from(self.size.0)
            && self.center.y < f64::from(self.size.1);
        if !(self.scale > 0.0) || !inside {
            return Err(CameraError::InvalidCalibration(
                "IPM scale must be positive and its center inside the image".into(),
            ));
        }
        Ok(())
    }

    /// Half extents of the footprint in meters along x and y.
    pub fn half_extent(&self) -> (f64, f64) {
        (
            self.center.x.max(f64::from(self.size.0) - 1.0 - self.center.x) / self.scale,
            self.center.y.max(f64::from(self.size.1) - 1.0 - self.center.y) / self.scale,
        )
    }

    /// Coarser lattice covering the same footprint, with `per_meter` cells per
    /// meter and the vehicle origin on a lattice node.
    pub fn resampled(&self, per_meter: f64) -> IpmIntrinsics {
        let (hx, hy) = self.half_extent();
        let nx = (hx * per_meter).floor();
        let ny = (hy * per_meter).floor();
        IpmIntrinsics {
            scale: per_meter,
            center: Vector2::new(nx, ny),
            size: (2 * nx as u32 + 1, 2 * ny as u32 + 1),
        }
    }
}

pub fn vehicle_to_ipm(k: &IpmIntrinsics, xv: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(k.scale * xv.x + k.center.x, k.scale * xv.y + k.center.y)
}

pub fn ipm_to_vehicle(k: &IpmIntrinsics, uv: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new((uv.x - k.center.x) / k.scale, (uv.y - k.center.y) / k.scale)
}

/// Dense per-pixel semantic labels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelImage {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<SemanticClass>,
}

impl LabelImage {
    pub fn filled(width: u32, height: u32, class: SemanticClass) -> Self {
        Self {
            width,
            height,
            labels: vec![class; width as usize * height as usize],
        }
    }

    pub fn get(&self, u: u32, v: u32) -> SemanticClass {
        self.labels[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, class: SemanticClass) {
        let w = self.width as usize;
        self.labels[v as usize * w + u as usize] = class;
    }

    /// Nearest-pixel lookup, `None` outside the image.
    pub fn sample(&self, uv: &Vector2<f64>) -> Option<SemanticClass> {
        let u = uv.x.round();
        let v = uv.y.round();
        if u < 0.0 || v < 0.0 || u >= f64::from(self.width) || v >= f64::from(self.height) {
            return None;
        }
        Some(self.get(u as u32, v as u32))
    }

    pub fn count(&self, class: SemanticClass) -> usize {
        self.labels.iter().filter(|&&c| c == class).count()
    }
}

/// Fuse per-camera label images into one bird's-eye label image.
///
/// Each IPM pixel is looked up in the cameras ordered by distance from their
/// mounting point; the first camera that sees it supplies the label.
pub fn synthesize_ipm(
    cams: &[FisheyeCamera],
    images: &[LabelImage],
    k: &IpmIntrinsics,
) -> LabelImage {
    assert_eq!(cams.len(), images.len(), "one image per camera");
    let mut out = LabelImage::filled(k.size.0, k.size.1, SemanticClass::Unknown);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(cams.len());
    for v in 0..k.size.1 {
        for u in 0..k.size.0 {
            let g = ipm_to_vehicle(k, &Vector2::new(f64::from(u), f64::from(v)));
            order.clear();
            order.extend(cams.iter().enumerate().map(|(i, c)| {
                let d = (Vector2::new(c.extrinsic.t.x, c.extrinsic.t.y) - g).norm_squared();
                (d, i)
            }));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, i) in &order {
                let Ok(px) = ground_to_pixel(&cams[i], &g) else {
                    continue;
                };
                if !cams[i].contains_pixel(&px) {
                    continue;
                }
                if let Some(label) = images[i].sample(&px) {
                    out.set(u, v, label);
                    break;
                }
            }
        }
    }
    out
}

/// Surround-view rig plus the bird's-eye image intrinsics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub cameras: Vec<FisheyeCamera>,
    pub ipm: IpmIntrinsics,
}

impl Calibration {
    /// Front, rear, left and right fisheyes looking down at 40-60 degrees.
    pub fn surround_default() -> Self {
        let size = (1280, 720);
        let focal = 330.0;
        let mut cameras = vec![
            FisheyeCamera::mounted("front", focal, size, Vector3::new(2.0, 0.0, 0.8), 0.0, 0.7),
            FisheyeCamera::mounted(
                "rear",
                focal,
                size,
                Vector3::new(-2.0, 0.0, 0.9),
                std::f64::consts::PI,
                0.7,
            ),
            FisheyeCamera::mounted("left", focal, size, Vector3::new(0.0, 1.0, 1.0), FRAC_PI_2, 1.0),
            FisheyeCamera::mounted("right", focal, size, Vector3::new(0.0, -1.0, 1.0), -FRAC_PI_2, 1.0),
        ];
        for c in &mut cameras {
            c.distortion = [-0.02, 0.003, -0.0005, 0.0];
        }
        Self {
            cameras,
            ipm: IpmIntrinsics::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        for c in &self.cameras {
            c.validate()?;
        }
        self.ipm.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CameraError> {
        let text = std::fs::read_to_string(path)?;
        let cal: Calibration = serde_json::from_str(&text)?;
        cal.validate()?;
        Ok(cal)
    }
}
