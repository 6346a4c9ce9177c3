//! Per-camera label images, for exercising IPM synthesis end to end.

use super::world::WorldModel;
use crate::camera_ipm::{pixel_to_ground, vehicle_to_ipm, Calibration, LabelImage};
use crate::geometry::Pose6;
use crate::semantics::{oracle_segment, NoiseSpec, SemanticClass};
use nalgebra::Vector2;

/// What each fisheye camera of `calib` would label from `pose`. Pixels whose
/// ray misses the ground, or lands outside the IPM footprint, are Unknown.
///
/// `ipm_density` sets the resolution of the ground raster the cameras sample
/// (nodes per meter).
pub fn render_cameras(world: &WorldModel, pose: &Pose6, calib: &Calibration, ipm_density: f64) -> Vec<LabelImage> {
    let k = calib.ipm.resampled(ipm_density);
    let ground = oracle_segment(world, pose, &k, &NoiseSpec::zero());
    calib
        .cameras
        .iter()
        .map(|cam| {
            let (w, h) = cam.image_size;
            let mut img = LabelImage::filled(w, h, SemanticClass::Unknown);
            for v in 0..h {
                for u in 0..w {
                    let uv = Vector2::new(f64::from(u), f64::from(v));
                    let Ok(g) = pixel_to_ground(cam, &uv) else {
                        continue;
                    };
                    if let Some(class) = ground.sample(&vehicle_to_ipm(&k, &g)) {
                        img.set(u, v, class);
                    }
                }
            }
            img
        })
        .collect()
}
