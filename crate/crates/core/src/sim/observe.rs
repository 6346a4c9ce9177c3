//! Per-frame semantic observations at two fidelities.
//!
//! The pixel tier rasterizes the full IPM image and keeps every `stride`-th
//! feature pixel. The point tier labels a 0.1 m lattice fixed in the world
//! over the same footprint. That is much cheaper, yields the same points
//! when the two lattices coincide, and revisiting a place reproduces the
//! same samples, so the map and a later drive share their sample positions.

use super::world::WorldModel;
use crate::camera_ipm::IpmIntrinsics;
use crate::geometry::Pose6;
use crate::registration::{Frame, PointCloud};
use crate::semantics::{extract_features, oracle_segment, LabeledPoint, NoiseSpec};
use serde::{Deserialize, Serialize};

/// Point-tier lattice density, nodes per meter.
pub const POINT_TIER_DENSITY: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Pixel { stride: u32 },
    #[default]
    Point,
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub time: f64,
    /// Feature points in the vehicle frame.
    pub cloud: PointCloud,
}

/// Observe the world from `pose`.
pub fn observe(world: &WorldModel, pose: &Pose6, time: f64, k: &IpmIntrinsics, noise: &NoiseSpec, tier: Tier) -> Observation {
    let cloud = match tier {
        Tier::Pixel { stride } => extract_features(&oracle_segment(world, pose, k, noise), k, stride),
        Tier::Point => {
            // jitter stays in meters, so scale it by the full-resolution IPM
            let pts = world.sample_ground(pose, k.half_extent(), 1.0 / POINT_TIER_DENSITY, noise, noise.jitter_px / k.scale);
            PointCloud::from_points(pts.into_iter().map(|(p, c)| LabeledPoint::new(p, c)).collect(), Frame::Vehicle)
        }
    };
    Observation { time, cloud }
}
