//! Semantic classes, the segmenter interface and feature extraction from
//! bird's-eye label images.

use crate::camera_ipm::{ipm_to_vehicle, IpmIntrinsics, LabelImage};
use crate::geometry::Pose6;
use crate::registration::{Frame, PointCloud};
use crate::sim::world::WorldModel;
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SemanticClass {
    Lane,
    ParkingLine,
    GuideSign,
    SpeedBump,
    FreeSpace,
    Obstacle,
    Wall,
    ParkingCorner,
    Unknown,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 9] = [
        SemanticClass::Lane,
        SemanticClass::ParkingLine,
        SemanticClass::GuideSign,
        SemanticClass::SpeedBump,
        SemanticClass::FreeSpace,
        SemanticClass::Obstacle,
        SemanticClass::Wall,
        SemanticClass::ParkingCorner,
        SemanticClass::Unknown,
    ];

    /// Classes stable enough to localize against.
    pub fn is_localization(self) -> bool {
        matches!(
            self,
            SemanticClass::ParkingLine | SemanticClass::GuideSign | SemanticClass::SpeedBump
        )
    }

    /// Classes lifted into feature clouds: the localization classes plus
    /// parking-spot corners.
    pub fn is_feature(self) -> bool {
        self.is_localization() || self == SemanticClass::ParkingCorner
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Which label wins where painted geometry overlaps.
    pub fn priority(self) -> u8 {
        match self {
            SemanticClass::Unknown => 0,
            SemanticClass::FreeSpace => 1,
            SemanticClass::Obstacle => 2,
            SemanticClass::Wall => 3,
            SemanticClass::Lane => 4,
            SemanticClass::ParkingLine => 5,
            SemanticClass::SpeedBump => 6,
            SemanticClass::GuideSign => 7,
            SemanticClass::ParkingCorner => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub position: Vector3<f64>,
    pub class: SemanticClass,
}

impl LabeledPoint {
    pub fn new(position: Vector3<f64>, class: SemanticClass) -> Self {
        Self { position, class }
    }
}

/// Segmentation error model applied on top of ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Per-pixel probability of replacing the label by another class.
    pub p_flip: f64,
    /// Maximum per-feature boundary shift, in IPM pixels.
    pub jitter_px: f64,
    /// Probability that a feature is missing for a whole session.
    pub p_drop: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            p_flip: 0.002,
            jitter_px: 1.0,
            p_drop: 0.05,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            p_flip: 0.0,
            jitter_px: 0.0,
            p_drop: 0.0,
            seed: 0,
        }
    }
}

/// Anything that turns a vehicle pose into a bird's-eye label image.
pub trait Segmenter {
    fn segment(&self, pose: &Pose6) -> LabelImage;
}

/// Ground-truth segmenter over a synthetic world, with injected noise.
#[derive(Debug, Clone)]
pub struct OracleSegmenter<'a> {
    pub world: &'a WorldModel,
    pub ipm: IpmIntrinsics,
    pub noise: NoiseSpec,
}

impl Segmenter for OracleSegmenter<'_> {
    fn segment(&self, pose: &Pose6) -> LabelImage {
        oracle_segment(self.world, pose, &self.ipm, &self.noise)
    }
}

/// Rasterize the world around `pose` into an IPM label image.
pub fn oracle_segment(world: &WorldModel, pose: &Pose6, k: &IpmIntrinsics, noise: &NoiseSpec) -> LabelImage {
    let labels = world.rasterize(pose, k, noise, noise.jitter_px / k.scale);
    LabelImage {
        width: k.size.0,
        height: k.size.1,
        labels,
    }
}

/// Lift every `stride`-th feature pixel to a vehicle-frame point on z = 0.
pub fn extract_features(img: &LabelImage, k: &IpmIntrinsics, stride: u32) -> PointCloud {
    let stride = stride.max(1) as usize;
    let mut cloud = PointCloud::new(Frame::Vehicle);
    for v in (0..img.height).step_by(stride) {
        for u in (0..img.width).step_by(stride) {
            let class = img.get(u, v);
            if class.is_feature() {
                let xy = ipm_to_vehicle(k, &Vector2::new(f64::from(u), f64::from(v)));
                cloud.push(LabeledPoint::new(Vector3::new(xy.x, xy.y, 0.0), class));
            }
        }
    }
    cloud
}

/// Centroids of 8-connected corner blobs, in the vehicle frame, sorted by x then y.
pub fn detect_corners(img: &LabelImage, k: &IpmIntrinsics) -> Vec<Vector2<f64>> {
    let (w, h) = (img.width as usize, img.height as usize);
    let mut seen = vec![false; w * h];
    let mut corners = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || img.labels[start] != SemanticClass::ParkingCorner {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
        while let Some(idx) = stack.pop() {
            let (u, v) = (idx % w, idx / w);
            su += u as f64;
            sv += v as f64;
            n += 1.0;
            for dv in -1i64..=1 {
                for du in -1i64..=1 {
                    let (nu, nv) = (u as i64 + du, v as i64 + dv);
                    if nu < 0 || nv < 0 || nu >= w as i64 || nv >= h as i64 {
                        continue;
                    }
                    let nidx = nv as usize * w + nu as usize;
                    if !seen[nidx] && img.labels[nidx] == SemanticClass::ParkingCorner {
                        seen[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        corners.push(ipm_to_vehicle(k, &Vector2::new(su / n, sv / n)));
    }
    sort_xy(&mut corners);
    corners
}

/// Point-cloud counterpart of [`detect_corners`]: single-linkage clusters of
/// corner points closer than `link` meters, reduced to centroids.
pub fn cluster_corner_points(cloud: &PointCloud, link: f64) -> Vec<Vector2<f64>> {
    let pts: Vec<Vector2<f64>> = cloud
        .points
        .iter()
        .filter(|p| p.class == SemanticClass::ParkingCorner)
        .map(|p| p.position.xy())
        .collect();
    let mut seen = vec![false; pts.len()];
    let mut corners = Vec::new();
    let mut stack = Vec::new();
    for i in 0..pts.len() {
        if seen[i] {
            continue;
        }
        seen[i] = true;
        stack.push(i);
        let mut sum = Vector2::zeros();
        let mut n = 0.0;
        while let Some(j) = stack.pop() {
            sum += pts[j];
            n += 1.0;
            for (m, q) in pts.iter().enumerate() {
                if !seen[m] && (q - pts[j]).norm() <= link {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        corners.push(sum / n);
    }
    sort_xy(&mut corners);
    corners
}

fn sort_xy(pts: &mut [Vector2<f64>]) {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
}
