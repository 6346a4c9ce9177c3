//! Point clouds, the class-partitioned voxel index, class-aware ICP and a
//! correlative search for its starting point.

mod correlative;
mod icp;
mod index;

pub use correlative::{class_balanced_overlap, correlative_search, Hypothesis, SearchConfig};
pub use icp::{icp, icp_with_restarts, IcpConfig, IcpResult, RegistrationError};
pub use index::SpatialIndex;

use crate::geometry::Pose6;
use crate::semantics::{LabeledPoint, SemanticClass};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Coordinate frame a cloud is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    Vehicle,
    LocalMap,
    World,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<LabeledPoint>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(frame: Frame) -> Self {
        Self {
            points: Vec::new(),
            frame,
        }
    }

    pub fn from_points(points: Vec<LabeledPoint>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn push(&mut self, p: LabeledPoint) {
        self.points.push(p);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count_localization(&self) -> usize {
        self.points.iter().filter(|p| p.class.is_localization()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabeledPoint> {
        self.points.iter()
    }

    /// Apply `pose` to every point and retag the result.
    pub fn transformed(&self, pose: &Pose6, frame: Frame) -> PointCloud {
        let rot = pose.rotation();
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| LabeledPoint::new(rot * p.position + pose.t, p.class))
                .collect(),
            frame,
        }
    }

    pub fn of_class(&self, class: SemanticClass) -> impl Iterator<Item = &Vector3<f64>> {
        self.points
            .iter()
            .filter(move |p| p.class == class)
            .map(|p| &p.position)
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.position.iter().all(|c| c.is_finite()))
    }

    /// One centroid per occupied `(class, voxel)` cell, in cell order.
    /// A non-positive `voxel` returns the cloud unchanged.
    pub fn voxel_downsample(&self, voxel: f64) -> PointCloud {
        self.voxel_filter(voxel, 1)
    }

    /// Like [`voxel_downsample`](Self::voxel_downsample), but cells hit by
    /// fewer than `min_hits` points are dropped. Isolated mislabels rarely
    /// land in the same cell twice, while real paint is seen in many frames.
    pub fn voxel_filter(&self, voxel: f64, min_hits: usize) -> PointCloud {
        if !(voxel > 0.0) {
            return self.clone();
        }
        let mut cells: BTreeMap<(u8, i64, i64, i64), (Vector3<f64>, usize)> = BTreeMap::new();
        for p in &self.points {
            let key = (
                p.class.code(),
                (p.position.x / voxel).floor() as i64,
                (p.position.y / voxel).floor() as i64,
                (p.position.z / voxel).floor() as i64,
            );
            let cell = cells.entry(key).or_insert((Vector3::zeros(), 0));
            cell.0 += p.position;
            cell.1 += 1;
        }
        let points = cells
            .into_iter()
            .filter(|(_, (_, n))| *n >= min_hits.max(1))
            .map(|((code, ..), (sum, n))| {
                let class = SemanticClass::from_code(code).expect("code came from a class");
                LabeledPoint::new(sum / n as f64, class)
            })
            .collect();
        PointCloud {
            points,
            frame: self.frame,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_point(x: f64, y: f64) -> LabeledPoint {
        LabeledPoint::new(Vector3::new(x, y, 0.0), SemanticClass::ParkingLine)
    }

    #[test]
    fn coincident_points_collapse() {
        let cloud = PointCloud::from_points(vec![line_point(1.23, 4.56); 100], Frame::World);
        let down = cloud.voxel_downsample(0.1);
        assert_eq!(down.len(), 1);
        assert!((down.points[0].position - Vector3::new(1.23, 4.56, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn sparse_cloud_keeps_count_and_classes_stay_apart() {
        let mut pts: Vec<_> = (0..20).map(|i| line_point(0.05 + 0.1 * f64::from(i), 0.05)).collect();
        pts.push(LabeledPoint::new(Vector3::new(0.05, 0.05, 0.0), SemanticClass::GuideSign));
        let cloud = PointCloud::from_points(pts, Frame::World);
        assert_eq!(cloud.voxel_downsample(0.1).len(), 21);
        assert_eq!(cloud.voxel_downsample(0.0), cloud);
    }

    #[test]
    fn min_hits_drops_singletons() {
        let mut pts = vec![line_point(0.05, 0.05); 3];
        pts.push(line_point(5.05, 0.05));
        let cloud = PointCloud::from_points(pts, Frame::World);
        assert_eq!(cloud.voxel_filter(0.1, 2).len(), 1);
        assert_eq!(cloud.voxel_filter(0.1, 1).len(), 2);
    }
}
