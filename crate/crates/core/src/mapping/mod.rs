//! Local semantic maps, loop detection between them, pose-graph
//! optimization and assembly of the global map.

pub mod graph;
pub mod loops;
pub mod pipeline;

pub use graph::{optimize_pose_graph, Edge, GnConfig, GnReport, GraphError, PoseGraph};
pub use loops::{detect_loop, LoopConfig, LoopEdge};
pub use pipeline::{Mapper, MappingConfig, MappingOutput};

use crate::geometry::{relative, Pose6};
use crate::parking::{anchor_spots, ParkingSpot, SpotMerger};
use crate::registration::{Frame, PointCloud, SpatialIndex};
use crate::semantics::LabeledPoint;
use nalgebra::Vector3;
use thiserror::Error;

/// Cell size of the global map's nearest-neighbor index, meters.
pub const INDEX_CELL: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("expected a {expected:?}-frame cloud, got {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no frames were mapped")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMap {
    pub id: usize,
    /// Odometry pose at the start of the segment.
    pub origin: Pose6,
    /// Features in the origin frame.
    pub cloud: PointCloud,
    /// Odometry arc length covered so far, meters.
    pub traversed_length: f64,
    /// Vehicle poses relative to `origin`, one per accumulated frame.
    pub keyposes: Vec<Pose6>,
    /// Spots found in this map, in the origin frame.
    pub spots: Vec<ParkingSpot>,
}

impl LocalMap {
    pub fn new(id: usize, origin: Pose6) -> Self {
        Self {
            id,
            origin,
            cloud: PointCloud::new(Frame::LocalMap),
            traversed_length: 0.0,
            keyposes: Vec::new(),
            spots: Vec::new(),
        }
    }
}

/// Move vehicle-frame features observed at odometry pose `odom` into the
/// local map's origin frame.
pub fn accumulate(lm: &mut LocalMap, feats: &PointCloud, odom: &Pose6) -> Result<(), MappingError> {
    if feats.frame != Frame::Vehicle {
        return Err(MappingError::FrameMismatch {
            expected: Frame::Vehicle,
            found: feats.frame,
        });
    }
    let rel = relative(&lm.origin, odom);
    let last = lm.keyposes.last().copied().unwrap_or_else(Pose6::identity);
    lm.traversed_length += (rel.t - last.t).norm();
    lm.keyposes.push(rel);
    let rot = rel.rotation();
    lm.cloud
        .points
        .extend(feats.points.iter().map(|p| LabeledPoint::new(rot * p.position + rel.t, p.class)));
    Ok(())
}

/// Reduce the local cloud to one centroid per `voxel` cell and class.
pub fn finalize_local_map(mut lm: LocalMap, voxel: f64) -> LocalMap {
    lm.cloud = lm.cloud.voxel_downsample(voxel);
    lm
}

#[derive(Debug, Clone)]
pub struct GlobalMap {
    pub cloud: PointCloud,
    pub index: SpatialIndex,
    pub spots: Vec<ParkingSpot>,
    pub entrance: Pose6,
    /// Fingerprint of the configuration the map was built with.
    pub digest: [u8; 16],
}

impl GlobalMap {
    /// Build the index over `cloud`.
    pub fn new(cloud: PointCloud, spots: Vec<ParkingSpot>, entrance: Pose6) -> Self {
        let index = SpatialIndex::build(&cloud, INDEX_CELL);
        Self {
            cloud,
            index,
            spots,
            entrance,
            digest: [0; 16],
        }
    }

    /// Axis-aligned bounds of the cloud in the plane, `None` when empty.
    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = self.cloud.points.first()?.position;
        Some(self.cloud.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(&p.position), hi.sup(&p.position))
        }))
    }
}

impl PartialEq for GlobalMap {
    fn eq(&self, o: &Self) -> bool {
        self.cloud == o.cloud && self.spots == o.spots && self.entrance == o.entrance && self.digest == o.digest
    }
}

/// Stack local maps by their optimized poses, downsample, and index.
///
/// Positions are rounded to single precision, the resolution the map file
/// stores, so a saved and reloaded map is identical to the assembled one.
pub fn assemble_global_map(
    maps: &[LocalMap],
    poses: &[Pose6],
    voxel: f64,
    merge_radius: f64,
    entrance: Pose6,
) -> GlobalMap {
    assert_eq!(maps.len(), poses.len(), "one pose per local map");
    let mut all = PointCloud::new(Frame::World);
    let mut merger = SpotMerger::new(merge_radius);
    for (lm, pose) in maps.iter().zip(poses) {
        all.points.extend(lm.cloud.transformed(pose, Frame::World).points);
        anchor_spots(&mut merger, &lm.spots, pose);
    }
    let mut cloud = all.voxel_downsample(voxel);
    for p in &mut cloud.points {
        p.position = p.position.map(|c| f64::from(c as f32));
    }
    let mut spots = merger.into_spots();
    for s in &mut spots {
        for c in &mut s.corners {
            *c = c.map(|v| f64::from(v as f32));
        }
    }
    GlobalMap::new(cloud, spots, entrance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::SemanticClass;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vehicle_cloud(pts: &[(f64, f64)]) -> PointCloud {
        PointCloud::from_points(
            pts.iter()
                .map(|&(x, y)| LabeledPoint::new(Vector3::new(x, y, 0.0), SemanticClass::ParkingLine))
                .collect(),
            Frame::Vehicle,
        )
    }

    #[test]
    fn accumulate_at_origin_is_unchanged() {
        let mut lm = LocalMap::new(0, Pose6::planar(3.0, 4.0, 1.0));
        let feats = vehicle_cloud(&[(1.0, 2.0), (-0.5, 0.25)]);
        accumulate(&mut lm, &feats, &Pose6::planar(3.0, 4.0, 1.0)).unwrap();
        for (a, b) in lm.cloud.points.iter().zip(&feats.points) {
            assert!((a.position - b.position).norm() < 1e-12);
        }
        assert_eq!(lm.traversed_length, 0.0);
    }

    #[test]
    fn accumulate_pure_translation() {
        let mut lm = LocalMap::new(0, Pose6::identity());
        accumulate(&mut lm, &vehicle_cloud(&[(0.5, 0.0)]), &Pose6::planar(1.0, 0.0, 0.0)).unwrap();
        assert!((lm.cloud.points[0].position - Vector3::new(1.5, 0.0, 0.0)).norm() < 1e-12);
        assert!((lm.traversed_length - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accumulate_random_walk_matches_per_point_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let origin = Pose6::planar(10.0, -3.0, 0.7);
        let mut lm = LocalMap::new(0, origin);
        let mut odom = origin;
        let mut expected = Vec::new();
        for _ in 0..50 {
            odom = odom.compose(&Pose6::planar(rng.gen_range(0.0..0.3), rng.gen_range(-0.05..0.05), rng.gen_range(-0.1..0.1)));
            let pts: Vec<(f64, f64)> = (0..5).map(|_| (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0))).collect();
            let feats = vehicle_cloud(&pts);
            let rel = relative(&origin, &odom);
            expected.extend(feats.points.iter().map(|p| rel.transform_point(&p.position)));
            accumulate(&mut lm, &feats, &odom).unwrap();
        }
        for (p, e) in lm.cloud.points.iter().zip(&expected) {
            assert!((p.position - e).norm() < 1e-9);
        }
    }

    #[test]
    fn accumulate_rejects_wrong_frame() {
        let mut lm = LocalMap::new(0, Pose6::identity());
        let mut feats = vehicle_cloud(&[(0.0, 0.0)]);
        feats.frame = Frame::World;
        assert!(matches!(
            accumulate(&mut lm, &feats, &Pose6::identity()),
            Err(MappingError::FrameMismatch { .. })
        ));
    }

    #[test]
    fn finalize_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut lm = LocalMap::new(0, Pose6::identity());
        let pts: Vec<(f64, f64)> = (0..2000).map(|_| (rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0))).collect();
        accumulate(&mut lm, &vehicle_cloud(&pts), &Pose6::identity()).unwrap();
        let before = lm.cloud.len();
        let lm = finalize_local_map(lm, 0.1);
        assert!(lm.cloud.len() <= before);
        assert!(lm.cloud.len() <= 900);
    }

    #[test]
    fn single_map_at_identity_is_the_global_map() {
        let mut lm = LocalMap::new(0, Pose6::identity());
        // cell centers survive the voxel grid and the f32 rounding exactly
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (0.25 + 0.5 * f64::from(i), 0.75)).collect();
        accumulate(&mut lm, &vehicle_cloud(&pts), &Pose6::identity()).unwrap();
        let lm = finalize_local_map(lm, 0.1);
        let g = assemble_global_map(std::slice::from_ref(&lm), &[Pose6::identity()], 0.1, 0.5, Pose6::identity());
        assert_eq!(g.cloud.points, lm.cloud.points);
        assert_eq!(g.index.len(), g.cloud.len());
    }

    #[test]
    fn global_count_bounded_by_local_sum() {
        let mut maps = Vec::new();
        let mut poses = Vec::new();
        for k in 0..3 {
            let mut lm = LocalMap::new(k, Pose6::identity());
            let pts: Vec<(f64, f64)> = (0..100).map(|i| (0.05 * f64::from(i), 0.0)).collect();
            accumulate(&mut lm, &vehicle_cloud(&pts), &Pose6::identity()).unwrap();
            maps.push(finalize_local_map(lm, 0.1));
            poses.push(Pose6::planar(0.02 * k as f64, 0.0, 0.0));
        }
        let total: usize = maps.iter().map(|m| m.cloud.len()).sum();
        let g = assemble_global_map(&maps, &poses, 0.1, 0.5, Pose6::identity());
        assert!(g.cloud.len() <= total);
        assert!(g.cloud.len() < total / 2);
    }
}
