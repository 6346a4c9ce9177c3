//! Parking spots from corner detections, validated against parking-line
//! evidence and merged into the map.

use crate::geometry::Pose6;
use crate::registration::{Frame, PointCloud, SpatialIndex};
use crate::semantics::{LabeledPoint, SemanticClass};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Occupancy {
    #[default]
    Unknown,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkingSpot {
    pub id: u16,
    /// Counter-clockwise, starting at the first corner of the detected pair.
    pub corners: [Vector2<f64>; 4],
    pub occupied: Occupancy,
}

impl ParkingSpot {
    pub fn center(&self) -> Vector2<f64> {
        self.corners.iter().sum::<Vector2<f64>>() / 4.0
    }

    pub fn transformed(&self, pose: &Pose6) -> ParkingSpot {
        let mut out = self.clone();
        for c in &mut out.corners {
            *c = pose.transform_point(&Vector3::new(c.x, c.y, 0.0)).xy();
        }
        out
    }

    /// Strictly convex, with every edge turning the same way.
    pub fn is_convex(&self) -> bool {
        let mut sign = 0.0;
        for i in 0..4 {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 4];
            let c = self.corners[(i + 2) % 4];
            let turn = (b - a).perp(&(c - b));
            if turn.abs() < 1e-12 || turn * sign < 0.0 {
                return false;
            }
            sign = turn;
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpotConfig {
    pub width: f64,
    pub depth: f64,
    /// Allowed relative deviation of the corner-pair distance from `width`.
    pub width_tolerance: f64,
    /// Fraction of the boundary that must lie on parking-line paint.
    pub coverage: f64,
    pub line_distance: f64,
    pub sample_step: f64,
    /// Spots closer than this (center to center) are the same spot.
    pub merge_radius: f64,
}

impl Default for SpotConfig {
    fn default() -> Self {
        Self {
            width: 2.5,
            depth: 5.3,
            width_tolerance: 0.15,
            coverage: 0.6,
            line_distance: 0.15,
            sample_step: 0.1,
            merge_radius: 0.5,
        }
    }
}

/// Parking-line points of a cloud, indexed for coverage checks.
pub fn line_index(cloud: &PointCloud) -> SpatialIndex {
    let lines: Vec<LabeledPoint> = cloud
        .points
        .iter()
        .filter(|p| p.class == SemanticClass::ParkingLine)
        .copied()
        .collect();
    SpatialIndex::build(&PointCloud::from_points(lines, cloud.frame), 0.5)
}

/// Fraction of boundary samples within `cfg.line_distance` of a line point.
pub fn coverage(corners: &[Vector2<f64>; 4], lines: &SpatialIndex, cfg: &SpotConfig) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for i in 0..4 {
        let a = corners[i];
        let b = corners[(i + 1) % 4];
        let n = ((b - a).norm() / cfg.sample_step).round().max(1.0) as usize;
        for k in 0..n {
            let p = a + (b - a) * (k as f64 / n as f64);
            total += 1;
            if lines
                .nearest(SemanticClass::ParkingLine, &Vector3::new(p.x, p.y, 0.0), cfg.line_distance)
                .is_some()
            {
                hit += 1;
            }
        }
    }
    hit as f64 / total as f64
}

/// Hypothesize a spot on both sides of every corner pair about one spot
/// width apart and keep those whose outline is painted.
pub fn detect_spots(corners: &[Vector2<f64>], lines: &PointCloud, cfg: &SpotConfig) -> Vec<ParkingSpot> {
    let index = line_index(lines);
    detect_spots_indexed(corners, &index, cfg)
}

pub fn detect_spots_indexed(corners: &[Vector2<f64>], lines: &SpatialIndex, cfg: &SpotConfig) -> Vec<ParkingSpot> {
    let mut accepted: Vec<(f64, [Vector2<f64>; 4])> = Vec::new();
    if lines.is_empty() {
        return Vec::new();
    }
    for i in 0..corners.len() {
        for j in i + 1..corners.len() {
            let (a, b) = (corners[i], corners[j]);
            let d = (b - a).norm();
            if (d - cfg.width).abs() > cfg.width_tolerance * cfg.width {
                continue;
            }
            let along = (b - a) / d;
            let normal = Vector2::new(-along.y, along.x);
            for side in [1.0, -1.0] {
                let off = normal * (side * cfg.depth);
                // counter-clockwise for either side
                let quad = if side > 0.0 {
                    [a, b, b + off, a + off]
                } else {
                    [b, a, a + off, b + off]
                };
                let c = coverage(&quad, lines, cfg);
                if c >= cfg.coverage {
                    accepted.push((c, quad));
                }
            }
        }
    }
    // higher coverage first; stable on ties so earlier pairs win
    accepted.sort_by(|x, y| y.0.total_cmp(&x.0));
    let overlap = cfg.width.min(cfg.depth) / 2.0;
    let mut kept: Vec<[Vector2<f64>; 4]> = Vec::new();
    for (_, quad) in accepted {
        let c = quad.iter().sum::<Vector2<f64>>() / 4.0;
        if kept
            .iter()
            .all(|k| (k.iter().sum::<Vector2<f64>>() / 4.0 - c).norm() >= overlap)
        {
            kept.push(quad);
        }
    }
    kept.into_iter()
        .enumerate()
        .map(|(id, corners)| ParkingSpot {
            id: id as u16,
            corners,
            occupied: Occupancy::Unknown,
        })
        .collect()
}

/// Accumulates anchored spots, averaging repeated observations.
#[derive(Debug, Clone, Default)]
pub struct SpotMerger {
    spots: Vec<ParkingSpot>,
    counts: Vec<u32>,
    radius: f64,
}

impl SpotMerger {
    pub fn new(merge_radius: f64) -> Self {
        Self {
            spots: Vec::new(),
            counts: Vec::new(),
            radius: merge_radius,
        }
    }

    pub fn spots(&self) -> &[ParkingSpot] {
        &self.spots
    }

    pub fn into_spots(self) -> Vec<ParkingSpot> {
        self.spots
    }

    fn add(&mut self, spot: ParkingSpot) {
        let c = spot.center();
        let hit = self
            .spots
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (s.center() - c).norm()))
            .filter(|(_, d)| *d < self.radius)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let Some((i, _)) = hit else {
            let id = self.spots.len() as u16;
            self.spots.push(ParkingSpot { id, ..spot });
            self.counts.push(1);
            return;
        };
        // pair corners up under the cyclic shift that fits best
        let old = &self.spots[i].corners;
        let shift = (0..4)
            .min_by(|&p, &q| {
                let cost = |s: usize| (0..4).map(|k| (old[k] - spot.corners[(k + s) % 4]).norm_squared()).sum::<f64>();
                cost(p).total_cmp(&cost(q))
            })
            .unwrap_or(0);
        let n = f64::from(self.counts[i]);
        let merged = &mut self.spots[i].corners;
        for k in 0..4 {
            merged[k] = (merged[k] * n + spot.corners[(k + shift) % 4]) / (n + 1.0);
        }
        self.counts[i] += 1;
    }
}

/// Move spots detected in a local frame into the map frame and merge them.
pub fn anchor_spots(merger: &mut SpotMerger, detected: &[ParkingSpot], pose: &Pose6) {
    for s in detected {
        merger.add(s.transformed(pose));
    }
}

/// Parking-line points along the outline of each quad, every `step` meters.
pub fn rasterize_outline(quads: &[[Vector2<f64>; 4]], step: f64) -> PointCloud {
    let mut cloud = PointCloud::new(Frame::World);
    for quad in quads {
        for i in 0..4 {
            let (a, b) = (quad[i], quad[(i + 1) % 4]);
            let n = ((b - a).norm() / step).ceil() as usize;
            for k in 0..=n {
                let p = a + (b - a) * (k as f64 / n as f64);
                cloud.push(LabeledPoint::new(Vector3::new(p.x, p.y, 0.0), SemanticClass::ParkingLine));
            }
        }
    }
    cloud
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::Frame;
    use crate::sim::world::{generate_world, WorldSpec};

    fn rect(x: f64, y: f64, w: f64, h: f64) -> [Vector2<f64>; 4] {
        [
            Vector2::new(x, y),
            Vector2::new(x + w, y),
            Vector2::new(x + w, y + h),
            Vector2::new(x, y + h),
        ]
    }

    #[test]
    fn no_corners_no_spots() {
        let lines = rasterize_outline(&[rect(0.0, 0.0, 2.5, 5.3)], 0.05);
        assert!(detect_spots(&[], &lines, &SpotConfig::default()).is_empty());
    }

    #[test]
    fn painted_rectangle_on_one_side() {
        let lines = rasterize_outline(&[rect(0.0, 0.0, 2.5, 5.3)], 0.05);
        let corners = [Vector2::new(0.0, 0.0), Vector2::new(2.5, 0.0)];
        let spots = detect_spots(&corners, &lines, &SpotConfig::default());
        assert_eq!(spots.len(), 1);
        let truth = rect(0.0, 0.0, 2.5, 5.3);
        for (c, t) in spots[0].corners.iter().zip(&truth) {
            assert!((c - t).norm() < 0.1);
        }
        assert!(spots[0].is_convex());
    }

    #[test]
    fn unpainted_pair_is_rejected() {
        let corners = [Vector2::new(0.0, 0.0), Vector2::new(2.5, 0.0)];
        let lines = PointCloud::new(Frame::World);
        assert!(detect_spots(&corners, &lines, &SpotConfig::default()).is_empty());
        let far = rasterize_outline(&[rect(20.0, 0.0, 2.5, 5.3)], 0.05);
        assert!(detect_spots(&corners, &far, &SpotConfig::default()).is_empty());
    }

    #[test]
    fn accepted_spots_revalidate() {
        let lines = rasterize_outline(&[rect(0.0, 0.0, 2.5, 5.3), rect(2.5, 0.0, 2.5, 5.3)], 0.05);
        let corners = [Vector2::new(0.0, 0.0), Vector2::new(2.5, 0.0), Vector2::new(5.0, 0.0)];
        let cfg = SpotConfig::default();
        let spots = detect_spots(&corners, &lines, &cfg);
        assert_eq!(spots.len(), 2);
        let idx = line_index(&lines);
        for s in &spots {
            assert!(coverage(&s.corners, &idx, &cfg) >= cfg.coverage);
        }
    }

    #[test]
    fn world_spots_are_found_from_truth_geometry() {
        let spec = WorldSpec {
            spots_per_row: 6,
            ..WorldSpec::default()
        };
        let world = generate_world(&spec).unwrap();
        // line centerlines are enough evidence at 0.15 m tolerance
        let mut lines = PointCloud::new(Frame::World);
        for s in &world.parking_lines {
            let n = ((s.b - s.a).norm() / 0.05).ceil() as usize;
            for k in 0..=n {
                let p = s.a + (s.b - s.a) * (k as f64 / n as f64);
                lines.push(LabeledPoint::new(Vector3::new(p.x, p.y, 0.0), SemanticClass::ParkingLine));
            }
        }
        let spots = detect_spots(&world.corners, &lines, &SpotConfig::default());
        assert_eq!(spots.len(), world.spots.len());
        for truth in &world.spots {
            let best = spots
                .iter()
                .map(|s| (s.center() - truth.center()).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9);
        }
    }

    #[test]
    fn anchoring_identity_and_merge() {
        let spot = ParkingSpot {
            id: 0,
            corners: rect(1.0, 2.0, 2.5, 5.3),
            occupied: Occupancy::Unknown,
        };
        let mut m = SpotMerger::new(0.5);
        anchor_spots(&mut m, std::slice::from_ref(&spot), &Pose6::identity());
        assert_eq!(m.spots()[0].corners, spot.corners);

        // the same spot seen from a vehicle at (1, 2, 90 deg)
        let pose = Pose6::planar(1.0, 2.0, std::f64::consts::FRAC_PI_2);
        let local = spot.transformed(&pose.inverse());
        anchor_spots(&mut m, &[local], &pose);
        assert_eq!(m.spots().len(), 1);
        for (a, b) in m.spots()[0].corners.iter().zip(&spot.corners) {
            assert!((a - b).norm() < 1e-9);
        }

        let other = ParkingSpot {
            corners: rect(10.0, 2.0, 2.5, 5.3),
            ..spot.clone()
        };
        anchor_spots(&mut m, &[other], &Pose6::identity());
        assert_eq!(m.spots().len(), 2);
        assert_eq!(m.spots()[1].id, 1);
    }

    #[test]
    fn merge_averages_shifted_corner_order() {
        let a = ParkingSpot {
            id: 0,
            corners: rect(0.0, 0.0, 2.5, 5.3),
            occupied: Occupancy::Unknown,
        };
        let mut b = a.clone();
        b.corners.rotate_left(2);
        for c in &mut b.corners {
            c.x += 0.2;
        }
        let mut m = SpotMerger::new(0.5);
        anchor_spots(&mut m, &[a.clone(), b], &Pose6::identity());
        assert_eq!(m.spots().len(), 1);
        for (x, y) in m.spots()[0].corners.iter().zip(&a.corners) {
            assert!((x - y - Vector2::new(0.1, 0.0)).norm() < 1e-12);
        }
    }
}
