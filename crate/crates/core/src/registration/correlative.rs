//! Exhaustive planar search for registration starting points.
//!
//! The target is rasterized into a per-class occupancy grid; every
//! translation on the grid and every yaw step is scored by how many source
//! points land on occupied cells of their own class. Each class is weighted
//! equally, so rare but distinctive classes (signs, bumps) outvote the
//! periodic parking lines that would otherwise alias by one spot width.

use super::{PointCloud, SpatialIndex};
use crate::geometry::Pose6;
use crate::semantics::SemanticClass;
use nalgebra::{Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Translations up to this far from the guess are tried, meters.
    pub radius: f64,
    /// Translation step and grid cell, meters.
    pub step: f64,
    /// Yaw offsets up to this far from the guess are tried, rad.
    pub yaw_range: f64,
    pub yaw_step: f64,
    /// Source points used for scoring, split evenly across classes.
    pub max_source: usize,
    /// Classes with fewer source points than this are ignored.
    pub min_class_points: usize,
    /// Number of distinct peaks returned.
    pub peaks: usize,
    /// Peaks closer than this in translation count as one, meters.
    pub peak_separation: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            radius: 6.0,
            step: 0.2,
            yaw_range: 0.08,
            yaw_step: 0.01,
            max_source: 2000,
            min_class_points: 10,
            peaks: 3,
            peak_separation: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    /// Maps source points into the target frame.
    pub pose: Pose6,
    /// Class-balanced hit fraction in `[0, 1]`.
    pub score: f64,
}

struct Grid {
    origin: Vector2<f64>,
    cell: f64,
    w: i64,
    h: i64,
    masks: Vec<u16>,
}

impl Grid {
    /// Occupancy of `cloud` by class.
    fn build(cloud: &PointCloud, cell: f64) -> Option<Self> {
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for p in cloud.points.iter().filter(|p| p.class.is_feature()) {
            lo = lo.inf(&p.position.xy());
            hi = hi.sup(&p.position.xy());
        }
        if lo.x > hi.x {
            return None;
        }
        let origin = lo.add_scalar(-2.0 * cell);
        let w = ((hi.x - origin.x) / cell).ceil() as i64 + 3;
        let h = ((hi.y - origin.y) / cell).ceil() as i64 + 3;
        let mut masks = vec![0u16; (w * h) as usize];
        for p in cloud.points.iter().filter(|p| p.class.is_feature()) {
            let ix = ((p.position.x - origin.x) / cell).round() as i64;
            let iy = ((p.position.y - origin.y) / cell).round() as i64;
            masks[(iy * w + ix) as usize] |= 1 << p.class.code();
        }
        Some(Self {
            origin,
            cell,
            w,
            h,
            masks,
        })
    }

    fn get(&self, ix: i64, iy: i64) -> u16 {
        if ix < 0 || iy < 0 || ix >= self.w || iy >= self.h {
            0
        } else {
            self.masks[(iy * self.w + ix) as usize]
        }
    }
}

/// Source points and weights used for scoring: an even share per class
/// with enough points, each class summing to `1 / classes`.
fn scoring_points(source: &PointCloud, cfg: &SearchConfig) -> Vec<(Vector3<f64>, SemanticClass, f64)> {
    let classes: Vec<SemanticClass> = SemanticClass::ALL
        .into_iter()
        .filter(|c| c.is_feature() && source.of_class(*c).count() >= cfg.min_class_points.max(1))
        .collect();
    let share = cfg.max_source / classes.len().max(1);
    let mut out = Vec::new();
    for &c in &classes {
        let n = source.of_class(c).count();
        let stride = n.div_ceil(share.max(1)).max(1);
        let picked: Vec<_> = source.of_class(c).step_by(stride).copied().collect();
        let w = 1.0 / (picked.len() as f64 * classes.len() as f64);
        out.extend(picked.into_iter().map(|p| (p, c, w)));
    }
    out
}

/// Best-scoring poses near `guess`, highest first, at most `cfg.peaks`.
pub fn correlative_search(source: &PointCloud, target: &PointCloud, guess: &Pose6, cfg: &SearchConfig) -> Vec<Hypothesis> {
    let Some(grid) = Grid::build(target, cfg.step) else {
        return Vec::new();
    };
    let pts = scoring_points(source, cfg);
    if pts.is_empty() {
        return Vec::new();
    }
    let moved: Vec<Vector3<f64>> = pts.iter().map(|(p, _, _)| guess.transform_point(p)).collect();
    let center = moved.iter().sum::<Vector3<f64>>() / moved.len() as f64;

    let k = (cfg.radius / cfg.step).round() as i64;
    let side = (2 * k + 1) as usize;
    let n_yaw = (cfg.yaw_range / cfg.yaw_step).round() as i64;
    let mut scored: Vec<(f64, f64, i64, i64)> = Vec::new();
    let mut acc = vec![0.0; side * side];
    for yi in -n_yaw..=n_yaw {
        let yaw = yi as f64 * cfg.yaw_step;
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (q, (_, class, w)) in moved.iter().zip(&pts) {
            let r = rot * (q - center) + center;
            let ix = ((r.x - grid.origin.x) / grid.cell).round() as i64;
            let iy = ((r.y - grid.origin.y) / grid.cell).round() as i64;
            let bit = 1u16 << class.code();
            for b in -k..=k {
                let row = ((b + k) as usize) * side;
                for a in -k..=k {
                    if grid.get(ix + a, iy + b) & bit != 0 {
                        acc[row + (a + k) as usize] += w;
                    }
                }
            }
        }
        for b in -k..=k {
            for a in -k..=k {
                let s = acc[((b + k) as usize) * side + (a + k) as usize];
                if s > 0.0 {
                    scored.push((s, yaw, a, b));
                }
            }
        }
    }
    // stable: equal scores keep the search order
    scored.sort_by(|x, y| y.0.total_cmp(&x.0));

    let mut peaks: Vec<(f64, f64, Vector2<f64>)> = Vec::new();
    for (s, yaw, a, b) in scored {
        let d = Vector2::new(a as f64, b as f64) * cfg.step;
        if peaks.iter().any(|(_, _, e)| (e - d).norm() < cfg.peak_separation) {
            continue;
        }
        peaks.push((s, yaw, d));
        if peaks.len() >= cfg.peaks {
            break;
        }
    }
    peaks
        .into_iter()
        .map(|(score, yaw, d)| {
            // rotate about the moved source centroid, then shift
            let about = Pose6::planar(center.x, center.y, 0.0);
            let delta = Pose6::planar(center.x + d.x, center.y + d.y, yaw).compose(&about.inverse());
            Hypothesis {
                pose: delta.compose(guess),
                score,
            }
        })
        .collect()
}

/// Fraction of source points with a same-class target point within
/// `radius` under `pose`, averaged over classes with at least `min_points`
/// source points. Zero when no class qualifies.
pub fn class_balanced_overlap(source: &PointCloud, target: &SpatialIndex, pose: &Pose6, radius: f64, min_points: usize) -> f64 {
    let rot = pose.rotation();
    let mut total = 0.0;
    let mut classes = 0;
    for c in SemanticClass::ALL.into_iter().filter(|c| c.is_feature()) {
        let (mut n, mut hit) = (0usize, 0usize);
        for p in source.of_class(c) {
            n += 1;
            if target.nearest(c, &(rot * p + pose.t), radius).is_some() {
                hit += 1;
            }
        }
        if n >= min_points.max(1) {
            total += hit as f64 / n as f64;
            classes += 1;
        }
    }
    if classes == 0 {
        0.0
    } else {
        total / f64::from(classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::Frame;
    use crate::semantics::LabeledPoint;

    /// Periodic lines plus one sign: only the sign fixes the shift along x.
    fn aliased_scene() -> PointCloud {
        let mut c = PointCloud::new(Frame::LocalMap);
        for k in 0..12 {
            let x = 2.5 * f64::from(k);
            for j in 0..50 {
                c.push(LabeledPoint::new(Vector3::new(x, 0.1 * f64::from(j), 0.0), SemanticClass::ParkingLine));
            }
        }
        for a in 0..10 {
            for b in 0..5 {
                c.push(LabeledPoint::new(
                    Vector3::new(13.1 + 0.1 * f64::from(a), -3.0 + 0.1 * f64::from(b), 0.0),
                    SemanticClass::GuideSign,
                ));
            }
        }
        c
    }

    #[test]
    fn recovers_offset_beyond_the_line_period() {
        let target = aliased_scene();
        let truth = Pose6::planar(0.0, 0.0, 0.0);
        // the guess is off by more than one line spacing
        let guess = Pose6::planar(3.4, -0.6, 0.03);
        let hyps = correlative_search(&target, &target, &guess, &SearchConfig::default());
        assert!(!hyps.is_empty());
        let best = hyps[0];
        assert!((best.pose.t - truth.t).norm() < 0.25, "{:?}", best.pose);
        assert!(best.pose.yaw().abs() < 0.015);
        assert!(best.score > 0.8, "{}", best.score);
        // the aliased alignment one line over scores lower
        assert!(hyps.iter().skip(1).all(|h| h.score < best.score - 0.2));
    }

    #[test]
    fn peaks_are_separated_and_sorted() {
        let target = aliased_scene();
        let hyps = correlative_search(&target, &target, &Pose6::identity(), &SearchConfig::default());
        assert_eq!(hyps.len(), 3);
        for w in hyps.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
        for (i, a) in hyps.iter().enumerate() {
            for b in &hyps[i + 1..] {
                assert!((a.pose.t - b.pose.t).xy().norm() >= 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn empty_inputs_give_no_hypotheses() {
        let target = aliased_scene();
        let empty = PointCloud::new(Frame::LocalMap);
        let cfg = SearchConfig::default();
        assert!(correlative_search(&empty, &target, &Pose6::identity(), &cfg).is_empty());
        assert!(correlative_search(&target, &empty, &Pose6::identity(), &cfg).is_empty());
    }

    #[test]
    fn overlap_counts_each_class_equally() {
        let target = aliased_scene();
        let index = SpatialIndex::build(&target, 0.5);
        assert!((class_balanced_overlap(&target, &index, &Pose6::identity(), 0.05, 10) - 1.0).abs() < 1e-12);
        // shifting by one line period keeps every line point but loses the sign
        let shifted = class_balanced_overlap(&target, &index, &Pose6::planar(2.5, 0.0, 0.0), 0.05, 10);
        assert!(shifted < 0.95 && shifted > 0.4, "{shifted}");
    }
}
