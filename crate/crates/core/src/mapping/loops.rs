//! Loop detection: register the newest local map against older ones that
//! pass nearby.

use super::LocalMap;
use crate::geometry::{relative, Pose6};
use crate::registration::{
    class_balanced_overlap, correlative_search, icp, icp_with_restarts, IcpConfig, IcpResult, PointCloud, SearchConfig, SpatialIndex,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Candidates must have driven within this distance of the latest map.
    pub loop_radius: f64,
    /// The most recent maps before the latest are never candidates.
    pub exclude_recent: usize,
    /// Only source points within this distance of the candidate's cloud
    /// (under the initial guess) take part, so the score reflects the overlap.
    pub crop_radius: f64,
    /// Correspondence gate of the first, wide ICP pass.
    pub coarse_max_corr: f64,
    pub icp: IcpConfig,
    /// Search for ICP starting points around the odometry guess.
    pub search: SearchConfig,
    /// A match is kept when this share of each class (averaged over
    /// classes) lands within `overlap_radius` of its own class.
    pub min_overlap: f64,
    pub overlap_radius: f64,
    /// Offset of the extra ICP starts around each refined match, meters.
    pub restart_step: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            loop_radius: 15.0,
            exclude_recent: 2,
            crop_radius: 3.0,
            coarse_max_corr: 2.5,
            // loops are rare, so run them to a tight fixed point
            icp: IcpConfig {
                max_iter: 100,
                tol: 1e-6,
                ..IcpConfig::default()
            },
            search: SearchConfig::default(),
            min_overlap: 0.6,
            overlap_radius: 0.2,
            restart_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopEdge {
    /// Older map.
    pub i: usize,
    /// Latest map.
    pub j: usize,
    /// Pose of map `j` in the frame of map `i`, refined by ICP.
    pub z: Pose6,
    pub result: IcpResult,
    /// Class-balanced overlap at `z`.
    pub overlap: f64,
}

/// Closest approach between the driven paths of two maps, meters.
pub fn path_distance(a: &LocalMap, pa: &Pose6, b: &LocalMap, pb: &Pose6) -> f64 {
    let track = |m: &LocalMap, p: &Pose6| -> Vec<_> {
        let mut pts: Vec<_> = m.keyposes.iter().step_by(5).map(|k| p.compose(k).t.xy()).collect();
        pts.push(p.t.xy());
        if let Some(last) = m.keyposes.last() {
            pts.push(p.compose(last).t.xy());
        }
        pts
    };
    let (ta, tb) = (track(a, pa), track(b, pb));
    ta.iter()
        .flat_map(|x| tb.iter().map(move |y| (x - y).norm()))
        .fold(f64::INFINITY, f64::min)
}

/// Best accepted ICP match between `latest` and an older, nearby map, if any.
/// `poses[k]` is the current estimate of map `k`'s origin.
pub fn detect_loop(latest: &LocalMap, others: &[LocalMap], poses: &[Pose6], cfg: &LoopConfig) -> Option<LoopEdge> {
    let pj = poses[latest.id];
    let mut best: Option<LoopEdge> = None;
    for cand in others {
        if cand.id + cfg.exclude_recent >= latest.id {
            continue;
        }
        let pi = poses[cand.id];
        if path_distance(latest, &pj, cand, &pi) > cfg.loop_radius {
            continue;
        }
        let Some(edge) = match_pair(latest, cand, &relative(&pi, &pj), cfg) else {
            continue;
        };
        if best.is_none_or(|b| edge.overlap > b.overlap) {
            best = Some(edge);
        }
    }
    best
}

/// Register `latest` onto `cand` near `guess`. Each search peak is refined
/// by a wide and a tight ICP pass; the refined pose with the best
/// class-balanced overlap is kept if it clears `min_overlap`.
pub fn match_pair(latest: &LocalMap, cand: &LocalMap, guess: &Pose6, cfg: &LoopConfig) -> Option<LoopEdge> {
    let target = SpatialIndex::build(&cand.cloud, super::INDEX_CELL);
    let coarse = IcpConfig {
        max_corr: cfg.coarse_max_corr,
        ..cfg.icp
    };
    let mut best: Option<LoopEdge> = None;
    for hyp in correlative_search(&latest.cloud, &cand.cloud, guess, &cfg.search) {
        let rot = hyp.pose.rotation();
        let cropped: Vec<_> = latest
            .cloud
            .points
            .iter()
            .filter(|p| target.nearest_any(&(rot * p.position + hyp.pose.t), cfg.crop_radius).is_some())
            .copied()
            .collect();
        let source = PointCloud::from_points(cropped, latest.cloud.frame);
        let Ok(first) = icp(&source, &target, &hyp.pose, &coarse) else {
            continue;
        };
        let Ok(fine) = icp_with_restarts(&source, &target, &first.pose, &cfg.icp, cfg.restart_step) else {
            continue;
        };
        if !fine.converged {
            continue;
        }
        let overlap = class_balanced_overlap(&source, &target, &fine.pose, cfg.overlap_radius, cfg.search.min_class_points);
        if overlap >= cfg.min_overlap && best.is_none_or(|b| overlap > b.overlap) {
            best = Some(LoopEdge {
                i: cand.id,
                j: latest.id,
                z: fine.pose,
                result: fine,
                overlap,
            });
        }
    }
    best
}
