//! End-to-end runs on the simulator: build a map, localize a second drive
//! against it, sweep feature dropout.

use super::config::{RunConfig, Session};
use super::{ate, localization_error, nees, recall, EvalError};
use crate::geometry::Pose6;
use crate::localization::{FrameOutcome, TrackStatus, Tracker};
use crate::map_store::{file_size, human_bytes};
use crate::mapping::{GlobalMap, Mapper, MappingOutput};
use crate::registration::PointCloud;
use crate::semantics::NoiseSpec;
use crate::sim::{dead_reckon, generate_trajectory, observe, simulate_odometry, RouteSpec, SimError, TimedPose, WorldModel};
use crate::sim::trajectory::path_length;
use serde::{Deserialize, Serialize};

/// Frames rendered ahead of consumption per batch.
const BATCH: usize = 240;

/// Metrics of one command. Fields that do not apply are left out of the JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_length: Option<f64>,
    /// Position ATE of the estimate, meters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_err: Option<f64>,
    /// RMSE over path length, percent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nees: Option<f64>,
    /// Same three for dead-reckoned odometry.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odometry_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odometry_max_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odometry_nees: Option<f64>,
    /// Error of the estimated end-to-start displacement, meters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closing_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loops: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    /// Planar error over tracking frames, centimeters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loc_err_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loc_err_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_spots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_bytes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_size: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<RecallPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub p_drop: f64,
    pub recall: f64,
    pub loc_err_mean: Option<f64>,
    pub loc_err_max: Option<f64>,
}

/// Feature clouds for each pose, rendered in parallel batches and handed to
/// `sink` in order.
pub fn for_each_observation<F>(
    world: &WorldModel,
    truth: &[TimedPose],
    cfg: &RunConfig,
    noise: &NoiseSpec,
    mut sink: F,
) -> Result<(), EvalError>
where
    F: FnMut(usize, PointCloud) -> Result<(), EvalError>,
{
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    for (b, batch) in truth.chunks(BATCH).enumerate() {
        let per = batch.len().div_ceil(workers);
        let clouds: Vec<PointCloud> = std::thread::scope(|s| {
            let handles: Vec<_> = batch
                .chunks(per)
                .map(|part| {
                    s.spawn(move || {
                        part.iter()
                            .map(|tp| observe(world, &tp.pose, tp.time, &cfg.ipm, noise, cfg.tier).cloud)
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("observer thread")).collect()
        });
        for (k, c) in clouds.into_iter().enumerate() {
            sink(b * BATCH + k, c)?;
        }
    }
    Ok(())
}

/// Ground truth for `route`, checked against the world's extent.
pub fn drive(world: &WorldModel, route: &RouteSpec) -> Result<Vec<TimedPose>, EvalError> {
    let truth = generate_trajectory(route)?;
    let inside = |p: &Pose6| p.t.x >= 0.0 && p.t.y >= 0.0 && p.t.x <= world.extent.x && p.t.y <= world.extent.y;
    if let Some(k) = truth.iter().position(|tp| !inside(&tp.pose)) {
        return Err(SimError::InvalidRoute(format!("pose {k} leaves the world extent")).into());
    }
    Ok(truth)
}

#[derive(Debug, Clone)]
pub struct MappingRun {
    pub output: MappingOutput,
    pub truth: Vec<TimedPose>,
    pub dead_reckoning: Vec<TimedPose>,
    pub report: RunReport,
}

/// Drive `route` with noisy odometry and build the map.
pub fn run_mapping(world: &WorldModel, route: &RouteSpec, cfg: &RunConfig) -> Result<MappingRun, EvalError> {
    let truth = drive(world, route)?;
    let increments = simulate_odometry(&truth, &cfg.odometry_for(Session::Mapping));
    let dr = dead_reckon(&truth[0].pose, &truth, &increments);
    let noise = cfg.segmentation_for(Session::Mapping);
    let mut mapper = Mapper::new(cfg.mapping);
    for_each_observation(world, &truth, cfg, &noise, |k, feats| {
        mapper.push(dr[k].time, &dr[k].pose, &feats)?;
        Ok(())
    })?;
    let mut output = mapper.finish()?;
    output.map.digest = cfg.map_digest();

    let length = path_length(&truth);
    let (rmse, max_err) = ate(&output.trajectory, &truth)?;
    let (odo_rmse, odo_max) = ate(&dr, &truth)?;
    let report = RunReport {
        command: "map".into(),
        seed: Some(cfg.seed),
        frames: Some(truth.len()),
        path_length: Some(length),
        rmse: Some(rmse),
        max_err: Some(max_err),
        nees: Some(nees(rmse, length)?),
        odometry_rmse: Some(odo_rmse),
        odometry_max_err: Some(odo_max),
        odometry_nees: Some(nees(odo_rmse, length)?),
        closing_gap: Some(closing_gap(&output.trajectory, &truth)),
        loops: Some(output.loops.len()),
        ..map_fields(&output.map)
    };
    Ok(MappingRun {
        output,
        truth,
        dead_reckoning: dr,
        report,
    })
}

/// Error of the estimated displacement from the first to the last frame.
pub fn closing_gap(est: &[TimedPose], truth: &[TimedPose]) -> f64 {
    match (est.first(), est.last(), truth.first(), truth.last()) {
        (Some(e0), Some(e1), Some(g0), Some(g1)) => ((e1.pose.t - e0.pose.t) - (g1.pose.t - g0.pose.t)).norm(),
        _ => 0.0,
    }
}

/// Size fields of a report for `map`.
pub fn map_fields(map: &GlobalMap) -> RunReport {
    let bytes = file_size(map.cloud.len() as u64, map.spots.len() as u64);
    RunReport {
        map_points: Some(map.cloud.len()),
        map_spots: Some(map.spots.len()),
        map_bytes: Some(bytes),
        map_size: Some(human_bytes(bytes)),
        ..RunReport::default()
    }
}

#[derive(Debug, Clone)]
pub struct LocalizationRun {
    pub outcomes: Vec<FrameOutcome>,
    pub truth: Vec<TimedPose>,
    /// Filter mean per frame.
    pub estimate: Vec<TimedPose>,
    pub report: RunReport,
}

impl LocalizationRun {
    /// Estimates of the frames whose status was tracking.
    pub fn tracking(&self) -> Vec<TimedPose> {
        self.estimate
            .iter()
            .zip(&self.outcomes)
            .filter(|(_, o)| o.state.status == TrackStatus::Tracking)
            .map(|(e, _)| *e)
            .collect()
    }
}

/// Drive `route` shifted by `cfg.relocalization_offset` and track it on `map`.
pub fn run_localization(map: &GlobalMap, world: &WorldModel, route: &RouteSpec, cfg: &RunConfig) -> Result<LocalizationRun, EvalError> {
    let truth = drive(world, &route.shifted(cfg.relocalization_offset))?;
    let increments = simulate_odometry(&truth, &cfg.odometry_for(Session::Localization));
    let [ex, ey, eyaw] = cfg.initial_error;
    let hint = truth[0].pose.compose(&Pose6::planar(ex, ey, eyaw));
    let mut tracker = Tracker::new(map, Some(hint), cfg.localization);
    let noise = cfg.segmentation_for(Session::Localization);
    let mut outcomes = Vec::with_capacity(truth.len());
    for_each_observation(world, &truth, cfg, &noise, |k, feats| {
        let o = match k {
            0 => tracker.correct(&feats)?,
            _ => tracker.step(&increments[k - 1], &feats)?,
        };
        outcomes.push(o);
        Ok(())
    })?;
    let estimate: Vec<TimedPose> = truth
        .iter()
        .zip(&outcomes)
        .map(|(tp, o)| TimedPose {
            time: tp.time,
            pose: o.state.mean,
        })
        .collect();
    let mut run = LocalizationRun {
        outcomes,
        truth,
        estimate,
        report: RunReport::default(),
    };
    let flags: Vec<bool> = run.outcomes.iter().map(|o| o.relocalized).collect();
    let (rmse, max_err) = ate(&run.estimate, &run.truth)?;
    let (mean, max) = match localization_error(&run.tracking(), &run.truth) {
        Ok((m, x)) => (Some(m), Some(x)),
        Err(EvalError::NoTracking) => (None, None),
        Err(e) => return Err(e),
    };
    run.report = RunReport {
        command: "localize".into(),
        seed: Some(cfg.seed),
        frames: Some(run.truth.len()),
        path_length: Some(path_length(&run.truth)),
        rmse: Some(rmse),
        max_err: Some(max_err),
        recall: Some(recall(&flags)?),
        loc_err_mean: mean,
        loc_err_max: max,
        ..map_fields(map)
    };
    Ok(run)
}

/// Localize once per dropout probability.
pub fn recall_study(
    map: &GlobalMap,
    world: &WorldModel,
    route: &RouteSpec,
    cfg: &RunConfig,
    drops: &[f64],
) -> Result<RunReport, EvalError> {
    let sweep = drops
        .iter()
        .map(|&p| {
            let mut c = cfg.clone();
            c.segmentation.p_drop = p;
            let r = run_localization(map, world, route, &c)?.report;
            Ok(RecallPoint {
                p_drop: p,
                recall: r.recall.unwrap_or(0.0),
                loc_err_mean: r.loc_err_mean,
                loc_err_max: r.loc_err_max,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(RunReport {
        command: "recall-study".into(),
        seed: Some(cfg.seed),
        sweep: Some(sweep),
        ..RunReport::default()
    })
}
