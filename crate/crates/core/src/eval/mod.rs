//! Metrics, trajectory files, run configuration and the experiments the
//! command line drives.

pub mod config;
pub mod experiment;
pub mod trajectory_io;

pub use config::{RunConfig, SEED_ENV};
pub use experiment::{recall_study, run_localization, run_mapping, LocalizationRun, MappingRun, RecallPoint, RunReport};
pub use trajectory_io::{read_trajectory, write_trajectory};

use crate::sim::TimedPose;
use thiserror::Error;

/// Timestamp association window, seconds.
pub const MATCH_WINDOW: f64 = 1.0 / 30.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no estimated pose has a ground-truth timestamp within 1/30 s")]
    NoOverlap,
    #[error("no frames were tracking")]
    NoTracking,
    #[error("empty relocalization log")]
    EmptyLog,
    #[error("trajectory length must be positive, got {0}")]
    ZeroLength(f64),
    #[error("{path}: line {line}: {reason}")]
    Trajectory { path: String, line: usize, reason: String },
    #[error("{SEED_ENV} must be an unsigned integer, got {0:?}")]
    BadSeed(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Mapping(#[from] crate::mapping::MappingError),
    #[error(transparent)]
    Localization(#[from] crate::localization::LocError),
    #[error(transparent)]
    MapStore(#[from] crate::map_store::MapStoreError),
    #[error(transparent)]
    Camera(#[from] crate::camera_ipm::CameraError),
}

/// Pairs of (estimate, ground truth) whose timestamps are nearest neighbors
/// within [`MATCH_WINDOW`]. `gt` must be sorted by time.
pub fn associate<'a>(est: &'a [TimedPose], gt: &'a [TimedPose]) -> Vec<(&'a TimedPose, &'a TimedPose)> {
    est.iter()
        .filter_map(|e| {
            let k = gt.partition_point(|g| g.time < e.time);
            let near = [k.checked_sub(1), Some(k)]
                .into_iter()
                .flatten()
                .filter_map(|i| gt.get(i))
                .min_by(|a, b| (a.time - e.time).abs().total_cmp(&(b.time - e.time).abs()))?;
            // slack for timestamps that went through a 9-digit text round trip
            ((near.time - e.time).abs() <= MATCH_WINDOW * (1.0 + 1e-9)).then_some((e, near))
        })
        .collect()
}

/// Absolute trajectory error without alignment: (RMSE, max) of position
/// error in meters.
pub fn ate(est: &[TimedPose], gt: &[TimedPose]) -> Result<(f64, f64), EvalError> {
    let pairs = associate(est, gt);
    if pairs.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    let errs: Vec<f64> = pairs.iter().map(|(e, g)| (e.pose.t - g.pose.t).norm()).collect();
    let rmse = (errs.iter().map(|d| d * d).sum::<f64>() / errs.len() as f64).sqrt();
    Ok((rmse, errs.iter().copied().fold(0.0, f64::max)))
}

/// RMSE as a percentage of the trajectory length.
pub fn nees(rmse: f64, length: f64) -> Result<f64, EvalError> {
    if !(length > 0.0) {
        return Err(EvalError::ZeroLength(length));
    }
    Ok(100.0 * rmse / length)
}

/// Percentage of frames that relocalized.
pub fn recall(relocalized: &[bool]) -> Result<f64, EvalError> {
    if relocalized.is_empty() {
        return Err(EvalError::EmptyLog);
    }
    let hits = relocalized.iter().filter(|&&r| r).count();
    Ok(100.0 * hits as f64 / relocalized.len() as f64)
}

/// Mean and max planar position error in centimeters. Callers pass only the
/// frames that were tracking.
pub fn localization_error(est: &[TimedPose], gt: &[TimedPose]) -> Result<(f64, f64), EvalError> {
    let pairs = associate(est, gt);
    if pairs.is_empty() {
        return Err(EvalError::NoTracking);
    }
    let errs: Vec<f64> = pairs.iter().map(|(e, g)| 100.0 * (e.pose.t.xy() - g.pose.t.xy()).norm()).collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    Ok((mean, errs.iter().copied().fold(0.0, f64::max)))
}
