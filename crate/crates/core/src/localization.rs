//! Relocalization against a prior map and odometry/ICP fusion in an EKF.
//!
//! The state is a pose with a 6x6 covariance over right perturbations
//! `mean ⊕ δ`, `δ = (rotvec, translation)`.

use crate::geometry::{skew, Pose6};
use crate::mapping::GlobalMap;
use crate::registration::{icp, icp_with_restarts, IcpConfig, PointCloud};
use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocError {
    #[error("{0} matrix is not symmetric positive semi-definite")]
    NotPsd(&'static str),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("state is not initialized")]
    Uninitialized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Uninitialized,
    Tracking,
    Coasting,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocState {
    pub mean: Pose6,
    pub cov: Matrix6<f64>,
    pub status: TrackStatus,
}

impl LocState {
    pub fn uninitialized() -> Self {
        Self {
            mean: Pose6::identity(),
            cov: Matrix6::zeros(),
            status: TrackStatus::Uninitialized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMeasurement {
    pub pose: Pose6,
    pub mean_residual: f64,
    pub inlier_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocConfig {
    /// Initial covariance diagonal: rad² for rotation, m² for translation.
    pub init_cov: [f64; 6],
    /// Per-frame process noise diagonal.
    pub process_noise: [f64; 6],
    /// Measurement std-devs at a nominal ICP residual, rad and m.
    pub sigma_rot: f64,
    pub sigma_trans: f64,
    /// ICP mean residual at which measurement noise starts to inflate.
    pub nominal_residual: f64,
    /// Chi-square gate on the innovation (6 dof).
    pub gate: f64,
    /// Attempt relocalization every this many frames.
    pub reloc_stride: usize,
    /// Keep every this-many-th feature point as ICP source.
    pub source_stride: usize,
    pub icp: IcpConfig,
    /// Offset of the extra ICP starts around a match, meters; zero
    /// disables them.
    pub restart_step: f64,
    /// Frames with restarts are this many frames apart.
    pub restart_stride: usize,
}

impl Default for LocConfig {
    fn default() -> Self {
        Self {
            init_cov: [0.01, 0.01, 0.01, 1.0, 1.0, 1.0],
            process_noise: [1e-6, 1e-6, 4e-6, 1e-4, 1e-4, 1e-6],
            sigma_rot: 0.002,
            sigma_trans: 0.02,
            nominal_residual: 0.02,
            gate: 16.8,
            reloc_stride: 1,
            source_stride: 2,
            icp: IcpConfig::default(),
            restart_step: 0.1,
            restart_stride: 15,
        }
    }
}

impl LocConfig {
    pub fn process_noise(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&Vector6::from_row_slice(&self.process_noise))
    }

    /// `diag(σ_r², σ_t²)` inflated when the match was loose.
    pub fn measurement_noise(&self, m: &PoseMeasurement) -> Matrix6<f64> {
        let inflate = (m.mean_residual / self.nominal_residual).max(1.0);
        let (r, t) = (self.sigma_rot.powi(2), self.sigma_trans.powi(2));
        Matrix6::from_diagonal(&Vector6::new(r, r, r, t, t, t)) * inflate
    }
}

/// Start at `hint`, or at the map's entrance without one.
pub fn initialize(map: &GlobalMap, hint: Option<Pose6>, cfg: &LocConfig) -> LocState {
    LocState {
        mean: hint.unwrap_or(map.entrance),
        cov: Matrix6::from_diagonal(&Vector6::from_row_slice(&cfg.init_cov)),
        status: TrackStatus::Coasting,
    }
}

/// Register vehicle-frame features against the map from `prior`. A positive
/// `restart_step` also tries starts that far around the first result.
pub fn relocalize(feats: &PointCloud, map: &GlobalMap, prior: &Pose6, cfg: &IcpConfig, restart_step: f64) -> Option<PoseMeasurement> {
    let res = if restart_step > 0.0 {
        icp_with_restarts(feats, &map.index, prior, cfg, restart_step)
    } else {
        icp(feats, &map.index, prior, cfg)
    }
    .ok()?;
    res.converged.then_some(PoseMeasurement {
        pose: res.pose,
        mean_residual: res.mean_residual,
        inlier_ratio: res.inlier_ratio,
    })
}

fn check_psd(m: &Matrix6<f64>, name: &'static str) -> Result<(), LocError> {
    if (m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
        return Err(LocError::NotPsd(name));
    }
    let eig = SymmetricEigen::new(*m);
    if eig.eigenvalues.iter().any(|&e| e < -1e-12) {
        return Err(LocError::NotPsd(name));
    }
    Ok(())
}

/// Jacobian of `δ ↦ (mean ⊕ δ) ∘ delta`, expressed as a perturbation of
/// the composed pose, to first order.
pub fn predict_jacobian(delta: &Pose6) -> Matrix6<f64> {
    let rt = delta.rotation().transpose();
    let mut f = Matrix6::zeros();
    f.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    f.fixed_view_mut::<3, 3>(3, 3).copy_from(&rt);
    let coupling: Matrix3<f64> = -rt * skew(&delta.t);
    f.fixed_view_mut::<3, 3>(3, 0).copy_from(&coupling);
    f
}

/// Propagate the state through an odometry increment.
pub fn ekf_predict(s: &LocState, delta: &Pose6, q: &Matrix6<f64>) -> Result<LocState, LocError> {
    if s.status == TrackStatus::Uninitialized {
        return Err(LocError::Uninitialized);
    }
    check_psd(q, "process noise")?;
    let f = predict_jacobian(delta);
    let cov = f * s.cov * f.transpose() + q;
    Ok(LocState {
        mean: s.mean.compose(delta),
        cov: (cov + cov.transpose()) * 0.5,
        status: s.status,
    })
}

/// Correct the state with a pose measurement. Returns the new state and
/// whether the measurement passed the gate.
pub fn ekf_update(s: &LocState, m: &PoseMeasurement, r: &Matrix6<f64>, gate: f64) -> Result<(LocState, bool), LocError> {
    if s.status == TrackStatus::Uninitialized {
        return Err(LocError::Uninitialized);
    }
    let nu = s.mean.ominus(&m.pose);
    let innovation_cov = s.cov + r;
    let s_inv = innovation_cov
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(LocError::SingularInnovation)?;
    let d2 = (nu.transpose() * s_inv * nu)[0];
    if !(d2 <= gate) {
        return Ok((
            LocState {
                status: TrackStatus::Coasting,
                ..*s
            },
            false,
        ));
    }
    let k = s.cov * s_inv;
    let i_k = Matrix6::identity() - k;
    // Joseph form keeps the covariance PSD under rounding
    let cov = i_k * s.cov * i_k.transpose() + k * r * k.transpose();
    Ok((
        LocState {
            mean: s.mean.oplus(&(k * nu)),
            cov: (cov + cov.transpose()) * 0.5,
            status: TrackStatus::Tracking,
        },
        true,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutcome {
    pub state: LocState,
    pub measurement: Option<PoseMeasurement>,
    /// ICP accepted the match and the EKF gate let it through.
    pub relocalized: bool,
}

/// Per-frame predict / relocalize / update loop over a fixed map.
#[derive(Debug, Clone)]
pub struct Tracker<'a> {
    map: &'a GlobalMap,
    cfg: LocConfig,
    state: LocState,
    frame: usize,
}

impl<'a> Tracker<'a> {
    pub fn new(map: &'a GlobalMap, hint: Option<Pose6>, cfg: LocConfig) -> Self {
        let state = initialize(map, hint, &cfg);
        Self {
            map,
            cfg,
            state,
            frame: 0,
        }
    }

    pub fn state(&self) -> &LocState {
        &self.state
    }

    /// Register the current frame's features without an odometry step,
    /// e.g. for the very first frame.
    pub fn correct(&mut self, feats: &PointCloud) -> Result<FrameOutcome, LocError> {
        let mut outcome = FrameOutcome {
            state: self.state,
            measurement: None,
            relocalized: false,
        };
        if self.frame.is_multiple_of(self.cfg.reloc_stride.max(1)) {
            let source = decimate(feats, self.cfg.source_stride);
            let restart = if self.frame.is_multiple_of(self.cfg.restart_stride.max(1)) {
                self.cfg.restart_step
            } else {
                0.0
            };
            if let Some(m) = relocalize(&source, self.map, &self.state.mean, &self.cfg.icp, restart) {
                let r = self.cfg.measurement_noise(&m);
                let (next, passed) = ekf_update(&self.state, &m, &r, self.cfg.gate)?;
                self.state = next;
                outcome.measurement = Some(m);
                outcome.relocalized = passed;
            } else {
                self.state.status = TrackStatus::Coasting;
            }
        }
        self.frame += 1;
        outcome.state = self.state;
        Ok(outcome)
    }

    /// Predict with `delta`, then try to relocalize with `feats`.
    pub fn step(&mut self, delta: &Pose6, feats: &PointCloud) -> Result<FrameOutcome, LocError> {
        self.state = ekf_predict(&self.state, delta, &self.cfg.process_noise())?;
        self.correct(feats)
    }
}

fn decimate(cloud: &PointCloud, stride: usize) -> PointCloud {
    if stride <= 1 {
        return cloud.clone();
    }
    PointCloud::from_points(cloud.points.iter().step_by(stride).copied().collect(), cloud.frame)
}

/// Run a tracker over `(odometry delta, features)` frames. The first frame
/// has no delta and is only corrected.
pub fn track<'a, I>(map: &GlobalMap, hint: Option<Pose6>, cfg: LocConfig, frames: I) -> Result<Vec<FrameOutcome>, LocError>
where
    I: IntoIterator<Item = (Option<Pose6>, &'a PointCloud)>,
{
    let mut tracker = Tracker::new(map, hint, cfg);
    frames
        .into_iter()
        .map(|(delta, feats)| match delta {
            Some(d) => tracker.step(&d, feats),
            None => tracker.correct(feats),
        })
        .collect()
}
