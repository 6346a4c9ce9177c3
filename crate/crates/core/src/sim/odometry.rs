//! Wheel/IMU odometry with multiplicative distance error, yaw random walk and
//! a constant gyro bias.
//!
//! Both random terms scale with the square root of distance, so the error
//! accumulated over a meter is independent of the frame rate.

use super::trajectory::TimedPose;
use crate::geometry::{relative, Pose6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdomNoise {
    /// Distance error std-dev accumulated per meter traveled, as a fraction.
    pub sigma_v: f64,
    /// Yaw error std-dev accumulated per meter traveled, rad.
    pub sigma_yaw: f64,
    /// Constant yaw-rate bias, rad/s.
    pub bias_yaw: f64,
    pub seed: u64,
}

impl Default for OdomNoise {
    fn default() -> Self {
        Self {
            // wheel encoders and a consumer MEMS gyro (about 20 deg/h bias)
            sigma_v: 0.005,
            sigma_yaw: 0.0003,
            bias_yaw: 0.0001,
            seed: 0,
        }
    }
}

impl OdomNoise {
    pub fn zero() -> Self {
        Self {
            sigma_v: 0.0,
            sigma_yaw: 0.0,
            bias_yaw: 0.0,
            seed: 0,
        }
    }
}

/// Noisy frame-to-frame increments, one per consecutive pair of `truth`.
pub fn simulate_odometry(truth: &[TimedPose], noise: &OdomNoise) -> Vec<Pose6> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    truth
        .windows(2)
        .map(|w| {
            let d = relative(&w[0].pose, &w[1].pose);
            let dt = w[1].time - w[0].time;
            let ds = d.t.xy().norm();
            let scale = if ds > 0.0 { 1.0 + noise.sigma_v * normal() / ds.sqrt() } else { 1.0 };
            let dyaw = d.yaw() + noise.sigma_yaw * ds.sqrt() * normal() + noise.bias_yaw * dt;
            Pose6::planar(d.t.x * scale, d.t.y * scale, dyaw)
        })
        .collect()
}

/// Integrate increments from `start`, reusing the truth timestamps.
pub fn dead_reckon(start: &Pose6, truth: &[TimedPose], increments: &[Pose6]) -> Vec<TimedPose> {
    let mut out = Vec::with_capacity(truth.len());
    let mut pose = *start;
    if let Some(first) = truth.first() {
        out.push(TimedPose { time: first.time, pose });
    }
    for (tp, inc) in truth.iter().skip(1).zip(increments) {
        pose = pose.compose(inc);
        out.push(TimedPose { time: tp.time, pose });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trajectory::{generate_trajectory, RouteSpec};

    fn route() -> Vec<TimedPose> {
        generate_trajectory(&RouteSpec::closed_loop(vec![[0.0, 0.0], [30.0, 0.0], [30.0, 20.0]])).unwrap()
    }

    #[test]
    fn zero_noise_reproduces_truth() {
        let truth = route();
        let inc = simulate_odometry(&truth, &OdomNoise::zero());
        let est = dead_reckon(&truth[0].pose, &truth, &inc);
        assert_eq!(est.len(), truth.len());
        for (a, b) in est.iter().zip(&truth) {
            assert!((a.pose.t - b.pose.t).norm() < 1e-9);
            assert!((a.pose.yaw() - b.pose.yaw()).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let truth = route();
        let n = OdomNoise { seed: 3, ..OdomNoise::default() };
        assert_eq!(simulate_odometry(&truth, &n), simulate_odometry(&truth, &n));
        let m = OdomNoise { seed: 4, ..n };
        assert_ne!(simulate_odometry(&truth, &n), simulate_odometry(&truth, &m));
    }

    #[test]
    fn bias_only_gives_expected_heading_drift() {
        let truth = route();
        let n = OdomNoise { bias_yaw: 0.01, ..OdomNoise::zero() };
        let est = dead_reckon(&truth[0].pose, &truth, &simulate_odometry(&truth, &n));
        let elapsed = truth.last().unwrap().time - truth[0].time;
        let drift = crate::geometry::wrap_angle(est.last().unwrap().pose.yaw() - truth.last().unwrap().pose.yaw());
        assert!((drift - 0.01 * elapsed).abs() < 1e-9, "drift {drift}");
    }

    #[test]
    fn bias_drift_grows_superlinearly() {
        let truth = generate_trajectory(&RouteSpec::closed_loop(vec![[0.0, 0.0], [100.0, 0.0]])).unwrap();
        let n = OdomNoise { bias_yaw: 0.002, ..OdomNoise::zero() };
        let est = dead_reckon(&truth[0].pose, &truth, &simulate_odometry(&truth, &n));
        let err = |i: usize| (est[i].pose.t - truth[i].pose.t).norm();
        let half = truth.len() / 2;
        let full = truth.len() - 1;
        // heading error b*t bends the straight line into an arc
        let (b, v, t) = (0.002, 2.0, truth[full].time);
        let closed_form = v * (((b * t).sin() / b - t).powi(2) + ((1.0 - (b * t).cos()) / b).powi(2)).sqrt();
        assert!(err(full) > 3.5 * err(half));
        assert!((err(full) - closed_form).abs() / closed_form < 0.02, "{} vs {closed_form}", err(full));
    }
}
