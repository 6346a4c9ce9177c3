use super::{PointCloud, SpatialIndex};
use crate::geometry::{matrix_to_rotvec, Pose6};
use crate::semantics::LabeledPoint;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("source has {found} localization points, need at least {required}")]
    TooFewPoints { found: usize, required: usize },
    #[error("no correspondences within {0} m at the initial guess")]
    NoCorrespondences(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iter: usize,
    /// Stop once the pose update (rotvec and translation, combined norm)
    /// falls below this.
    pub tol: f64,
    /// Correspondences farther apart than this are rejected, meters.
    pub max_corr: f64,
    /// Acceptance gates on the final alignment.
    pub min_inlier: f64,
    pub max_resid: f64,
    pub min_points: usize,
    /// Per-iteration rejection of pairs beyond `trim_factor` times the median
    /// pair distance (never tighter than `trim_floor`). Zero disables it.
    pub trim_factor: f64,
    pub trim_floor: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iter: 30,
            tol: 1e-4,
            max_corr: 1.0,
            min_inlier: 0.6,
            max_resid: 0.10,
            min_points: 50,
            trim_factor: 3.0,
            trim_floor: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    /// Maps source points into the target frame.
    pub pose: Pose6,
    /// Mean pair distance over the pairs that pass the trim gate.
    pub mean_residual: f64,
    /// Share of feature points in such a pair.
    pub inlier_ratio: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Class-constrained point-to-point ICP.
///
/// Minimizes `sum |R p + t - q|^2` over source points `p` paired with the
/// nearest target point `q` of the same class. Only feature classes take
/// part; the semantic class acts as the descriptor.
pub fn icp(
    source: &PointCloud,
    target: &SpatialIndex,
    guess: &Pose6,
    cfg: &IcpConfig,
) -> Result<IcpResult, RegistrationError> {
    let src: Vec<&LabeledPoint> = source.points.iter().filter(|p| p.class.is_feature()).collect();
    let n_loc = src.iter().filter(|p| p.class.is_localization()).count();
    if n_loc < cfg.min_points.max(3) {
        return Err(RegistrationError::TooFewPoints {
            found: n_loc,
            required: cfg.min_points.max(3),
        });
    }

    let mut pose = *guess;
    let mut iterations = 0;
    let mut pairs: Vec<(Vector3<f64>, Vector3<f64>, f64)> = Vec::with_capacity(src.len());
    for iter in 0..cfg.max_iter {
        correspond(&src, target, &pose, cfg.max_corr, &mut pairs);
        if pairs.len() < 3 {
            if iter == 0 {
                return Err(RegistrationError::NoCorrespondences(cfg.max_corr));
            }
            break;
        }
        trim(&mut pairs, cfg);
        iterations = iter + 1;
        let Some(next) = kabsch(pairs.iter().map(|(p, q, _)| (p, q))) else {
            break;
        };
        let step = pose.ominus(&next).norm();
        pose = next;
        if step < cfg.tol {
            break;
        }
    }

    // pairs the trim gate rejects count as outliers, not as residual
    correspond(&src, target, &pose, cfg.max_corr, &mut pairs);
    trim(&mut pairs, cfg);
    let inliers = pairs.len();
    let mean_residual = if inliers == 0 {
        f64::INFINITY
    } else {
        pairs.iter().map(|(_, _, d)| d).sum::<f64>() / inliers as f64
    };
    let inlier_ratio = inliers as f64 / src.len() as f64;
    Ok(IcpResult {
        pose,
        mean_residual,
        inlier_ratio,
        iterations,
        converged: inlier_ratio >= cfg.min_inlier && mean_residual <= cfg.max_resid,
    })
}

/// Run [`icp`] from `guess` and from the eight planar offsets of `step`
/// around its result, keeping the lowest mean residual among results that
/// match nearly as many points as the best one. Point-to-point matching on
/// points sampled at a fixed spacing has local minima one spacing apart.
pub fn icp_with_restarts(
    source: &PointCloud,
    target: &SpatialIndex,
    guess: &Pose6,
    cfg: &IcpConfig,
    step: f64,
) -> Result<IcpResult, RegistrationError> {
    let first = icp(source, target, guess, cfg)?;
    let mut runs = vec![first];
    for (a, b) in [(-1.0, -1.0), (-1.0, 0.0), (-1.0, 1.0), (0.0, -1.0), (0.0, 1.0), (1.0, -1.0), (1.0, 0.0), (1.0, 1.0)] {
        let start = Pose6::new(first.pose.r, first.pose.t + Vector3::new(a * step, b * step, 0.0));
        if let Ok(r) = icp(source, target, &start, cfg) {
            runs.push(r);
        }
    }
    let most = runs.iter().map(|r| r.inlier_ratio).fold(0.0, f64::max);
    Ok(runs
        .into_iter()
        .filter(|r| r.inlier_ratio >= most - 0.02)
        .min_by(|x, y| x.mean_residual.total_cmp(&y.mean_residual))
        .expect("the best run passes its own filter"))
}

fn correspond(
    src: &[&LabeledPoint],
    target: &SpatialIndex,
    pose: &Pose6,
    max_corr: f64,
    pairs: &mut Vec<(Vector3<f64>, Vector3<f64>, f64)>,
) {
    pairs.clear();
    let rot = pose.rotation();
    for p in src {
        let moved = rot * p.position + pose.t;
        if let Some((i, d)) = target.nearest(p.class, &moved, max_corr) {
            pairs.push((p.position, target.point(i).position, d));
        }
    }
}

fn trim(pairs: &mut Vec<(Vector3<f64>, Vector3<f64>, f64)>, cfg: &IcpConfig) {
    if cfg.trim_factor <= 0.0 || pairs.len() < 6 {
        return;
    }
    let mut d: Vec<f64> = pairs.iter().map(|x| x.2).collect();
    let mid = d.len() / 2;
    let (_, median, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let gate = (cfg.trim_factor * *median).max(cfg.trim_floor);
    pairs.retain(|x| x.2 <= gate);
}

/// Closed-form rigid alignment of paired points (SVD of the
/// cross-covariance). Returns the pose mapping each `p` onto its `q`.
pub(crate) fn kabsch<'a>(pairs: impl Iterator<Item = (&'a Vector3<f64>, &'a Vector3<f64>)> + Clone) -> Option<Pose6> {
    let mut n = 0.0;
    let mut cp = Vector3::zeros();
    let mut cq = Vector3::zeros();
    for (p, q) in pairs.clone() {
        cp += p;
        cq += q;
        n += 1.0;
    }
    if n < 1.0 {
        return None;
    }
    cp /= n;
    cq /= n;
    let mut h = Matrix3::zeros();
    for (p, q) in pairs {
        h += (p - cp) * (q - cq).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rot = v * fix * u.transpose();
    let r = matrix_to_rotvec(&rot).ok()?;
    Some(Pose6::new(r, cq - rot * cp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RotVec;
    use crate::registration::Frame;
    use crate::semantics::SemanticClass;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Lines in several directions plus sign blobs, so every degree of
    /// freedom in the plane is constrained.
    fn scene(rng: &mut impl Rng) -> PointCloud {
        let mut cloud = PointCloud::new(Frame::World);
        for k in 0..6 {
            let x = -6.0 + 2.5 * f64::from(k);
            for j in 0..50 {
                cloud.push(LabeledPoint::new(
                    Vector3::new(x, -2.5 + 0.1 * f64::from(j), 0.0),
                    SemanticClass::ParkingLine,
                ));
            }
        }
        for j in 0..140 {
            cloud.push(LabeledPoint::new(
                Vector3::new(-6.0 + 0.1 * f64::from(j), -2.5, 0.0),
                SemanticClass::ParkingLine,
            ));
        }
        for _ in 0..120 {
            cloud.push(LabeledPoint::new(
                Vector3::new(rng.gen_range(1.0..2.5), rng.gen_range(3.0..4.0), 0.0),
                SemanticClass::GuideSign,
            ));
        }
        for j in 0..40 {
            cloud.push(LabeledPoint::new(
                Vector3::new(-4.0 + 0.05 * f64::from(j), 4.0 + 0.05 * f64::from(j), 0.0),
                SemanticClass::SpeedBump,
            ));
        }
        cloud
    }

    fn pose_err(a: &Pose6, b: &Pose6) -> (f64, f64) {
        let d = crate::geometry::relative(a, b);
        (d.t.norm(), d.r.angle())
    }

    #[test]
    fn identical_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = scene(&mut rng);
        let idx = SpatialIndex::build(&cloud, 0.5);
        let res = icp(&cloud, &idx, &Pose6::identity(), &IcpConfig::default()).unwrap();
        assert!(pose_err(&res.pose, &Pose6::identity()).0 < 1e-12);
        assert!(res.mean_residual < 1e-12);
        assert_eq!(res.inlier_ratio, 1.0);
        assert!(res.converged);
    }

    #[test]
    fn recovers_constructed_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let source = scene(&mut rng);
        let truth = Pose6::new(RotVec::new(0.0, 0.0, 0.05), Vector3::new(0.3, 0.1, 0.0));
        let target = source.transformed(&truth, Frame::World);
        let idx = SpatialIndex::build(&target, 0.5);
        let cfg = IcpConfig {
            max_iter: 100,
            tol: 1e-10,
            ..IcpConfig::default()
        };
        let res = icp(&source, &idx, &Pose6::identity(), &cfg).unwrap();
        let (dt, dr) = pose_err(&res.pose, &truth);
        assert!(dt < 1e-6 && dr < 1e-6, "error {dt:e} m, {dr:e} rad");
        assert!(res.converged);
    }

    #[test]
    fn single_iteration_from_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let source = scene(&mut rng);
        let truth = Pose6::new(RotVec::new(0.0, 0.0, -0.3), Vector3::new(4.0, -1.0, 0.0));
        let idx = SpatialIndex::build(&source.transformed(&truth, Frame::World), 0.5);
        let res = icp(&source, &idx, &truth, &IcpConfig::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(pose_err(&res.pose, &truth).0 < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let mut cloud = PointCloud::new(Frame::Vehicle);
        for i in 0..10 {
            cloud.push(LabeledPoint::new(Vector3::new(f64::from(i), 0.0, 0.0), SemanticClass::ParkingLine));
        }
        let idx = SpatialIndex::build(&cloud, 0.5);
        assert_eq!(
            icp(&cloud, &idx, &Pose6::identity(), &IcpConfig::default()),
            Err(RegistrationError::TooFewPoints { found: 10, required: 50 })
        );
    }

    #[test]
    fn no_correspondences() {
        let mut src = PointCloud::new(Frame::Vehicle);
        let mut far = PointCloud::new(Frame::World);
        for i in 0..10 {
            src.push(LabeledPoint::new(Vector3::new(f64::from(i) * 0.1, 0.0, 0.0), SemanticClass::ParkingLine));
            far.push(LabeledPoint::new(Vector3::new(100.0 + f64::from(i), 50.0, 0.0), SemanticClass::ParkingLine));
        }
        let idx = SpatialIndex::build(&far, 0.5);
        let cfg = IcpConfig {
            min_points: 5,
            ..IcpConfig::default()
        };
        assert_eq!(
            icp(&src, &idx, &Pose6::identity(), &cfg),
            Err(RegistrationError::NoCorrespondences(1.0))
        );
    }

    #[test]
    fn classes_never_cross_match() {
        let mut src = PointCloud::new(Frame::Vehicle);
        let mut tgt = PointCloud::new(Frame::World);
        for i in 0..60 {
            let p = Vector3::new(f64::from(i) * 0.1, f64::from(i % 7) * 0.1, 0.0);
            src.push(LabeledPoint::new(p, SemanticClass::ParkingLine));
            tgt.push(LabeledPoint::new(p, SemanticClass::GuideSign));
        }
        let idx = SpatialIndex::build(&tgt, 0.5);
        assert!(matches!(
            icp(&src, &idx, &Pose6::identity(), &IcpConfig::default()),
            Err(RegistrationError::NoCorrespondences(_))
        ));
    }

    #[test]
    fn alignment_never_increases_residual_on_fixed_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let pairs: Vec<(Vector3<f64>, Vector3<f64>)> = (0..40)
                .map(|_| {
                    let p = Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 0.0);
                    let q = p + Vector3::new(
                        rng.gen_range(-0.5..0.5) + 0.3,
                        rng.gen_range(-0.5..0.5),
                        0.0,
                    );
                    (p, q)
                })
                .collect();
            let sse = |pose: &Pose6| {
                pairs
                    .iter()
                    .map(|(p, q)| (pose.transform_point(p) - q).norm_squared())
                    .sum::<f64>()
            };
            let start = Pose6::planar(rng.gen_range(-0.2..0.2), 0.0, rng.gen_range(-0.1..0.1));
            let best = kabsch(pairs.iter().map(|(p, q)| (p, q))).unwrap();
            assert!(sse(&best) <= sse(&start) + 1e-12);
            assert!(sse(&best) <= sse(&Pose6::identity()) + 1e-12);
        }
    }

    #[test]
    fn equivariant_under_target_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let source = scene(&mut rng);
        let truth = Pose6::new(RotVec::new(0.0, 0.0, 0.04), Vector3::new(-0.2, 0.25, 0.0));
        let target = source.transformed(&truth, Frame::World);
        let g = Pose6::new(RotVec::new(0.0, 0.0, 1.1), Vector3::new(30.0, -12.0, 0.0));
        let cfg = IcpConfig {
            max_iter: 100,
            tol: 1e-10,
            ..IcpConfig::default()
        };
        let guess = Pose6::identity();
        let a = icp(&source, &SpatialIndex::build(&target, 0.5), &guess, &cfg).unwrap();
        let moved = target.transformed(&g, Frame::World);
        let b = icp(&source, &SpatialIndex::build(&moved, 0.5), &g.compose(&guess), &cfg).unwrap();
        let (dt, dr) = pose_err(&b.pose, &g.compose(&a.pose));
        assert!(dt < 1e-6 && dr < 1e-6, "{dt:e} {dr:e}");
    }
}
