// Align one frame of semantic points to a small map built from its
// neighbors, starting from a guess that is half a meter and 3 degrees off.

use valet_slam::camera_ipm::IpmIntrinsics;
use valet_slam::registration::{icp, icp_with_restarts, IcpConfig, SpatialIndex};
use valet_slam::semantics::NoiseSpec;
use valet_slam::sim::{generate_world, observe, Tier, WorldSpec};
use valet_slam::{Frame, PointCloud, Pose6};

pub fn run_example() -> Result<f64, Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec {
        extent: [60.0, 60.0],
        spots_per_row: 14,
        ..WorldSpec::default()
    })?;
    let k = IpmIntrinsics::default();
    let y = world.corridor_y[0];

    // map: three frames along the corridor, in world coordinates
    let mut map = PointCloud::new(Frame::World);
    for x in [16.0, 20.0, 24.0] {
        let pose = Pose6::planar(x, y, 0.0);
        let obs = observe(&world, &pose, 0.0, &k, &NoiseSpec::zero(), Tier::Point);
        map.points.extend(obs.cloud.transformed(&pose, Frame::World).points);
    }
    let index = SpatialIndex::build(&map.voxel_downsample(0.1), 0.5);

    let truth = Pose6::planar(21.3, y + 0.4, 0.05);
    let frame = observe(&world, &truth, 0.0, &k, &NoiseSpec::default(), Tier::Point).cloud;
    let guess = Pose6::planar(21.7, y + 0.1, 0.0);
    let cfg = IcpConfig::default();

    let once = icp(&frame, &index, &guess, &cfg)?;
    let best = icp_with_restarts(&frame, &index, &guess, &cfg, 0.1)?;
    for (name, r) in [("single start", &once), ("with restarts", &best)] {
        println!(
            "{name:>14}: error {:.1} cm, {:.2} deg, residual {:.3} m, inliers {:.0}%, {} iterations",
            100.0 * (r.pose.t - truth.t).xy().norm(),
            (r.pose.yaw() - truth.yaw()).to_degrees().abs(),
            r.mean_residual,
            100.0 * r.inlier_ratio,
            r.iterations
        );
    }
    let err = (best.pose.t - truth.t).xy().norm();
    if !best.converged || err > 0.05 {
        return Err(format!("alignment missed by {err:.3} m").into());
    }
    Ok(err)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
