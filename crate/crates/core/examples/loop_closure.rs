// Feed frames to the mapper by hand and look at the loop constraints it
// finds when the drive comes back to the start.

use valet_slam::camera_ipm::IpmIntrinsics;
use valet_slam::mapping::{Mapper, MappingConfig};
use valet_slam::semantics::NoiseSpec;
use valet_slam::sim::{dead_reckon, generate_trajectory, generate_world, observe, simulate_odometry, OdomNoise, RouteSpec, Tier, WorldSpec};

pub fn run_example() -> Result<usize, Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec {
        extent: [60.0, 60.0],
        spots_per_row: 14,
        ..WorldSpec::default()
    })?;
    let truth = generate_trajectory(&RouteSpec::from_points(&world.loop_waypoints()))?;
    let odo = dead_reckon(&truth[0].pose, &truth, &simulate_odometry(&truth, &OdomNoise::default()));
    let k = IpmIntrinsics::default();

    let mut mapper = Mapper::new(MappingConfig::default());
    for (tp, od) in truth.iter().zip(&odo) {
        let feats = observe(&world, &tp.pose, tp.time, &k, &NoiseSpec::default(), Tier::Point).cloud;
        mapper.push(tp.time, &od.pose, &feats)?;
    }
    let out = mapper.finish()?;

    println!("{} local maps, {} loop constraints", out.local_maps.len(), out.loops.len());
    for e in &out.loops {
        println!(
            "  map {} -> map {}: offset ({:.2}, {:.2}) m, yaw {:.2} deg, overlap {:.2}, residual {:.3} m, inliers {:.0}%",
            e.i,
            e.j,
            e.z.t.x,
            e.z.t.y,
            e.z.yaw().to_degrees(),
            e.overlap,
            e.result.mean_residual,
            100.0 * e.result.inlier_ratio
        );
    }
    let end = truth.last().unwrap().pose.t;
    let gap = |traj: &[valet_slam::sim::TimedPose]| (traj.last().unwrap().pose.t - end).xy().norm();
    println!(
        "position error at the end of the loop: odometry {:.1} cm, optimized {:.1} cm",
        100.0 * gap(&out.odometry),
        100.0 * gap(&out.trajectory)
    );
    if out.loops.is_empty() {
        return Err("the loop was not closed".into());
    }
    Ok(out.loops.len())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
