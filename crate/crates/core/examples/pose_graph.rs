// A square drive with drifting odometry, closed by one loop constraint and
// straightened by Gauss-Newton.

use nalgebra::Vector3;
use valet_slam::geometry::relative;
use valet_slam::mapping::graph::graph_cost;
use valet_slam::mapping::{optimize_pose_graph, GnConfig, PoseGraph};
use valet_slam::{Pose6, RotVec};

pub fn run_example() -> Result<(f64, f64), Box<dyn std::error::Error>> {
    // 16 nodes, 10 m apart, around a 40 m square
    let truth: Vec<Pose6> = (0..16)
        .map(|k| {
            let side = k / 4;
            let s = 10.0 * f64::from(k % 4);
            let yaw = f64::from(side) * std::f64::consts::FRAC_PI_2;
            let (x, y) = match side {
                0 => (s, 0.0),
                1 => (40.0, s),
                2 => (40.0 - s, 40.0),
                _ => (0.0, 40.0 - s),
            };
            Pose6::new(RotVec::new(0.0, 0.0, yaw), Vector3::new(x, y, 0.0))
        })
        .collect();

    // each odometry step turns 1 degree too far
    let bias = Pose6::planar(0.0, 0.0, 1f64.to_radians());
    let mut g = PoseGraph::new(truth[0]);
    let mut drifted = vec![truth[0]];
    for k in 1..truth.len() {
        let z = relative(&truth[k - 1], &truth[k]).compose(&bias);
        drifted.push(drifted[k - 1].compose(&z));
        g.push_odometry(z);
    }
    // last node sees the first one again
    g.add_loop(0, 15, relative(&truth[0], &truth[15]));
    g.validate()?;

    let cfg = GnConfig::default();
    let report = optimize_pose_graph(&g, &cfg)?;
    let err = |poses: &[Pose6]| poses.iter().zip(&truth).map(|(a, b)| (a.t - b.t).norm()).fold(0.0, f64::max);
    println!("cost {:.3e} -> {:.3e} in {} iterations", report.initial_cost(), report.final_cost(), report.iterations);
    println!("accepted step costs: {:?}", report.costs.iter().map(|c| format!("{c:.2e}")).collect::<Vec<_>>());
    println!("worst position error: odometry {:.2} m, optimized {:.2} m", err(&drifted), err(&report.poses));
    debug_assert!((graph_cost(&g, &report.poses, &cfg) - report.final_cost()).abs() < 1e-9);
    if err(&report.poses) >= err(&drifted) {
        return Err("optimization did not reduce the drift".into());
    }
    Ok((err(&drifted), err(&report.poses)))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
