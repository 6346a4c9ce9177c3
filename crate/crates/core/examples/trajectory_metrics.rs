// Score an estimated trajectory against ground truth from CSV files.

use valet_slam::eval::{ate, nees, read_trajectory, write_trajectory};
use valet_slam::sim::trajectory::path_length;
use valet_slam::sim::{generate_trajectory, RouteSpec, TimedPose};
use valet_slam::Pose6;

pub fn run_example() -> Result<f64, Box<dyn std::error::Error>> {
    let route = RouteSpec::closed_loop(vec![[5.0, 5.0], [45.0, 5.0], [45.0, 25.0], [5.0, 25.0]]);
    let truth = generate_trajectory(&route)?;
    // estimate: a slow sideways wobble of up to 5 cm
    let est: Vec<TimedPose> = truth
        .iter()
        .map(|tp| TimedPose {
            time: tp.time,
            pose: tp.pose.compose(&Pose6::planar(0.0, 0.05 * (0.5 * tp.time).sin(), 0.0)),
        })
        .collect();

    let dir = tempfile::tempdir()?;
    let (gt_path, est_path) = (dir.path().join("gt.csv"), dir.path().join("est.csv"));
    write_trajectory(&gt_path, &truth)?;
    write_trajectory(&est_path, &est)?;
    println!("{}", std::fs::read_to_string(&est_path)?.lines().take(3).collect::<Vec<_>>().join("\n"));

    let (gt, est) = (read_trajectory(&gt_path)?, read_trajectory(&est_path)?);
    let (rmse, max_err) = ate(&est, &gt)?;
    let length = path_length(&gt);
    println!("{} poses over {length:.1} m: ATE {:.2} cm, max {:.2} cm, {:.4}% of distance", gt.len(), 100.0 * rmse, 100.0 * max_err, nees(rmse, length)?);
    Ok(rmse)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
