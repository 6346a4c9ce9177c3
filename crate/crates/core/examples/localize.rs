// Build a map, then track a second drive against it with the EKF and print
// how the tracker fares frame by frame.

use valet_slam::eval::{run_localization, run_mapping, RunConfig};
use valet_slam::localization::TrackStatus;
use valet_slam::sim::{generate_world, RouteSpec, WorldSpec};

pub fn run_example() -> Result<f64, Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec {
        extent: [60.0, 60.0],
        spots_per_row: 14,
        ..WorldSpec::default()
    })?;
    let route = RouteSpec::from_points(&world.loop_waypoints());
    let cfg = RunConfig::default();
    let map = run_mapping(&world, &route, &cfg)?.output.map;

    let run = run_localization(&map, &world, &route, &cfg)?;
    let stride = run.outcomes.len() / 8;
    for (k, (o, gt)) in run.outcomes.iter().zip(&run.truth).enumerate().step_by(stride.max(1)) {
        let err = (o.state.mean.t - gt.pose.t).xy().norm();
        let sigma = o.state.cov[(3, 3)].max(o.state.cov[(4, 4)]).sqrt();
        println!("frame {k:5}: {:?}, error {:.1} cm, 1-sigma {:.1} cm", o.state.status, 100.0 * err, 100.0 * sigma);
    }
    let tracking = run.outcomes.iter().filter(|o| o.state.status == TrackStatus::Tracking).count();
    let r = &run.report;
    println!(
        "recall {:.1}%, {tracking}/{} frames tracking, error mean {:.2} cm max {:.2} cm",
        r.recall.unwrap_or(0.0),
        run.outcomes.len(),
        r.loc_err_mean.unwrap_or(f64::NAN),
        r.loc_err_max.unwrap_or(f64::NAN)
    );
    Ok(r.loc_err_mean.unwrap_or(f64::INFINITY))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
