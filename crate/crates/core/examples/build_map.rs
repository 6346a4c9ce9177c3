// Drive a small lot once and build its semantic map.

use valet_slam::eval::{run_mapping, RunConfig};
use valet_slam::sim::{generate_world, RouteSpec, WorldSpec};
use valet_slam::SemanticClass;

pub fn run_example() -> Result<f64, Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec {
        extent: [60.0, 60.0],
        spots_per_row: 14,
        ..WorldSpec::default()
    })?;
    let route = RouteSpec::from_points(&world.loop_waypoints());
    let run = run_mapping(&world, &route, &RunConfig::default())?;
    let r = &run.report;

    println!("{} frames over {:.0} m in {} local maps", r.frames.unwrap_or(0), r.path_length.unwrap_or(0.0), run.output.local_maps.len());
    println!(
        "trajectory RMSE: odometry {:.3} m, optimized {:.3} m ({} loop closures)",
        r.odometry_rmse.unwrap_or(f64::NAN),
        r.rmse.unwrap_or(f64::NAN),
        r.loops.unwrap_or(0)
    );
    let map = &run.output.map;
    for class in SemanticClass::ALL.into_iter().filter(|c| c.is_feature()) {
        println!("  {class:?}: {} points", map.cloud.of_class(class).count());
    }
    println!("{} spots, map file {}", map.spots.len(), r.map_size.as_deref().unwrap_or("?"));
    Ok(r.rmse.unwrap_or(f64::INFINITY))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
