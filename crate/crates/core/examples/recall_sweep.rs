// How often the tracker still matches the map when painted features go
// missing between the mapping and the localization drive.

use valet_slam::eval::{recall_study, run_mapping, RunConfig};
use valet_slam::sim::{generate_world, RouteSpec, WorldSpec};

pub fn run_example() -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec {
        extent: [60.0, 60.0],
        spots_per_row: 14,
        ..WorldSpec::default()
    })?;
    let route = RouteSpec::from_points(&world.loop_waypoints());
    let cfg = RunConfig::default();
    let map = run_mapping(&world, &route, &cfg)?.output.map;

    let report = recall_study(&map, &world, &route, &cfg, &[0.0, 0.3, 0.6])?;
    let sweep = report.sweep.unwrap_or_default();
    println!("{:>8}{:>10}{:>12}", "p_drop", "recall", "mean err");
    for p in &sweep {
        let mean = p.loc_err_mean.map_or("-".into(), |m| format!("{m:.2} cm"));
        println!("{:>8.1}{:>9.1}%{:>12}", p.p_drop, p.recall, mean);
    }
    Ok(sweep.iter().map(|p| p.recall).collect())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
