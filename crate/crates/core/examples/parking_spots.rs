// Parking spots recovered from the map, checked against the lot layout.

use valet_slam::eval::{run_mapping, RunConfig};
use valet_slam::sim::{generate_world, RouteSpec, WorldSpec};

pub fn run_example() -> Result<usize, Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec {
        extent: [60.0, 60.0],
        spots_per_row: 14,
        ..WorldSpec::default()
    })?;
    let route = RouteSpec::from_points(&world.loop_waypoints());
    let map = run_mapping(&world, &route, &RunConfig::default())?.output.map;

    let mut matched = 0;
    let mut worst = 0.0f64;
    for spot in &map.spots {
        let c = spot.center();
        let nearest = world.spots.iter().map(|t| (t.center() - c).norm()).fold(f64::INFINITY, f64::min);
        if nearest < 0.5 {
            matched += 1;
            worst = worst.max(nearest);
        }
    }
    println!(
        "{} spots detected, {} in the lot; {matched} match a real spot (worst center error {:.1} cm)",
        map.spots.len(),
        world.spots.len(),
        100.0 * worst
    );
    if let Some(s) = map.spots.first() {
        let width = (s.corners[1] - s.corners[0]).norm();
        let depth = (s.corners[3] - s.corners[0]).norm();
        println!("spot {}: {:.2} x {:.2} m, convex {}, {:?}", s.id, width, depth, s.is_convex(), s.occupied);
    }
    if matched == 0 {
        return Err("no detected spot lines up with the lot".into());
    }
    Ok(matched)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
