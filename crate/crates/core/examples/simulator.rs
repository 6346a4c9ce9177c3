// Generate a lot, drive its loop and watch dead reckoning drift away from
// ground truth.

use valet_slam::sim::trajectory::path_length;
use valet_slam::sim::{dead_reckon, generate_trajectory, generate_world, simulate_odometry, OdomNoise, RouteSpec, WorldSpec};

pub fn run_example() -> Result<f64, Box<dyn std::error::Error>> {
    let spec = WorldSpec {
        extent: [60.0, 60.0],
        spots_per_row: 14,
        seed: 3,
        ..WorldSpec::default()
    };
    let world = generate_world(&spec)?;
    println!(
        "{} x {} m lot: {} spots, {} line stripes, {} signs, {} bumps, {} corners",
        world.extent.x,
        world.extent.y,
        world.spots.len(),
        world.parking_lines.len(),
        world.guide_signs.len(),
        world.speed_bumps.len(),
        world.corners.len()
    );

    let route = RouteSpec::from_points(&world.loop_waypoints());
    let truth = generate_trajectory(&route)?;
    println!("loop route: {} frames, {:.1} m", truth.len(), path_length(&truth));

    let increments = simulate_odometry(&truth, &OdomNoise { seed: 7, ..OdomNoise::default() });
    let odo = dead_reckon(&truth[0].pose, &truth, &increments);
    let mut worst = 0.0f64;
    for (k, (a, b)) in odo.iter().zip(&truth).enumerate() {
        let e = (a.pose.t - b.pose.t).xy().norm();
        worst = worst.max(e);
        if k % (truth.len() / 5) == 0 {
            println!("  t = {:6.1} s  drift {:.3} m", b.time, e);
        }
    }
    let end = (odo.last().unwrap().pose.t - truth.last().unwrap().pose.t).xy().norm();
    println!("drift at the end of the loop {end:.3} m, worst {worst:.3} m");
    Ok(end)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
