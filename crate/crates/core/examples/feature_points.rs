// Turn a bird's-eye label image into semantic points, at pixel resolution
// and on the coarser point lattice the pipeline uses.

use valet_slam::camera_ipm::IpmIntrinsics;
use valet_slam::semantics::{detect_corners, extract_features, oracle_segment, NoiseSpec};
use valet_slam::sim::{generate_world, observe, Tier, WorldSpec};
use valet_slam::{Pose6, SemanticClass};

pub fn run_example() -> Result<(usize, usize), Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec {
        extent: [60.0, 60.0],
        spots_per_row: 14,
        ..WorldSpec::default()
    })?;
    let k = IpmIntrinsics::default();
    let pose = Pose6::planar(20.0, world.corridor_y[0], 0.0);
    let noise = NoiseSpec::default();

    let img = oracle_segment(&world, &pose, &k, &noise);
    let pixel = extract_features(&img, &k, 5);
    let lattice = observe(&world, &pose, 0.0, &k, &noise, Tier::Point).cloud;

    println!("{:<14}{:>10}{:>10}", "class", "pixel/5", "lattice");
    for class in SemanticClass::ALL.into_iter().filter(|c| c.is_feature()) {
        println!(
            "{:<14}{:>10}{:>10}",
            format!("{class:?}"),
            pixel.of_class(class).count(),
            lattice.of_class(class).count()
        );
    }
    let corners = detect_corners(&img, &k);
    println!("{} corner blobs in view, first at {:?}", corners.len(), corners.first().map(|c| (c.x, c.y)));
    if lattice.count_localization() < 100 {
        return Err("too few localization points in view".into());
    }
    Ok((pixel.len(), lattice.len()))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
