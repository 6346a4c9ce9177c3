// Render the four fisheye label images a car would see at one pose, fuse
// them into a bird's-eye label image and compare with the ground truth.

use valet_slam::camera_ipm::{fisheye_project, synthesize_ipm, Calibration};
use valet_slam::semantics::{oracle_segment, NoiseSpec};
use valet_slam::sim::render::render_cameras;
use valet_slam::sim::{generate_world, WorldSpec};
use valet_slam::{Pose6, SemanticClass};

pub fn run_example() -> Result<f64, Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec {
        extent: [60.0, 60.0],
        spots_per_row: 14,
        ..WorldSpec::default()
    })?;
    let calib = Calibration::surround_default();
    calib.validate()?;

    // a point 3 m ahead on the ground, seen by the front camera
    let front = &calib.cameras[0];
    let ground = front.extrinsic.inverse().transform_point(&nalgebra::Vector3::new(3.0, 0.0, 0.0));
    let px = fisheye_project(front, &ground)?;
    println!("ground point (3, 0) lands on front pixel ({:.1}, {:.1})", px.x, px.y);

    // 10 px/m keeps the fusion quick; the default image is 50 px/m
    let density = 10.0;
    let k = calib.ipm.resampled(density);
    let pose = Pose6::planar(world.aisle_x[0], world.corridor_y[0], 0.3);
    let images = render_cameras(&world, &pose, &calib, density);
    let fused = synthesize_ipm(&calib.cameras, &images, &k);
    let truth = oracle_segment(&world, &pose, &k, &NoiseSpec::zero());

    let (mut seen, mut agree) = (0usize, 0usize);
    for (a, b) in fused.labels.iter().zip(&truth.labels) {
        if *a != SemanticClass::Unknown {
            seen += 1;
            agree += usize::from(a == b);
        }
    }
    let share = agree as f64 / seen.max(1) as f64;
    println!("{}x{} bird's-eye image, {seen} pixels covered by a camera", k.size.0, k.size.1);
    for class in SemanticClass::ALL.into_iter().filter(|c| c.is_feature()) {
        println!("  {class:?}: fused {} truth {}", fused.count(class), truth.count(class));
    }
    println!("labels agreeing with ground truth: {:.1}%", 100.0 * share);
    if share < 0.9 {
        return Err(format!("fused image agrees on only {:.1}% of pixels", 100.0 * share).into());
    }
    Ok(share)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
