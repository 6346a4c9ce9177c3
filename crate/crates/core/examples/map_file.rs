// Write a map to disk, read it back and compare the file size with the
// size the format predicts.

use nalgebra::{Vector2, Vector3};
use valet_slam::map_store::{self, file_size, size_report};
use valet_slam::mapping::GlobalMap;
use valet_slam::parking::{Occupancy, ParkingSpot};
use valet_slam::{Frame, LabeledPoint, PointCloud, Pose6, SemanticClass};

pub fn run_example() -> Result<u64, Box<dyn std::error::Error>> {
    // the file stores f32 coordinates; round first so the comparison is exact
    let f = |v: f64| f64::from(v as f32);
    // a stall row: one line per spot and a corner at each line foot
    let mut cloud = PointCloud::new(Frame::World);
    let mut spots = Vec::new();
    for s in 0..10u16 {
        let x0 = 2.5 * f64::from(s);
        for j in 0..53 {
            let y = f(0.1 * f64::from(j));
            cloud.push(LabeledPoint::new(Vector3::new(x0, y, 0.0), SemanticClass::ParkingLine));
        }
        cloud.push(LabeledPoint::new(Vector3::new(x0, 0.0, 0.0), SemanticClass::ParkingCorner));
        spots.push(ParkingSpot {
            id: s,
            corners: [
                Vector2::new(x0, 0.0),
                Vector2::new(x0 + 2.5, 0.0),
                Vector2::new(x0 + 2.5, f(5.3)),
                Vector2::new(x0, f(5.3)),
            ],
            occupied: Occupancy::Unknown,
        });
    }
    let map = GlobalMap::new(cloud, spots, Pose6::planar(1.0, -3.0, 0.5));

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("row.avpm");
    let written = map_store::save(&map, &path)?;
    let back = map_store::load(&path)?;
    let n = map.cloud.len() as u64;
    println!(
        "{} points, {} spots -> {written} bytes (expected {})",
        n,
        map.spots.len(),
        file_size(n, map.spots.len() as u64)
    );
    println!("read back identical: {}", back == map);

    for (points, per_point) in [(369_356, 12), (647_656, 52)] {
        let r = size_report(points, per_point);
        println!("{points} points at {per_point} B/point: {}", r.human);
    }
    if back != map {
        return Err("map changed on the round trip".into());
    }
    Ok(written)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
