//! Every example runs to completion.

#[allow(dead_code)]
mod surround_view {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/surround_view.rs"));
}

#[allow(dead_code)]
mod feature_points {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/feature_points.rs"));
}

#[allow(dead_code)]
mod icp_alignment {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/icp_alignment.rs"));
}

#[allow(dead_code)]
mod pose_graph {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/pose_graph.rs"));
}

#[allow(dead_code)]
mod simulator {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/simulator.rs"));
}

#[allow(dead_code)]
mod build_map {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/build_map.rs"));
}

#[allow(dead_code)]
mod loop_closure {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/loop_closure.rs"));
}

#[allow(dead_code)]
mod localize {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/localize.rs"));
}

#[allow(dead_code)]
mod parking_spots {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/parking_spots.rs"));
}

#[allow(dead_code)]
mod map_file {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/map_file.rs"));
}

#[allow(dead_code)]
mod recall_sweep {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/recall_sweep.rs"));
}

#[allow(dead_code)]
mod trajectory_metrics {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/trajectory_metrics.rs"));
}

#[test]
fn surround_view_example_runs() {
    surround_view::run_example().expect("surround_view example");
}

#[test]
fn feature_points_example_runs() {
    feature_points::run_example().expect("feature_points example");
}

#[test]
fn icp_alignment_example_runs() {
    icp_alignment::run_example().expect("icp_alignment example");
}

#[test]
fn pose_graph_example_runs() {
    pose_graph::run_example().expect("pose_graph example");
}

#[test]
fn simulator_example_runs() {
    simulator::run_example().expect("simulator example");
}

#[test]
fn build_map_example_runs() {
    build_map::run_example().expect("build_map example");
}

#[test]
fn loop_closure_example_runs() {
    loop_closure::run_example().expect("loop_closure example");
}

#[test]
fn localize_example_runs() {
    localize::run_example().expect("localize example");
}

#[test]
fn parking_spots_example_runs() {
    parking_spots::run_example().expect("parking_spots example");
}

#[test]
fn map_file_example_runs() {
    map_file::run_example().expect("map_file example");
}

#[test]
fn recall_sweep_example_runs() {
    recall_sweep::run_example().expect("recall_sweep example");
}

#[test]
fn trajectory_metrics_example_runs() {
    trajectory_metrics::run_example().expect("trajectory_metrics example");
}
