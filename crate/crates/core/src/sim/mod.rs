//! Synthetic test bed: parking-lot worlds, ground-truth routes, drifting
//! odometry and per-frame semantic observations.

pub mod observe;
pub mod odometry;
pub mod render;
pub mod trajectory;
pub mod world;

pub use observe::{observe, Observation, Tier};
pub use odometry::{dead_reckon, simulate_odometry, OdomNoise};
pub use trajectory::{generate_trajectory, RouteSpec, TimedPose};
pub use world::{generate_world, WorldModel, WorldSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("malformed spec: {0}")]
    MalformedSpec(String),
    #[error("turn radius {radius} m does not fit at waypoint {index}")]
    InfeasibleTurn { index: usize, radius: f64 },
    #[error("route: {0}")]
    InvalidRoute(String),
}

/// splitmix64 finalizer over a combined key.
pub(crate) fn mix_seed(seed: u64, key: u64) -> u64 {
    let mut z = seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in `[0, 1)` from a hash.
pub(crate) fn unit_from_hash(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Reference scenario: a square loop of 324 m through a matching lot.
pub mod presets {
    use super::trajectory::RouteSpec;
    use super::world::WorldSpec;

    pub const SQUARE_LOOP_LENGTH: f64 = 324.0;
    pub const TURN_RADIUS: f64 = 4.0;

    /// Side of the square whose filleted loop is exactly 324 m long.
    pub fn square_side() -> f64 {
        // each rounded corner shortens the loop by r * (2 - pi/2)
        SQUARE_LOOP_LENGTH / 4.0 + TURN_RADIUS * (2.0 - std::f64::consts::FRAC_PI_2)
    }

    pub fn square_world(seed: u64) -> WorldSpec {
        WorldSpec::square(square_side(), seed)
    }

    /// Loop route for [`square_world`], starting mid-way along the bottom side.
    pub fn square_route() -> RouteSpec {
        let spec = square_world(0);
        let side = square_side();
        let x0 = spec.aisle_offset;
        let y0 = spec.extent[1] / 4.0;
        RouteSpec::closed_loop(vec![
            [x0 + side / 2.0, y0],
            [x0 + side, y0],
            [x0 + side, y0 + side],
            [x0, y0 + side],
            [x0, y0],
            [x0 + side / 2.0, y0],
        ])
    }
}
