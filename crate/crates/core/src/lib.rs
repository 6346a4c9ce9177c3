//! Semantic-feature SLAM for indoor parking lots.
//!
//! Surround fisheye cameras are fused into a bird's-eye label image, painted
//! features (parking lines, guide signs, speed bumps, spot corners) become
//! 3D points, and those points build a compact map that later drives are
//! localized against. A synthetic lot simulator stands in for real data.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera_ipm;
pub mod eval;
pub mod geometry;
pub mod localization;
pub mod map_store;
pub mod mapping;
pub mod parking;
pub mod registration;
pub mod semantics;
pub mod sim;

pub use geometry::{Pose6, RotVec};
pub use registration::{Frame, PointCloud};
pub use semantics::{LabeledPoint, SemanticClass};
