//! Ground-truth routes: polylines with circular fillets, sampled at a fixed
//! rate and speed.

use super::SimError;
use crate::geometry::Pose6;
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub time: f64,
    pub pose: Pose6,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouteSpec {
    pub waypoints: Vec<[f64; 2]>,
    /// Meters per second.
    pub speed: f64,
    pub rate_hz: f64,
    pub turn_radius: f64,
}

impl Default for RouteSpec {
    fn default() -> Self {
        Self {
            waypoints: Vec::new(),
            speed: 2.0,
            rate_hz: 15.0,
            turn_radius: super::presets::TURN_RADIUS,
        }
    }
}

impl RouteSpec {
    pub fn closed_loop(waypoints: Vec<[f64; 2]>) -> Self {
        Self {
            waypoints,
            ..Self::default()
        }
    }

    pub fn from_points(points: &[Vector2<f64>]) -> Self {
        Self::closed_loop(points.iter().map(|p| [p.x, p.y]).collect())
    }

    /// Same route shifted sideways by `offset` meters (left of travel positive).
    pub fn shifted(&self, offset: f64) -> Self {
        let pts: Vec<Vector2<f64>> = self.waypoints.iter().map(|w| Vector2::new(w[0], w[1])).collect();
        let n = pts.len();
        let normal = |i: usize| {
            let d = (pts[i + 1] - pts[i]).normalize();
            Vector2::new(-d.y, d.x)
        };
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let shift = if i == 0 {
                normal(0)
            } else if i == n - 1 {
                normal(n - 2)
            } else {
                // miter for right-angle corners keeps both legs at the offset
                normal(i - 1) + normal(i)
            };
            let p = pts[i] + shift * offset;
            out.push([p.x, p.y]);
        }
        Self {
            waypoints: out,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
enum Piece {
    Line { from: Vector2<f64>, dir: Vector2<f64>, len: f64 },
    Arc { center: Vector2<f64>, radius: f64, start: f64, sweep: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match self {
            Piece::Line { len, .. } => *len,
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn at(&self, s: f64) -> (Vector2<f64>, f64) {
        match self {
            Piece::Line { from, dir, .. } => (from + dir * s, dir.y.atan2(dir.x)),
            Piece::Arc { center, radius, start, sweep } => {
                let a = start + sweep.signum() * s / radius;
                let p = center + Vector2::new(a.cos(), a.sin()) * *radius;
                (p, a + sweep.signum() * PI / 2.0)
            }
        }
    }
}

fn build_pieces(route: &RouteSpec) -> Result<Vec<Piece>, SimError> {
    let pts: Vec<Vector2<f64>> = route.waypoints.iter().map(|w| Vector2::new(w[0], w[1])).collect();
    if pts.len() < 2 {
        return Err(SimError::InvalidRoute("need at least two waypoints".into()));
    }
    if !(route.speed > 0.0 && route.rate_hz > 0.0) {
        return Err(SimError::InvalidRoute("speed and rate must be positive".into()));
    }
    for w in pts.windows(2) {
        if (w[1] - w[0]).norm() < 1e-9 {
            return Err(SimError::InvalidRoute("repeated waypoint".into()));
        }
    }
    let r = route.turn_radius;
    // tangent distance consumed at each interior vertex
    let mut cut = vec![0.0; pts.len()];
    let mut arcs = vec![None; pts.len()];
    for i in 1..pts.len() - 1 {
        let d0 = (pts[i] - pts[i - 1]).normalize();
        let d1 = (pts[i + 1] - pts[i]).normalize();
        let turn = d0.perp(&d1).atan2(d0.dot(&d1));
        if turn.abs() < 1e-12 {
            continue;
        }
        if !(r > 0.0) {
            return Err(SimError::InfeasibleTurn { index: i, radius: r });
        }
        let tangent = r * (turn.abs() / 2.0).tan();
        cut[i] = tangent;
        let start_pt = pts[i] - d0 * tangent;
        let left = Vector2::new(-d0.y, d0.x);
        let center = start_pt + left * (r * turn.signum());
        let start_angle = (start_pt - center).y.atan2((start_pt - center).x);
        arcs[i] = Some(Piece::Arc {
            center,
            radius: r,
            start: start_angle,
            sweep: turn,
        });
    }
    let mut pieces = Vec::new();
    for i in 0..pts.len() - 1 {
        let seg = pts[i + 1] - pts[i];
        let len = seg.norm() - cut[i] - cut[i + 1];
        if len < -1e-9 {
            let index = if cut[i] > 0.0 { i } else { i + 1 };
            return Err(SimError::InfeasibleTurn { index, radius: r });
        }
        let dir = seg / seg.norm();
        if len > 1e-12 {
            pieces.push(Piece::Line {
                from: pts[i] + dir * cut[i],
                dir,
                len,
            });
        }
        if let Some(arc) = arcs[i + 1].clone() {
            pieces.push(arc);
        }
    }
    Ok(pieces)
}

/// Sample the route at `rate_hz`. The final pose lands exactly on the last
/// waypoint.
pub fn generate_trajectory(route: &RouteSpec) -> Result<Vec<TimedPose>, SimError> {
    let pieces = build_pieces(route)?;
    let total: f64 = pieces.iter().map(Piece::length).sum();
    let dt = 1.0 / route.rate_hz;
    let n = (total / route.speed * route.rate_hz).floor() as usize;
    let mut out = Vec::with_capacity(n + 2);
    let mut piece = 0;
    let mut offset = 0.0;
    let mut push = |time: f64, s: f64, out: &mut Vec<TimedPose>| {
        while piece + 1 < pieces.len() && s > offset + pieces[piece].length() {
            offset += pieces[piece].length();
            piece += 1;
        }
        let local = (s - offset).clamp(0.0, pieces[piece].length());
        let (p, heading) = pieces[piece].at(local);
        out.push(TimedPose {
            time,
            pose: Pose6::planar(p.x, p.y, crate::geometry::wrap_angle(heading)),
        });
    };
    for k in 0..=n {
        let time = k as f64 * dt;
        push(time, time * route.speed, &mut out);
    }
    let end_time = total / route.speed;
    if end_time - out[out.len() - 1].time > 1e-9 {
        push(end_time, total, &mut out);
    } else {
        out.pop();
        push(end_time, total, &mut out);
    }
    Ok(out)
}

/// Sum of straight-line distances between consecutive poses.
pub fn path_length(traj: &[TimedPose]) -> f64 {
    traj.windows(2).map(|w| (w[1].pose.t - w[0].pose.t).norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_route_is_colinear_and_even() {
        let route = RouteSpec::closed_loop(vec![[0.0, 0.0], [10.0, 0.0]]);
        let traj = generate_trajectory(&route).unwrap();
        assert_eq!(traj.len(), 76);
        let step = route.speed / route.rate_hz;
        for w in traj.windows(2) {
            let d = w[1].pose.t - w[0].pose.t;
            assert!(d.y.abs() < 1e-12 && (d.x - step).abs() < 1e-9);
            assert!(w[1].time > w[0].time);
        }
        assert!((traj.last().unwrap().pose.t.x - 10.0).abs() < 1e-12);
    }

    #[test]
    fn heading_is_tangent() {
        let route = RouteSpec::closed_loop(vec![[0.0, 0.0], [20.0, 0.0], [20.0, 20.0], [5.0, 30.0]]);
        let traj = generate_trajectory(&route).unwrap();
        for w in traj.windows(3) {
            let chord = w[2].pose.t - w[0].pose.t;
            let tangent = chord.y.atan2(chord.x);
            let err = crate::geometry::wrap_angle(tangent - w[1].pose.yaw());
            assert!(err.abs() < 0.02, "heading error {err}");
        }
    }

    #[test]
    fn tight_turn_is_infeasible() {
        let route = RouteSpec {
            turn_radius: 10.0,
            ..RouteSpec::closed_loop(vec![[0.0, 0.0], [5.0, 0.0], [5.0, 5.0]])
        };
        assert!(matches!(generate_trajectory(&route), Err(SimError::InfeasibleTurn { .. })));
    }

    #[test]
    fn rejects_degenerate_routes() {
        assert!(generate_trajectory(&RouteSpec::closed_loop(vec![[0.0, 0.0]])).is_err());
        assert!(generate_trajectory(&RouteSpec::closed_loop(vec![[0.0, 0.0], [0.0, 0.0]])).is_err());
    }

    #[test]
    fn shifted_route_keeps_parallel_legs() {
        let route = RouteSpec::closed_loop(vec![[10.0, 0.0], [20.0, 0.0], [20.0, 10.0], [0.0, 10.0], [0.0, 0.0], [10.0, 0.0]]);
        let s = route.shifted(1.0);
        assert_eq!(s.waypoints[0], [10.0, 1.0]);
        assert_eq!(s.waypoints[1], [19.0, 1.0]);
        assert_eq!(s.waypoints[2], [19.0, 9.0]);
        assert_eq!(s.waypoints[5], [10.0, 1.0]);
    }
}
