//! Pose graph over local-map origins, solved by damped Gauss-Newton.

use crate::geometry::{relative, Pose6};
use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge ({i}, {j}) references a missing node ({nodes} nodes)")]
    MissingNode { i: usize, j: usize, nodes: usize },
    #[error("odometry edges must chain consecutive nodes, found ({i}, {j})")]
    BrokenChain { i: usize, j: usize },
    #[error("pose graph is disconnected: node {0} cannot reach node 0")]
    Disconnected(usize),
    #[error("no descent after damping retries at iteration {iteration}: cost {cost:e}, lambda {lambda:e}")]
    NonConvergence { iteration: usize, cost: f64, lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Measured pose of node `j` in the frame of node `i`.
    pub z: Pose6,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseGraph {
    pub nodes: Vec<Pose6>,
    pub odom_edges: Vec<Edge>,
    pub loop_edges: Vec<Edge>,
}

impl PoseGraph {
    pub fn new(anchor: Pose6) -> Self {
        Self {
            nodes: vec![anchor],
            odom_edges: Vec::new(),
            loop_edges: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Append a node reached from the last one by `z`; returns its id.
    pub fn push_odometry(&mut self, z: Pose6) -> usize {
        let i = self.nodes.len() - 1;
        self.nodes.push(self.nodes[i].compose(&z));
        self.odom_edges.push(Edge { i, j: i + 1, z });
        i + 1
    }

    pub fn add_loop(&mut self, i: usize, j: usize, z: Pose6) {
        self.loop_edges.push(Edge { i, j, z });
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.nodes.len();
        for e in self.odom_edges.iter().chain(&self.loop_edges) {
            if e.i >= n || e.j >= n {
                return Err(GraphError::MissingNode { i: e.i, j: e.j, nodes: n });
            }
        }
        for (k, e) in self.odom_edges.iter().enumerate() {
            if e.i != k || e.j != k + 1 {
                return Err(GraphError::BrokenChain { i: e.i, j: e.j });
            }
        }
        // union-find over both edge sets
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in self.odom_edges.iter().chain(&self.loop_edges) {
            let (a, b) = (root(&mut parent, e.i), root(&mut parent, e.j));
            parent[a.max(b)] = a.min(b);
        }
        for k in 0..n {
            if root(&mut parent, k) != 0 {
                return Err(GraphError::Disconnected(k));
            }
        }
        Ok(())
    }

    /// Diagnostic text dump: `NODE id rx ry rz tx ty tz`, then
    /// `EDGE i j ...` for odometry and `EDGE_LOOP i j ...` for loops.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let six = |v: Vector6<f64>| v.iter().map(|c| format!("{c:.9e}")).collect::<Vec<_>>().join(" ");
        for (id, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "NODE {id} {}", six(p.to_vec6()));
        }
        for e in &self.odom_edges {
            let _ = writeln!(out, "EDGE {} {} {}", e.i, e.j, six(e.z.to_vec6()));
        }
        for e in &self.loop_edges {
            let _ = writeln!(out, "EDGE_LOOP {} {} {}", e.i, e.j, six(e.z.to_vec6()));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnConfig {
    pub max_iter: usize,
    pub step_tol: f64,
    /// First damping value tried after plain Gauss-Newton fails to descend.
    pub lambda0: f64,
    pub max_retries: usize,
    /// Standard deviations of an odometry edge between consecutive local
    /// maps: rotation vector (rad), then translation (m).
    pub odom_sigma: [f64; 6],
    /// Same for a loop edge from ICP.
    pub loop_sigma: [f64; 6],
    /// Central-difference step for the Jacobians.
    pub jacobian_step: f64,
}

impl Default for GnConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            step_tol: 1e-6,
            lambda0: 1e-6,
            max_retries: 10,
            // about 30 m of odometry: heading drifts, roll and pitch do not
            odom_sigma: [0.002, 0.002, 0.012, 0.1, 0.1, 0.01],
            loop_sigma: [0.002, 0.002, 0.002, 0.03, 0.03, 0.03],
            jacobian_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnReport {
    pub poses: Vec<Pose6>,
    pub iterations: usize,
    /// Cost before the first iteration and after every accepted step.
    pub costs: Vec<f64>,
}

impl GnReport {
    pub fn initial_cost(&self) -> f64 {
        self.costs[0]
    }

    pub fn final_cost(&self) -> f64 {
        *self.costs.last().expect("costs start with the initial cost")
    }
}

/// Edge residual: the 6-vector of `relative(z, relative(xi, xj))`.
pub fn edge_residual(xi: &Pose6, xj: &Pose6, z: &Pose6) -> Vector6<f64> {
    relative(z, &relative(xi, xj)).to_vec6()
}

impl GnConfig {
    /// Diagonal information (inverse variances) of odometry and loop edges.
    pub fn information(&self) -> (Vector6<f64>, Vector6<f64>) {
        let inv = |s: &[f64; 6]| Vector6::from_iterator(s.iter().map(|v| 1.0 / (v * v)));
        (inv(&self.odom_sigma), inv(&self.loop_sigma))
    }
}

/// Sum over edges of `r' W r` with the diagonal information `W`.
pub fn graph_cost(g: &PoseGraph, poses: &[Pose6], cfg: &GnConfig) -> f64 {
    let (wo, wl) = cfg.information();
    let term = |e: &Edge, w: &Vector6<f64>| {
        let r = edge_residual(&poses[e.i], &poses[e.j], &e.z);
        r.component_mul(&r).dot(w)
    };
    g.odom_edges.iter().map(|e| term(e, &wo)).sum::<f64>() + g.loop_edges.iter().map(|e| term(e, &wl)).sum::<f64>()
}

/// Minimize the graph cost over all nodes but node 0, which stays fixed.
pub fn optimize_pose_graph(g: &PoseGraph, cfg: &GnConfig) -> Result<GnReport, GraphError> {
    g.validate()?;
    let n = g.nodes.len();
    let mut poses = g.nodes.clone();
    let mut cost = graph_cost(g, &poses, cfg);
    let mut report = GnReport {
        poses: Vec::new(),
        iterations: 0,
        costs: vec![cost],
    };
    if n < 2 {
        report.poses = poses;
        return Ok(report);
    }
    let dim = 6 * (n - 1);
    let (wo, wl) = cfg.information();
    let edges: Vec<(&Edge, Matrix6<f64>)> = g
        .odom_edges
        .iter()
        .map(|e| (e, Matrix6::from_diagonal(&wo)))
        .chain(g.loop_edges.iter().map(|e| (e, Matrix6::from_diagonal(&wl))))
        .collect();

    for iteration in 0..cfg.max_iter {
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let mut b = DVector::<f64>::zeros(dim);
        for (e, w) in &edges {
            let r = edge_residual(&poses[e.i], &poses[e.j], &e.z);
            let (ji, jj) = numeric_jacobians(&poses[e.i], &poses[e.j], &e.z, cfg.jacobian_step);
            let blocks = [(e.i, ji), (e.j, jj)];
            for (a, ja) in &blocks {
                if *a == 0 {
                    continue;
                }
                let ra = 6 * (a - 1);
                let grad = ja.transpose() * w * r;
                for k in 0..6 {
                    b[ra + k] += grad[k];
                }
                for (c, jc) in &blocks {
                    if *c == 0 {
                        continue;
                    }
                    let rc = 6 * (c - 1);
                    let block = ja.transpose() * w * jc;
                    let mut view = h.view_mut((ra, rc), (6, 6));
                    view += block;
                }
            }
        }

        let mut lambda = 0.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_retries {
            let mut damped = h.clone();
            for k in 0..dim {
                damped[(k, k)] += lambda;
            }
            if let Some(chol) = damped.cholesky() {
                let delta = chol.solve(&(-&b));
                let trial: Vec<Pose6> = poses
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        if k == 0 {
                            *p
                        } else {
                            let d = delta.fixed_rows::<6>(6 * (k - 1)).into_owned();
                            p.oplus(&d)
                        }
                    })
                    .collect();
                let trial_cost = graph_cost(g, &trial, cfg);
                if trial_cost <= cost {
                    accepted = Some((trial, trial_cost, delta.norm()));
                    break;
                }
                if delta.norm() < cfg.step_tol {
                    // no further descent at this resolution
                    report.poses = poses;
                    report.iterations = iteration;
                    return Ok(report);
                }
            }
            lambda = if lambda == 0.0 { cfg.lambda0 } else { lambda * 10.0 };
        }
        let Some((trial, trial_cost, step)) = accepted else {
            return Err(GraphError::NonConvergence {
                iteration,
                cost,
                lambda,
            });
        };
        poses = trial;
        cost = trial_cost;
        report.costs.push(cost);
        report.iterations = iteration + 1;
        if step < cfg.step_tol {
            break;
        }
    }
    report.poses = poses;
    Ok(report)
}

type Jac = nalgebra::Matrix6<f64>;

/// Central-difference Jacobians of the edge residual with respect to right
/// perturbations of each endpoint.
pub fn numeric_jacobians(xi: &Pose6, xj: &Pose6, z: &Pose6, h: f64) -> (Jac, Jac) {
    let mut ji = Jac::zeros();
    let mut jj = Jac::zeros();
    for k in 0..6 {
        let mut d = Vector6::zeros();
        d[k] = h;
        let col_i = (edge_residual(&xi.oplus(&d), xj, z) - edge_residual(&xi.oplus(&-d), xj, z)) / (2.0 * h);
        let col_j = (edge_residual(xi, &xj.oplus(&d), z) - edge_residual(xi, &xj.oplus(&-d), z)) / (2.0 * h);
        ji.set_column(k, &col_i);
        jj.set_column(k, &col_j);
    }
    (ji, jj)
}
