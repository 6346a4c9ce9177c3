//! Frame-by-frame mapping: cut 30 m segments, close loops as segments
//! finish, and assemble the optimized map at the end.

use super::graph::{optimize_pose_graph, GnConfig, PoseGraph};
use super::loops::{detect_loop, LoopConfig, LoopEdge};
use super::{accumulate, assemble_global_map, finalize_local_map, GlobalMap, LocalMap, MappingError};
use crate::geometry::{relative, Pose6};
use crate::parking::{detect_spots, SpotConfig};
use crate::registration::PointCloud;
use crate::semantics::cluster_corner_points;
use crate::sim::TimedPose;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingConfig {
    pub segment_length: f64,
    pub voxel: f64,
    /// Cells of a finished segment seen fewer times than this are dropped.
    pub min_hits: usize,
    /// Linking distance for grouping corner points into corners, meters.
    pub corner_link: f64,
    pub loops: LoopConfig,
    pub optimizer: GnConfig,
    pub spots: SpotConfig,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            segment_length: 30.0,
            voxel: 0.1,
            min_hits: 2,
            corner_link: 0.5,
            loops: LoopConfig::default(),
            optimizer: GnConfig::default(),
            spots: SpotConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct FrameRecord {
    time: f64,
    map: usize,
    /// Vehicle pose in its local map's frame.
    rel: Pose6,
    odom: Pose6,
}

#[derive(Debug)]
pub struct Mapper {
    cfg: MappingConfig,
    graph: Option<PoseGraph>,
    maps: Vec<LocalMap>,
    current: Option<LocalMap>,
    /// Origin of the map that starts with the next frame.
    next_origin: Option<Pose6>,
    frames: Vec<FrameRecord>,
    loops: Vec<LoopEdge>,
}

#[derive(Debug, Clone)]
pub struct MappingOutput {
    pub map: GlobalMap,
    pub local_maps: Vec<LocalMap>,
    /// Nodes hold the optimized local-map poses.
    pub graph: PoseGraph,
    pub loops: Vec<LoopEdge>,
    /// Per-frame poses after optimization.
    pub trajectory: Vec<TimedPose>,
    /// Per-frame odometry poses, as fed in.
    pub odometry: Vec<TimedPose>,
}

impl Mapper {
    pub fn new(cfg: MappingConfig) -> Self {
        Self {
            cfg,
            graph: None,
            maps: Vec::new(),
            current: None,
            next_origin: None,
            frames: Vec::new(),
            loops: Vec::new(),
        }
    }

    pub fn loops(&self) -> &[LoopEdge] {
        &self.loops
    }

    /// Add one frame: its odometry pose and vehicle-frame features.
    pub fn push(&mut self, time: f64, odom: &Pose6, feats: &PointCloud) -> Result<(), MappingError> {
        if self.current.is_none() {
            let origin = self.next_origin.take().unwrap_or(*odom);
            let id = self.maps.len();
            match &mut self.graph {
                None => self.graph = Some(PoseGraph::new(origin)),
                Some(g) => {
                    let prev = self.maps.last().expect("a finished map precedes").origin;
                    g.push_odometry(relative(&prev, &origin));
                }
            }
            self.current = Some(LocalMap::new(id, origin));
        }
        let lm = self.current.as_mut().expect("just created");
        accumulate(lm, feats, odom)?;
        self.frames.push(FrameRecord {
            time,
            map: lm.id,
            rel: *lm.keyposes.last().expect("accumulate pushed a keypose"),
            odom: *odom,
        });
        if lm.traversed_length >= self.cfg.segment_length {
            self.close_current()?;
            self.next_origin = Some(*odom);
        }
        Ok(())
    }

    fn close_current(&mut self) -> Result<(), MappingError> {
        let Some(mut lm) = self.current.take() else {
            return Ok(());
        };
        lm.cloud = lm.cloud.voxel_filter(self.cfg.voxel, self.cfg.min_hits);
        let mut lm = finalize_local_map(lm, self.cfg.voxel);
        let corners = cluster_corner_points(&lm.cloud, self.cfg.corner_link);
        lm.spots = detect_spots(&corners, &lm.cloud, &self.cfg.spots);

        let graph = self.graph.as_mut().expect("graph exists once a map exists");
        if let Some(edge) = detect_loop(&lm, &self.maps, &graph.nodes, &self.cfg.loops) {
            graph.add_loop(edge.i, edge.j, edge.z);
            self.loops.push(edge);
            let report = optimize_pose_graph(graph, &self.cfg.optimizer)?;
            graph.nodes = report.poses;
        }
        self.maps.push(lm);
        Ok(())
    }

    /// Close the last segment and assemble the global map.
    pub fn finish(mut self) -> Result<MappingOutput, MappingError> {
        self.close_current()?;
        let graph = self.graph.take().ok_or(MappingError::Empty)?;
        let poses = graph.nodes.clone();
        let map = assemble_global_map(
            &self.maps,
            &poses,
            self.cfg.voxel,
            self.cfg.spots.merge_radius,
            poses[0],
        );
        let trajectory = self
            .frames
            .iter()
            .map(|f| TimedPose {
                time: f.time,
                pose: poses[f.map].compose(&f.rel),
            })
            .collect();
        let odometry = self
            .frames
            .iter()
            .map(|f| TimedPose {
                time: f.time,
                pose: f.odom,
            })
            .collect();
        Ok(MappingOutput {
            map,
            local_maps: self.maps,
            graph,
            loops: self.loops,
            trajectory,
            odometry,
        })
    }
}
