//! Vehicle-interaction graphs.
//!
//! Every vehicle becomes a node with features
//! `[x/L, lateral/lane_width, v/v_limit, a/4, lane/N_lane, is_cv, is_emv, (x − x_emv)/L]`.
//! Directed edges come from three generators (proximity, same-or-adjacent
//! lane, EMV influence) merged without duplicates; each edge carries
//! `[Δx/L, Δv/v_limit, same_lane, type]` with type 0 / 0.5 / 1 for
//! proximity / lane / EMV. Self-loops use `[0, 0, 1, 0.5]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{RoadGeometry, VehicleKind, VehicleState, World, A_MAX};

pub const NODE_FEATURES: usize = 8;
pub const EDGE_FEATURES: usize = 4;
pub const SELF_LOOP_FEATURES: [f64; EDGE_FEATURES] = [0.0, 0.0, 1.0, 0.5];

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("vehicle {0} is not a connected vehicle")]
    NotCv(u32),
    #[error("vehicle {0} not found")]
    UnknownVehicle(u32),
    #[error("world has no emergency vehicle")]
    MissingEmv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Proximity edge threshold (m, Euclidean).
    pub d_max: f64,
    /// Longitudinal window for lane-adjacency edges (m).
    pub lane_window: f64,
    /// Radius of the per-agent local subgraph (m).
    pub r_local: f64,
    pub self_loops: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            d_max: 50.0,
            lane_window: 30.0,
            r_local: 30.0,
            self_loops: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeType {
    Proximity,
    Lane,
    Emv,
    SelfLoop,
}

impl EdgeType {
    pub fn tau(self) -> f64 {
        match self {
            EdgeType::Proximity => 0.0,
            EdgeType::Lane | EdgeType::SelfLoop => 0.5,
            EdgeType::Emv => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficGraph {
    pub node_ids: Vec<u32>,
    pub kinds: Vec<VehicleKind>,
    pub x: Vec<[f64; NODE_FEATURES]>,
    /// Directed `(src, dst)` node-index pairs, lexicographically ordered.
    pub edges: Vec<(usize, usize)>,
    pub edge_types: Vec<EdgeType>,
    pub e: Vec<[f64; EDGE_FEATURES]>,
    pub emv_node: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSubgraph {
    pub graph: TrafficGraph,
    pub ego_node: usize,
}

/// Debug dump layout: `{nodes, edges, x, e}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<u32>,
    pub edges: Vec<[usize; 2]>,
    pub x: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
}

impl TrafficGraph {
    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Node indices of connected vehicles, in node order.
    pub fn cv_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| self.kinds[i] == VehicleKind::Cv)
            .collect()
    }

    pub fn node_of(&self, id: u32) -> Option<usize> {
        self.node_ids.iter().position(|&n| n == id)
    }

    pub fn dump(&self) -> GraphDump {
        GraphDump {
            nodes: self.node_ids.clone(),
            edges: self.edges.iter().map(|&(s, d)| [s, d]).collect(),
            x: self.x.iter().map(|r| r.to_vec()).collect(),
            e: self.e.iter().map(|r| r.to_vec()).collect(),
        }
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]` of the result.
    /// Edges are re-sorted into lexicographic order.
    pub fn permuted(&self, perm: &[usize]) -> TrafficGraph {
        let n = self.node_count();
        assert_eq!(perm.len(), n, "permutation length");
        let mut node_ids = vec![0; n];
        let mut kinds = vec![VehicleKind::Hv; n];
        let mut x = vec![[0.0; NODE_FEATURES]; n];
        for i in 0..n {
            node_ids[perm[i]] = self.node_ids[i];
            kinds[perm[i]] = self.kinds[i];
            x[perm[i]] = self.x[i];
        }
        let mut edges: Vec<((usize, usize), EdgeType, [f64; EDGE_FEATURES])> = self
            .edges
            .iter()
            .zip(&self.edge_types)
            .zip(&self.e)
            .map(|((&(s, d), &t), &f)| ((perm[s], perm[d]), t, f))
            .collect();
        edges.sort_by_key(|(pair, _, _)| *pair);
        TrafficGraph {
            node_ids,
            kinds,
            x,
            edges: edges.iter().map(|(p, _, _)| *p).collect(),
            edge_types: edges.iter().map(|(_, t, _)| *t).collect(),
            e: edges.iter().map(|(_, _, f)| *f).collect(),
            emv_node: self.emv_node.map(|i| perm[i]),
        }
    }
}

fn lateral(vehicle: &VehicleState, geometry: &RoadGeometry) -> f64 {
    vehicle.lane as f64 * geometry.lane_width
}

/// Node feature row of `vehicle`; `emv_x` is the EMV's front position.
pub fn node_features(vehicle: &VehicleState, emv_x: f64, geometry: &RoadGeometry) -> [f64; NODE_FEATURES] {
    let lane_center = (vehicle.lane as f64 + 0.5) * geometry.lane_width;
    [
        vehicle.x / geometry.length,
        lane_center / geometry.lane_width,
        vehicle.v / geometry.speed_limit,
        vehicle.a / A_MAX,
        vehicle.lane as f64 / geometry.lane_count as f64,
        f64::from(u8::from(vehicle.kind == VehicleKind::Cv)),
        f64::from(u8::from(vehicle.kind == VehicleKind::Emv)),
        (vehicle.x - emv_x) / geometry.length,
    ]
}

/// Edge feature row for the directed pair `src → dst`.
pub fn edge_features(
    src: &VehicleState,
    dst: &VehicleState,
    edge_type: EdgeType,
    geometry: &RoadGeometry,
) -> [f64; EDGE_FEATURES] {
    if edge_type == EdgeType::SelfLoop {
        return SELF_LOOP_FEATURES;
    }
    [
        (dst.x - src.x) / geometry.length,
        (dst.v - src.v) / geometry.speed_limit,
        f64::from(u8::from(src.lane == dst.lane)),
        edge_type.tau(),
    ]
}

/// Highest-priority edge type for an ordered pair of distinct vehicles, or
/// `None` when no generator connects them. Priority: EMV > lane > proximity.
pub fn classify_pair(
    a: &VehicleState,
    b: &VehicleState,
    geometry: &RoadGeometry,
    config: &GraphConfig,
) -> Option<EdgeType> {
    if a.kind == VehicleKind::Emv || b.kind == VehicleKind::Emv {
        return Some(EdgeType::Emv);
    }
    let dx = b.x - a.x;
    let lane_gap = a.lane.abs_diff(b.lane);
    if lane_gap <= 1 && dx.abs() < config.lane_window {
        return Some(EdgeType::Lane);
    }
    let dy = lateral(b, geometry) - lateral(a, geometry);
    if (dx * dx + dy * dy).sqrt() < config.d_max {
        return Some(EdgeType::Proximity);
    }
    None
}

/// Directed edges with their types over `vehicles` (node index = slice index).
pub fn build_edges(
    vehicles: &[VehicleState],
    geometry: &RoadGeometry,
    config: &GraphConfig,
) -> Vec<((usize, usize), EdgeType)> {
    let mut edges = Vec::new();
    for (i, a) in vehicles.iter().enumerate() {
        for (j, b) in vehicles.iter().enumerate() {
            if i == j {
                if config.self_loops {
                    edges.push(((i, i), EdgeType::SelfLoop));
                }
            } else if let Some(t) = classify_pair(a, b, geometry, config) {
                edges.push(((i, j), t));
            }
        }
    }
    edges
}

/// Graph over an explicit vehicle list, in the given order.
pub fn build_graph_from(
    vehicles: &[VehicleState],
    emv_x: f64,
    geometry: &RoadGeometry,
    config: &GraphConfig,
) -> TrafficGraph {
    let typed = build_edges(vehicles, geometry, config);
    let e = typed
        .iter()
        .map(|&((s, d), t)| edge_features(&vehicles[s], &vehicles[d], t, geometry))
        .collect();
    TrafficGraph {
        node_ids: vehicles.iter().map(|v| v.id).collect(),
        kinds: vehicles.iter().map(|v| v.kind).collect(),
        x: vehicles.iter().map(|v| node_features(v, emv_x, geometry)).collect(),
        edges: typed.iter().map(|&(p, _)| p).collect(),
        edge_types: typed.iter().map(|&(_, t)| t).collect(),
        e,
        emv_node: vehicles.iter().position(|v| v.kind == VehicleKind::Emv),
    }
}

/// Global interaction graph of the world.
pub fn build_graph(world: &World, config: &GraphConfig) -> TrafficGraph {
    let emv_x = world.emv().x;
    build_graph_from(&world.vehicles, emv_x, &world.config.geometry, config)
}

/// Subgraph induced by the vehicles within `r_local` of the CV `ego_id`.
pub fn build_local(world: &World, ego_id: u32, config: &GraphConfig) -> Result<LocalSubgraph, GraphError> {
    let ego = world.vehicle(ego_id).ok_or(GraphError::UnknownVehicle(ego_id))?;
    if ego.kind != VehicleKind::Cv {
        return Err(GraphError::NotCv(ego_id));
    }
    let members: Vec<VehicleState> = world
        .vehicles
        .iter()
        .filter(|v| (v.x - ego.x).abs() <= config.r_local)
        .cloned()
        .collect();
    let ego_node = members
        .iter()
        .position(|v| v.id == ego_id)
        .expect("ego within its own radius");
    let graph = build_graph_from(&members, world.emv().x, &world.config.geometry, config);
    Ok(LocalSubgraph { graph, ego_node })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::EpisodeConfig;

    fn vehicle(id: u32, kind: VehicleKind, x: f64, lane: usize, v: f64) -> VehicleState {
        VehicleState {
            id,
            kind,
            x,
            lane,
            v,
            a: 0.0,
            length: 4.5,
            desired_speed: v,
        }
    }

    fn world(vehicles: Vec<VehicleState>) -> World {
        World::from_vehicles(EpisodeConfig::default(), vehicles, 0).unwrap()
    }

    #[test]
    fn node_feature_scaling() {
        let g = RoadGeometry::default();
        let v = vehicle(3, VehicleKind::Cv, 100.0, 1, 13.89);
        let f = node_features(&v, 20.0, &g);
        assert_eq!(f[0], 0.5);
        assert_eq!(f[1], 1.5);
        assert_eq!(f[2], 1.0);
        assert_eq!(f[4], 0.5);
        assert_eq!((f[5], f[6]), (1.0, 0.0));
        assert!((f[7] - 0.4).abs() < 1e-15);
        let emv = vehicle(0, VehicleKind::Emv, 20.0, 0, 8.0);
        let fe = node_features(&emv, 20.0, &g);
        assert_eq!((fe[5], fe[6], fe[7]), (0.0, 1.0, 0.0));
    }

    #[test]
    fn emv_edges_dominate_far_pairs() {
        let w = world(vec![
            vehicle(0, VehicleKind::Emv, 0.0, 0, 8.0),
            vehicle(1, VehicleKind::Hv, 40.0, 0, 5.0),
            vehicle(2, VehicleKind::Hv, 100.0, 0, 5.0),
        ]);
        let cfg = GraphConfig {
            self_loops: false,
            ..Default::default()
        };
        let g = build_graph(&w, &cfg);
        assert_eq!(g.edges, vec![(0, 1), (0, 2), (1, 0), (2, 0)]);
        assert!(g.edge_types.iter().all(|&t| t == EdgeType::Emv));
        assert!(g.e.iter().all(|f| f[3] == 1.0));
    }

    #[test]
    fn self_loops_carry_identity_features() {
        let w = world(vec![vehicle(0, VehicleKind::Emv, 0.0, 0, 8.0)]);
        let g = build_graph(&w, &GraphConfig::default());
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edges, vec![(0, 0)]);
        assert_eq!(g.e[0], [0.0, 0.0, 1.0, 0.5]);
        let bare = build_graph(
            &w,
            &GraphConfig {
                self_loops: false,
                ..Default::default()
            },
        );
        assert!(bare.edges.is_empty());
    }

    #[test]
    fn distant_plain_vehicles_are_unconnected() {
        let g = RoadGeometry::default();
        let a = vehicle(1, VehicleKind::Hv, 0.0, 0, 5.0);
        let b = vehicle(2, VehicleKind::Cv, 60.0, 1, 5.0);
        assert_eq!(classify_pair(&a, &b, &g, &GraphConfig::default()), None);
    }

    #[test]
    fn edge_feature_layout() {
        let g = RoadGeometry::default();
        let a = vehicle(1, VehicleKind::Hv, 0.0, 0, 5.0);
        let b = vehicle(2, VehicleKind::Cv, 50.0, 0, 5.0);
        assert_eq!(edge_features(&a, &b, EdgeType::Lane, &g), [0.25, 0.0, 1.0, 0.5]);
        assert_eq!(edge_features(&a, &b, EdgeType::Emv, &g)[3], 1.0);
    }

    #[test]
    fn local_radius_is_inclusive_and_ego_must_be_cv() {
        let w = world(vec![
            vehicle(0, VehicleKind::Emv, -50.0, 0, 8.0),
            vehicle(1, VehicleKind::Cv, 100.0, 0, 5.0),
            vehicle(2, VehicleKind::Hv, 129.0, 1, 5.0),
            vehicle(3, VehicleKind::Hv, 131.0, 0, 5.0),
        ]);
        let local = build_local(&w, 1, &GraphConfig::default()).unwrap();
        assert_eq!(local.graph.node_ids, vec![1, 2]);
        assert_eq!(local.ego_node, 0);
        assert!(local.graph.emv_node.is_none());
        assert_eq!(build_local(&w, 2, &GraphConfig::default()), Err(GraphError::NotCv(2)));
    }
}
