//! Road graph: ingest, speed imputation, travel-time derivation, closures,
//! congestion, snapping and shortest-path travel times.
//!
//! Travel times are minutes throughout.

mod io;
mod search;
mod snap;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::geometry::{buffer_in, GeoError, GeoPoint, GeoPolygon, LocalFrame, PlanarPolygon};

pub use io::{parse_maxspeed, read_edges_csv, read_edges_geojson, read_roads, KPH_PER_MPH};
pub use search::{sssp_minutes, travel_matrix, TravelMatrix};
pub use snap::{snap, SnapIndex};

pub type NodeId = i64;

/// Default snap radius for off-network points.
pub const DEFAULT_SNAP_RADIUS_M: f64 = 5_000.0;

#[derive(Debug, Error)]
pub enum RoadError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("edge `{edge}` references unknown node {node}")]
    UnknownNode { edge: String, node: NodeId },
    #[error("rejected edge `{edge}`: {reason}")]
    RejectedEdge { edge: String, reason: String },
    #[error("no edge has a known maxspeed; speeds cannot be imputed")]
    Unimputable,
    #[error("unknown source node {0}")]
    UnknownSource(NodeId),
    #[error("point {} cannot be snapped: nearest node is {nearest_m:.1} m away", point.as_deref().unwrap_or("?"))]
    Unsnappable { point: Option<String>, nearest_m: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeoError),
    #[error("road input line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNode {
    pub id: NodeId,
    pub location: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadEdge {
    pub id: String,
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub highway: String,
    pub maxspeed_kph: Option<f64>,
    pub travel_min: Option<f64>,
    /// Vertices from `from` to `to`; empty means a straight segment.
    pub geometry: Vec<GeoPoint>,
}

impl RoadEdge {
    /// Minutes to traverse `length_m` at `speed_kph`.
    pub fn minutes(length_m: f64, speed_kph: f64) -> f64 {
        length_m / 1000.0 / speed_kph * 60.0
    }
}

/// Directed road graph. Immutable: every transformation returns a new graph.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    nodes: Vec<RoadNode>,
    node_index: HashMap<NodeId, usize>,
    edges: Vec<RoadEdge>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl RoadGraph {
    pub fn new(nodes: Vec<RoadNode>, edges: Vec<RoadEdge>) -> Result<Self, RoadError> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id, i).is_some() {
                return Err(RoadError::DuplicateNode(n.id));
            }
        }
        let mut out_edges = vec![Vec::new(); nodes.len()];
        let mut in_edges = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            let from =
                *node_index.get(&e.from).ok_or_else(|| RoadError::UnknownNode { edge: e.id.clone(), node: e.from })?;
            let to = *node_index.get(&e.to).ok_or_else(|| RoadError::UnknownNode { edge: e.id.clone(), node: e.to })?;
            if !(e.length_m > 0.0) || !e.length_m.is_finite() {
                return Err(RoadError::RejectedEdge {
                    edge: e.id.clone(),
                    reason: format!("length must be positive, got {}", e.length_m),
                });
            }
            out_edges[from].push(i);
            in_edges[to].push(i);
        }
        Ok(RoadGraph { nodes, node_index, edges, out_edges, in_edges })
    }

    fn with_edges(&self, edges: Vec<RoadEdge>) -> RoadGraph {
        RoadGraph::new(self.nodes.clone(), edges).expect("edges taken from a valid graph")
    }

    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RoadEdge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&RoadNode> {
        self.node_index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn index_of(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub(crate) fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    pub(crate) fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[node]
    }

    /// Planar frame centered on the bounding box of all nodes.
    pub fn frame(&self) -> Option<LocalFrame> {
        LocalFrame::centered_on(self.nodes.iter().map(|n| &n.location))
    }

    /// Full vertex path of an edge, falling back to its endpoints.
    pub fn edge_path(&self, edge: &RoadEdge) -> Vec<GeoPoint> {
        if edge.geometry.len() >= 2 {
            edge.geometry.clone()
        } else {
            let loc = |id| self.node(id).map(|n| n.location).expect("validated endpoint");
            vec![loc(edge.from), loc(edge.to)]
        }
    }

    pub fn times_derived(&self) -> bool {
        self.edges.iter().all(|e| e.travel_min.is_some())
    }
}

/// Fills missing speeds with the mean known speed of the edge's highway
/// class, or the global mean when the class has no known speed.
pub fn impute_speeds(graph: &RoadGraph) -> Result<RoadGraph, RoadError> {
    let mut by_class: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let (mut total, mut count) = (0.0, 0usize);
    for e in &graph.edges {
        if let Some(s) = e.maxspeed_kph {
            let entry = by_class.entry(e.highway.as_str()).or_default();
            entry.0 += s;
            entry.1 += 1;
            total += s;
            count += 1;
        }
    }
    if count == 0 {
        return Err(RoadError::Unimputable);
    }
    let global = total / count as f64;
    let class_mean: HashMap<&str, f64> = by_class.iter().map(|(k, (sum, n))| (*k, sum / *n as f64)).collect();
    let edges = graph
        .edges
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if e.maxspeed_kph.is_none() {
                e.maxspeed_kph = Some(class_mean.get(e.highway.as_str()).copied().unwrap_or(global));
            }
            e
        })
        .collect();
    Ok(graph.with_edges(edges))
}

/// Sets `travel_min` on every edge from its length and speed.
pub fn derive_times(graph: &RoadGraph) -> Result<RoadGraph, RoadError> {
    let edges = graph
        .edges
        .iter()
        .map(|e| {
            let speed = e.maxspeed_kph.ok_or_else(|| RoadError::RejectedEdge {
                edge: e.id.clone(),
                reason: "missing maxspeed; impute speeds first".into(),
            })?;
            if !(speed > 0.0) || !speed.is_finite() {
                return Err(RoadError::RejectedEdge {
                    edge: e.id.clone(),
                    reason: format!("speed must be positive, got {speed}"),
                });
            }
            let mut e = e.clone();
            e.travel_min = Some(RoadEdge::minutes(e.length_m, speed));
            Ok(e)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(graph.with_edges(edges))
}

fn planar_zones(frame: &LocalFrame, polys: &[GeoPolygon]) -> Vec<PlanarPolygon> {
    polys.iter().map(|p| frame.project_polygon(p)).collect()
}

fn edge_hits(graph: &RoadGraph, frame: &LocalFrame, edge: &RoadEdge, zones: &[PlanarPolygon]) -> bool {
    let path = frame.project_path(&graph.edge_path(edge));
    zones.iter().any(|z| z.intersects_path(&path))
}

/// Removes every edge whose geometry touches any perimeter. Nodes are kept.
pub fn apply_closures(graph: &RoadGraph, perimeters: &[GeoPolygon]) -> RoadGraph {
    let Some(frame) = graph.frame() else {
        return graph.clone();
    };
    if perimeters.is_empty() {
        return graph.clone();
    }
    let zones = planar_zones(&frame, perimeters);
    let edges = graph.edges.iter().filter(|e| !edge_hits(graph, &frame, e, &zones)).cloned().collect();
    graph.with_edges(edges)
}

/// Speed cap applied to roads within a buffer around evacuation zones.
#[derive(Debug, Clone)]
pub struct CongestionOverlay {
    zones: Vec<GeoPolygon>,
    buffer_m: f64,
    speed_cap_kph: f64,
}

impl CongestionOverlay {
    pub const DEFAULT_BUFFER_M: f64 = 5_000.0;
    pub const DEFAULT_SPEED_CAP_KPH: f64 = 10.0;

    pub fn new(zones: Vec<GeoPolygon>, buffer_m: f64, speed_cap_kph: f64) -> Result<Self, RoadError> {
        if !(buffer_m >= 0.0) || !buffer_m.is_finite() {
            return Err(RoadError::InvalidInput(format!("congestion buffer must be >= 0, got {buffer_m}")));
        }
        if !(speed_cap_kph > 0.0) || !speed_cap_kph.is_finite() {
            return Err(RoadError::InvalidInput(format!("congestion speed cap must be > 0, got {speed_cap_kph}")));
        }
        Ok(CongestionOverlay { zones, buffer_m, speed_cap_kph })
    }

    pub fn with_defaults(zones: Vec<GeoPolygon>) -> Self {
        CongestionOverlay { zones, buffer_m: Self::DEFAULT_BUFFER_M, speed_cap_kph: Self::DEFAULT_SPEED_CAP_KPH }
    }

    pub fn zones(&self) -> &[GeoPolygon] {
        &self.zones
    }

    pub fn buffer_m(&self) -> f64 {
        self.buffer_m
    }

    pub fn speed_cap_kph(&self) -> f64 {
        self.speed_cap_kph
    }
}

/// Caps speed at the overlay limit on edges touching the buffered zones
/// and re-derives their travel time.
pub fn apply_congestion(graph: &RoadGraph, overlay: &CongestionOverlay) -> Result<RoadGraph, RoadError> {
    let Some(frame) = graph.frame() else {
        return Ok(graph.clone());
    };
    let buffered =
        overlay.zones.iter().map(|z| buffer_in(&frame, z, overlay.buffer_m)).collect::<Result<Vec<_>, _>>()?;
    let zones = planar_zones(&frame, &buffered);
    let cap = overlay.speed_cap_kph;
    let edges = graph
        .edges
        .iter()
        .map(|e| {
            let mut e = e.clone();
            let slower = e.maxspeed_kph.is_none_or(|s| s > cap);
            if slower && edge_hits(graph, &frame, &e, &zones) {
                e.maxspeed_kph = Some(cap);
                e.travel_min = Some(RoadEdge::minutes(e.length_m, cap));
            }
            e
        })
        .collect();
    Ok(graph.with_edges(edges))
}
