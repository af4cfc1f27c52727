use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{NodeId, RoadEdge, RoadError, RoadGraph, RoadNode};
use crate::geojson::{self, FeatureCollection, Geometry};
use crate::geometry::{distance_m, GeoPoint};

pub const KPH_PER_MPH: f64 = 1.609344;

/// Parses an OSM-style maxspeed value into kph. Bare numbers are kph,
/// `mph` suffixes are converted, `a;b` lists average their parts.
pub fn parse_maxspeed(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    if raw.contains(';') || raw.contains('|') {
        let parts: Vec<f64> = raw.split([';', '|']).filter_map(parse_maxspeed).collect();
        return (!parts.is_empty()).then(|| parts.iter().sum::<f64>() / parts.len() as f64);
    }
    let lower = raw.to_ascii_lowercase();
    let (num, factor) = if let Some(n) = lower.strip_suffix("mph") {
        (n, KPH_PER_MPH)
    } else if let Some(n) = lower.strip_suffix("km/h").or_else(|| lower.strip_suffix("kph")) {
        (n, 1.0)
    } else {
        (lower.as_str(), 1.0)
    };
    let v: f64 = num.trim().parse().ok()?;
    (v > 0.0 && v.is_finite()).then_some(v * factor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Oneway {
    Both,
    Forward,
    Backward,
}

fn parse_oneway(raw: Option<&str>) -> Oneway {
    match raw.map(|s| s.trim().to_ascii_lowercase()).as_deref() {
        Some("yes" | "true" | "1") => Oneway::Forward,
        Some("-1" | "reverse") => Oneway::Backward,
        _ => Oneway::Both,
    }
}

fn parse_wkt_linestring(wkt: &str) -> Result<Vec<GeoPoint>, String> {
    let t = wkt.trim();
    let upper = t.to_ascii_uppercase();
    if !upper.starts_with("LINESTRING") {
        return Err(format!("expected LINESTRING, got `{}`", t.chars().take(24).collect::<String>()));
    }
    let open = t.find('(').ok_or("missing `(`")?;
    let close = t.rfind(')').ok_or("missing `)`")?;
    t[open + 1..close]
        .split(',')
        .map(|pair| {
            let nums: Vec<f64> = pair
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|e| format!("bad coordinate `{x}`: {e}")))
                .collect::<Result<_, _>>()?;
            geojson::position(&nums)
        })
        .collect()
}

struct RawEdge {
    id: String,
    u: NodeId,
    v: NodeId,
    length_m: Option<f64>,
    highway: String,
    maxspeed: Option<f64>,
    oneway: Oneway,
    geometry: Vec<GeoPoint>,
}

fn build_graph(raw: Vec<(usize, RawEdge)>) -> Result<RoadGraph, RoadError> {
    let mut nodes: BTreeMap<NodeId, GeoPoint> = BTreeMap::new();
    let mut edges = Vec::new();
    for (line, r) in raw {
        let (first, last) = match (r.geometry.first(), r.geometry.last()) {
            (Some(f), Some(l)) if r.geometry.len() >= 2 => (*f, *l),
            _ => {
                return Err(RoadError::Parse {
                    line,
                    message: format!("edge `{}` needs a geometry with at least two vertices", r.id),
                })
            }
        };
        nodes.entry(r.u).or_insert(first);
        nodes.entry(r.v).or_insert(last);
        let length_m = r.length_m.unwrap_or_else(|| r.geometry.windows(2).map(|w| distance_m(w[0], w[1])).sum());
        let forward = RoadEdge {
            id: r.id.clone(),
            from: r.u,
            to: r.v,
            length_m,
            highway: r.highway.clone(),
            maxspeed_kph: r.maxspeed,
            travel_min: None,
            geometry: r.geometry.clone(),
        };
        let backward = || {
            let mut geometry = r.geometry.clone();
            geometry.reverse();
            RoadEdge { id: format!("{}:r", r.id), from: r.v, to: r.u, geometry, ..forward.clone() }
        };
        match r.oneway {
            Oneway::Forward => edges.push(forward),
            Oneway::Backward => edges.push(backward()),
            Oneway::Both => {
                let b = backward();
                edges.push(forward);
                edges.push(b);
            }
        }
    }
    let nodes = nodes.into_iter().map(|(id, location)| RoadNode { id, location }).collect();
    RoadGraph::new(nodes, edges)
}

#[derive(Debug, Deserialize)]
struct CsvEdge {
    edge_id: String,
    u: NodeId,
    v: NodeId,
    #[serde(default)]
    length_m: Option<f64>,
    highway: String,
    #[serde(default)]
    maxspeed_kph: Option<String>,
    #[serde(default)]
    oneway: Option<String>,
    wkt_geometry: String,
}

/// Reads `edge_id,u,v,length_m,highway,maxspeed_kph,oneway,wkt_geometry`.
/// Two-way segments become a pair of directed edges.
pub fn read_edges_csv(path: &Path) -> Result<RoadGraph, RoadError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut raw = Vec::new();
    for (i, rec) in reader.deserialize::<CsvEdge>().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let geometry = parse_wkt_linestring(&rec.wkt_geometry).map_err(|message| RoadError::Parse { line, message })?;
        raw.push((
            line,
            RawEdge {
                id: rec.edge_id,
                u: rec.u,
                v: rec.v,
                length_m: rec.length_m,
                highway: rec.highway,
                maxspeed: rec.maxspeed_kph.as_deref().and_then(parse_maxspeed),
                oneway: parse_oneway(rec.oneway.as_deref()),
                geometry,
            },
        ));
    }
    build_graph(raw)
}

/// Reads LineString features carrying the same properties as the CSV form.
pub fn read_edges_geojson(path: &Path) -> Result<RoadGraph, RoadError> {
    let text = std::fs::read_to_string(path)?;
    let fc: FeatureCollection =
        serde_json::from_str(&text).map_err(|e| RoadError::Parse { line: e.line(), message: e.to_string() })?;
    let mut raw = Vec::new();
    for (i, f) in fc.features.iter().enumerate() {
        let err = |message: String| RoadError::Parse { line: i, message };
        let coords = match &f.geometry {
            Some(Geometry::LineString { coordinates }) => coordinates,
            _ => return Err(err(format!("feature {i} is not a LineString"))),
        };
        let geometry = geojson::ring(coords).map_err(err)?;
        let node = |key: &str| {
            f.property_f64(key).map(|v| v as NodeId).ok_or_else(|| err(format!("feature {i} missing `{key}`")))
        };
        raw.push((
            i,
            RawEdge {
                id: f.property_str("edge_id").unwrap_or_else(|| i.to_string()),
                u: node("u")?,
                v: node("v")?,
                length_m: f.property_f64("length_m"),
                highway: f.property_str("highway").unwrap_or_else(|| "unclassified".into()),
                maxspeed: f.property_str("maxspeed_kph").as_deref().and_then(parse_maxspeed),
                oneway: parse_oneway(f.property_str("oneway").as_deref()),
                geometry,
            },
        ));
    }
    build_graph(raw)
}

/// Dispatches on extension: `.geojson`/`.json` or CSV.
pub fn read_roads(path: &Path) -> Result<RoadGraph, RoadError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("geojson" | "json") => read_edges_geojson(path),
        _ => read_edges_csv(path),
    }
}
