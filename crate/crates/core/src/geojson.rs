//! Minimal GeoJSON reading and writing on top of serde.

use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::geometry::{GeoPoint, GeoPolygon};

#[derive(Debug, Deserialize)]
pub struct FeatureCollection {
    pub features: Vec<Feature>,
}

#[derive(Debug, Deserialize)]
pub struct Feature {
    pub geometry: Option<Geometry>,
    #[serde(default)]
    pub properties: Option<Map<String, Value>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type")]
pub enum Geometry {
    Point {
        coordinates: Vec<f64>,
    },
    LineString {
        coordinates: Vec<Vec<f64>>,
    },
    Polygon {
        coordinates: Vec<Vec<Vec<f64>>>,
    },
    MultiPolygon {
        coordinates: Vec<Vec<Vec<Vec<f64>>>>,
    },
    #[serde(other)]
    Unsupported,
}

impl Feature {
    pub fn property_str(&self, key: &str) -> Option<String> {
        match self.properties.as_ref()?.get(key)? {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            Value::Bool(b) => Some(b.to_string()),
            _ => None,
        }
    }

    pub fn property_f64(&self, key: &str) -> Option<f64> {
        match self.properties.as_ref()?.get(key)? {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        }
    }
}

pub fn position(coords: &[f64]) -> Result<GeoPoint, String> {
    match coords {
        [lon, lat, ..] => GeoPoint::new(*lon, *lat).map_err(|e| e.to_string()),
        _ => Err(format!("position needs two coordinates, got {}", coords.len())),
    }
}

pub fn ring(coords: &[Vec<f64>]) -> Result<Vec<GeoPoint>, String> {
    coords.iter().map(|c| position(c)).collect()
}

pub fn point_geometry(p: GeoPoint) -> Value {
    json!({ "type": "Point", "coordinates": [p.lon, p.lat] })
}

pub fn polygon_geometry(poly: &GeoPolygon) -> Value {
    let ring = |r: &[GeoPoint]| r.iter().map(|p| json!([p.lon, p.lat])).collect::<Vec<_>>();
    let mut rings = vec![Value::Array(ring(poly.exterior()))];
    rings.extend(poly.holes().iter().map(|h| Value::Array(ring(h))));
    json!({ "type": "Polygon", "coordinates": rings })
}

pub fn feature(geometry: Value, properties: Map<String, Value>) -> Value {
    json!({ "type": "Feature", "geometry": geometry, "properties": properties })
}

pub fn feature_collection(features: Vec<Value>) -> Value {
    json!({ "type": "FeatureCollection", "features": features })
}
