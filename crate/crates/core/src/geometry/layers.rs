use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{GeoError, GeoPolygon};
use crate::geojson::{self, FeatureCollection, Geometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    EvacOrder,
    EvacWarning,
    FirePerimeter,
}

impl LayerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::EvacOrder => "evac_order",
            LayerKind::EvacWarning => "evac_warning",
            LayerKind::FirePerimeter => "fire_perimeter",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "evac_order" => Some(LayerKind::EvacOrder),
            "evac_warning" => Some(LayerKind::EvacWarning),
            "fire_perimeter" => Some(LayerKind::FirePerimeter),
            _ => None,
        }
    }
}

/// One polygon of a zone or perimeter layer. `name` groups polygons
/// that belong to the same incident (e.g. both zones of one fire).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPolygon {
    pub kind: LayerKind,
    pub name: String,
    pub polygon: GeoPolygon,
}

pub fn read_polygon_layers(path: &Path) -> Result<Vec<LayerPolygon>, GeoError> {
    let text = std::fs::read_to_string(path)?;
    parse_polygon_layers(&text)
}

/// Parses a FeatureCollection of Polygon/MultiPolygon features carrying
/// `layer` and `name` properties. MultiPolygons expand to one entry per part.
pub fn parse_polygon_layers(text: &str) -> Result<Vec<LayerPolygon>, GeoError> {
    let fc: FeatureCollection = serde_json::from_str(text).map_err(|e| GeoError::GeoJson(e.to_string()))?;
    let mut out = Vec::new();
    for (i, feat) in fc.features.iter().enumerate() {
        let layer = feat
            .property_str("layer")
            .ok_or_else(|| GeoError::GeoJson(format!("feature {i} has no `layer` property")))?;
        let kind = LayerKind::parse(&layer)
            .ok_or_else(|| GeoError::GeoJson(format!("feature {i}: unknown layer `{layer}`")))?;
        let name = feat.property_str("name").unwrap_or_else(|| format!("{layer}-{i}"));
        let parts = match &feat.geometry {
            Some(Geometry::Polygon { coordinates }) => vec![coordinates],
            Some(Geometry::MultiPolygon { coordinates }) => coordinates.iter().collect(),
            _ => return Err(GeoError::GeoJson(format!("feature {i} (`{name}`) is not a Polygon or MultiPolygon"))),
        };
        for rings in parts {
            let mut rings = rings.iter().map(|r| geojson::ring(r));
            let exterior = rings
                .next()
                .ok_or_else(|| GeoError::GeoJson(format!("feature {i} has an empty polygon")))?
                .map_err(GeoError::GeoJson)?;
            let holes = rings.collect::<Result<Vec<_>, _>>().map_err(GeoError::GeoJson)?;
            let polygon = GeoPolygon::new(exterior, holes, kind.as_str())?;
            out.push(LayerPolygon { kind, name: name.clone(), polygon });
        }
    }
    Ok(out)
}

pub fn write_polygon_layers<'a>(layers: impl IntoIterator<Item = &'a LayerPolygon>) -> Value {
    let features = layers
        .into_iter()
        .map(|l| {
            let mut props = Map::new();
            props.insert("layer".into(), Value::from(l.kind.as_str()));
            props.insert("name".into(), Value::from(l.name.clone()));
            geojson::feature(geojson::polygon_geometry(&l.polygon), props)
        })
        .collect();
    geojson::feature_collection(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{"type":"FeatureCollection","features":[
      {"type":"Feature","properties":{"layer":"evac_order","name":"west"},
       "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
      {"type":"Feature","properties":{"layer":"fire_perimeter","name":"west"},
       "geometry":{"type":"MultiPolygon","coordinates":[[[[0,0],[0.2,0],[0.2,0.2],[0,0]]],[[[0.5,0.5],[0.6,0.5],[0.6,0.6],[0.5,0.5]]]]}}
    ]}"#;

    #[test]
    fn parses_layers_and_expands_multipolygons() {
        let layers = parse_polygon_layers(DOC).unwrap();
        assert_eq!(layers.len(), 3);
        assert_eq!(layers[0].kind, LayerKind::EvacOrder);
        assert_eq!(layers[2].kind, LayerKind::FirePerimeter);
        assert_eq!(layers[2].polygon.tag(), "fire_perimeter");
        let again = parse_polygon_layers(&write_polygon_layers(&layers).to_string()).unwrap();
        assert_eq!(again, layers);
    }

    #[test]
    fn rejects_unknown_layers_and_bad_rings() {
        let bad = DOC.replace("evac_order", "evac_maybe");
        assert!(parse_polygon_layers(&bad).is_err());
        let open = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"layer":"evac_order"},
          "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}}]}"#;
        assert!(matches!(parse_polygon_layers(open), Err(GeoError::InvalidPolygon { .. })));
    }
}
