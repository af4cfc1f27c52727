use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{AtStage, Inputs, ScenarioError, ScenarioResult, Stage};
use crate::access::AccessResult;
use crate::demand::{effective_capacity, DemandCell, Shelter};
use crate::geojson::{feature, feature_collection, point_geometry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub cell_id: String,
    pub score: f64,
    #[serde(default)]
    pub class: Option<String>,
}

/// Writes report.json, scores.csv, cells.geojson and shelters.geojson into
/// `dir`, plus nearest.csv when the result carries nearest-shelter times.
pub fn export(result: &ScenarioResult, inputs: &Inputs, dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).at(Stage::Export)?;

    let mut report = serde_json::to_string_pretty(result).at(Stage::Export)?;
    report.push('\n');
    fs::write(dir.join("report.json"), report).at(Stage::Export)?;

    let mut w = csv::Writer::from_path(dir.join("scores.csv")).at(Stage::Export)?;
    w.write_record(["cell_id", "score", "class"]).at(Stage::Export)?;
    for r in &result.access {
        let class = r.class_label.map(|c| c.name()).unwrap_or("");
        w.write_record([r.cell_id.as_str(), &r.score.to_string(), class]).at(Stage::Export)?;
    }
    w.flush().at(Stage::Export)?;

    if let Some(nearest) = &result.nearest_minutes {
        let mut w = csv::Writer::from_path(dir.join("nearest.csv")).at(Stage::Export)?;
        w.write_record(["cell_id", "minutes"]).at(Stage::Export)?;
        for (id, t) in nearest {
            w.write_record([id.as_str(), &t.to_string()]).at(Stage::Export)?;
        }
        w.flush().at(Stage::Export)?;
    }

    let cells = cells_geojson(&inputs.cells, &result.access, result.nearest_minutes.as_ref());
    write_json(&dir.join("cells.geojson"), &cells)?;
    let selected: BTreeSet<&str> = result.supply.iter().map(|s| s.id.as_str()).collect();
    write_json(&dir.join("shelters.geojson"), &shelters_geojson(&inputs.shelters, Some(&selected)))?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<(), ScenarioError> {
    let mut text = serde_json::to_string(value).at(Stage::Export)?;
    text.push('\n');
    fs::write(path, text).at(Stage::Export)
}

/// Reads a `cell_id,score[,class]` table as written by [`export`].
pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRow>, csv::Error> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize::<ScoreRow>()
        .map(|r| r.map(|row| ScoreRow { class: row.class.filter(|c| !c.is_empty()), ..row }))
        .collect()
}

/// Cell centroids with their tags, plus score and class where scored.
pub fn cells_geojson(cells: &[DemandCell], access: &[AccessResult], nearest: Option<&BTreeMap<String, f64>>) -> Value {
    let by_id: BTreeMap<&str, &AccessResult> = access.iter().map(|r| (r.cell_id.as_str(), r)).collect();
    let features = cells
        .iter()
        .map(|c| {
            let mut props = Map::new();
            props.insert("id".into(), json!(c.id));
            props.insert("population".into(), json!(c.population));
            props.insert("zone_tag".into(), json!(c.zone_tag));
            props.insert("zone".into(), json!(c.zone_name));
            props.insert("in_fire".into(), json!(c.in_fire));
            if let Some(r) = by_id.get(c.id.as_str()) {
                props.insert("score".into(), json!(r.score));
                props.insert("class".into(), json!(r.class_label));
            }
            if let Some(t) = nearest.and_then(|n| n.get(&c.id)) {
                props.insert("nearest_minutes".into(), json!(t));
            }
            feature(point_geometry(c.centroid), props)
        })
        .collect();
    feature_collection(features)
}

/// Shelter points with capacity, status and effective capacity. When
/// `selected` is given each feature also carries a `selected` flag.
pub fn shelters_geojson(shelters: &[Shelter], selected: Option<&BTreeSet<&str>>) -> Value {
    let features = shelters
        .iter()
        .map(|s| {
            let mut props = Map::new();
            props.insert("id".into(), json!(s.id));
            props.insert("name".into(), json!(s.name));
            props.insert("status".into(), json!(s.status));
            props.insert("capacity".into(), json!(s.capacity));
            props.insert("effective_capacity".into(), json!(effective_capacity(s)));
            props.insert("occupied".into(), json!(s.occupied));
            if let Some(sel) = selected {
                props.insert("selected".into(), json!(sel.contains(s.id.as_str())));
            }
            feature(point_geometry(s.location), props)
        })
        .collect();
    feature_collection(features)
}
