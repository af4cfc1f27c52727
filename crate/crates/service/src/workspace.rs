use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use shelter_access::access::{AccessResult, ClassScheme, DecayParams};
use shelter_access::demand::{demand_summary, DemandSummary};
use shelter_access::equity::LorenzPoint;
use shelter_access::geometry::write_polygon_layers;
use shelter_access::placement::{PlacementError, PlacementParams, PlacementResult};
use shelter_access::scenario::{
    cells_geojson, run_prepared, score, shelters_geojson, Case, Inputs, LoadedConfig, Pipeline, ScenarioError,
    ScenarioResult, StageError,
};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),
    #[error("unknown shelter ids: {}", .0.join(", "))]
    UnknownShelters(Vec<String>),
    #[error("{0}")]
    Invalid(String),
    #[error("placement infeasible: short by {shortfall} persons{}", zone_suffix(.zone))]
    Infeasible { zone: Option<String>, shortfall: f64 },
    #[error("{0}")]
    Scenario(ScenarioError),
}

fn zone_suffix(zone: &Option<String>) -> String {
    zone.as_ref().map(|z| format!(" in zone {z}")).unwrap_or_default()
}

impl From<ScenarioError> for ServiceError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Stage {
                source: StageError::Placement(PlacementError::Infeasible { zone, shortfall }),
                ..
            } => ServiceError::Infeasible { zone, shortfall },
            ScenarioError::Stage { source: StageError::Placement(other), .. } => {
                ServiceError::Invalid(other.to_string())
            }
            other => ServiceError::Scenario(other),
        }
    }
}

/// One scenario with its prepared pipeline and base run.
#[derive(Debug)]
pub struct ScenarioEntry {
    pub pipeline: Pipeline,
    pub base: ScenarioResult,
    /// Legend maximum fixed by the config, if any.
    pub reference_max: Option<f64>,
}

impl ScenarioEntry {
    pub fn id(&self) -> &str {
        &self.pipeline.config.id
    }

    pub fn case(&self) -> Case {
        self.pipeline.case()
    }

    pub fn inputs(&self) -> &Inputs {
        &self.pipeline.inputs
    }

    fn base_supply(&self) -> BTreeSet<String> {
        self.base.supply.iter().map(|s| s.id.clone()).collect()
    }
}

/// Every scenario config found in a directory, loaded and run once.
#[derive(Debug)]
pub struct Workspace {
    pub root: PathBuf,
    pub scenarios: BTreeMap<String, ScenarioEntry>,
    pub hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeRequest {
    #[serde(default)]
    pub scenario: Option<String>,
    /// Shelter ids added to the scenario's supply.
    #[serde(default)]
    pub enable: Vec<String>,
    /// Shelter ids removed from the scenario's supply.
    #[serde(default)]
    pub disable: Vec<String>,
    #[serde(default)]
    pub congestion: Option<bool>,
    #[serde(default)]
    pub decay: Option<DecayParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeResponse {
    pub scenario: String,
    pub congestion: bool,
    pub decay: DecayParams,
    pub supply: Vec<String>,
    pub scores: Vec<AccessResult>,
    pub gini: Option<f64>,
    pub gini_note: Option<String>,
    pub class_max: Option<f64>,
    pub class_breaks: Option<[f64; 6]>,
    pub lorenz: Vec<LorenzPoint>,
    pub demand: DemandSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementMethod {
    Capacity,
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementRequest {
    #[serde(default)]
    pub scenario: Option<String>,
    pub method: PlacementMethod,
    #[serde(default)]
    pub k: Option<f64>,
    /// Meters.
    #[serde(default)]
    pub ring_step: Option<f64>,
    #[serde(default)]
    pub congestion: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResponse {
    pub placement: PlacementResult,
    pub access: ComputeResponse,
}

pub const LAYERS: [&str; 4] = ["zones", "grid", "shelters", "perimeters"];

fn scenario_files(root: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    let dir = if root.join("scenarios").is_dir() { root.join("scenarios") } else { root.to_path_buf() };
    let entries = std::fs::read_dir(&dir)
        .map_err(|e| ScenarioError::Config(format!("cannot read workspace {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(ScenarioError::Config(format!("no scenario .toml files in {}", dir.display())));
    }
    Ok(files)
}

impl Workspace {
    pub fn load(root: &Path) -> Result<Self, ScenarioError> {
        let mut shared: BTreeMap<String, Arc<Inputs>> = BTreeMap::new();
        let mut scenarios = BTreeMap::new();
        let mut digest = Sha256::new();
        for file in scenario_files(root)? {
            let config = LoadedConfig::from_file(&file)?;
            if scenarios.contains_key(&config.id) {
                return Err(ScenarioError::Config(format!("scenario id {} is used twice", config.id)));
            }
            let key = format!("{:?}", config.inputs());
            let inputs = match shared.get(&key) {
                Some(i) => Arc::clone(i),
                None => {
                    let i = Arc::new(Inputs::load(&config.inputs())?);
                    shared.insert(key, Arc::clone(&i));
                    i
                }
            };
            let pipeline = Pipeline::new(&config, inputs)?;
            let base = run_prepared(&pipeline)?;
            let class = &config.config.classification;
            let reference_max =
                (class.reference_max.is_some() || class.reference.is_some()).then_some(base.class_max).flatten();
            digest.update(format!("{}\n{}\n", config.id, config.sha256));
            for (role, h) in &pipeline.inputs.hashes {
                digest.update(format!("{role}={h}\n"));
            }
            scenarios.insert(config.id.clone(), ScenarioEntry { pipeline, base, reference_max });
        }
        let hash = digest.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(Workspace { root: root.to_path_buf(), scenarios, hash })
    }

    /// The named scenario, or the first one by id.
    pub fn scenario(&self, id: Option<&str>) -> Result<&ScenarioEntry, ServiceError> {
        match id {
            Some(id) => self.scenarios.get(id).ok_or_else(|| ServiceError::NotFound(format!("unknown scenario {id}"))),
            None => Ok(self.scenarios.values().next().expect("workspace has scenarios")),
        }
    }

    /// The named scenario, or the first placement scenario, or the first one.
    fn placement_scenario(&self, id: Option<&str>) -> Result<&ScenarioEntry, ServiceError> {
        match id {
            Some(_) => self.scenario(id),
            None => Ok(self
                .scenarios
                .values()
                .find(|s| s.case().places())
                .unwrap_or_else(|| self.scenarios.values().next().expect("workspace has scenarios"))),
        }
    }

    pub fn layer(&self, name: &str, scenario: Option<&str>) -> Result<Value, ServiceError> {
        let entry = self.scenario(scenario)?;
        let inputs = entry.inputs();
        Ok(match name {
            "zones" => write_polygon_layers(inputs.zones.zones()),
            "perimeters" => write_polygon_layers(inputs.zones.perimeter_layers()),
            "grid" => cells_geojson(&inputs.cells, &entry.base.access, entry.base.nearest_minutes.as_ref()),
            "shelters" => {
                let selected: BTreeSet<&str> = entry.base.supply.iter().map(|s| s.id.as_str()).collect();
                shelters_geojson(&inputs.shelters, Some(&selected))
            }
            other => {
                return Err(ServiceError::NotFound(format!(
                    "unknown layer {other}; expected one of {}",
                    LAYERS.join(", ")
                )))
            }
        })
    }

    /// Fills in the scenario id and sorts the toggle lists so equal
    /// requests compare equal.
    pub fn canonical(&self, req: &ComputeRequest) -> Result<ComputeRequest, ServiceError> {
        let entry = self.scenario(req.scenario.as_deref())?;
        let sorted = |v: &[String]| v.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect::<Vec<_>>();
        Ok(ComputeRequest {
            scenario: Some(entry.id().to_string()),
            enable: sorted(&req.enable),
            disable: sorted(&req.disable),
            congestion: Some(req.congestion.unwrap_or(entry.case().congested())),
            decay: Some(req.decay.unwrap_or(entry.pipeline.config.config.decay)),
        })
    }

    pub fn compute(&self, req: &ComputeRequest) -> Result<ComputeResponse, ServiceError> {
        let entry = self.scenario(req.scenario.as_deref())?;
        let inputs = entry.inputs();
        let mut unknown: Vec<String> =
            req.enable.iter().chain(&req.disable).filter(|id| inputs.shelter(id).is_none()).cloned().collect();
        if !unknown.is_empty() {
            unknown.sort();
            unknown.dedup();
            return Err(ServiceError::UnknownShelters(unknown));
        }
        if let Some(both) = req.enable.iter().find(|id| req.disable.contains(id)) {
            return Err(ServiceError::Invalid(format!("shelter {both} is both enabled and disabled")));
        }
        let mut ids = entry.base_supply();
        ids.extend(req.enable.iter().cloned());
        for id in &req.disable {
            ids.remove(id);
        }
        self.access_for(entry, &ids, req.congestion, req.decay)
    }

    fn access_for(
        &self,
        entry: &ScenarioEntry,
        ids: &BTreeSet<String>,
        congestion: Option<bool>,
        decay: Option<DecayParams>,
    ) -> Result<ComputeResponse, ServiceError> {
        let pipeline = &entry.pipeline;
        let congestion = congestion.unwrap_or(entry.case().congested());
        let decay = decay.unwrap_or(pipeline.config.config.decay);
        decay.validate().map_err(|e| ServiceError::Invalid(e.to_string()))?;
        let supply = pipeline.supply_from_ids(ids);
        let matrix = pipeline.travel_matrix(congestion, &supply, decay.t0)?;
        let scheme = ClassScheme { reference_max: entry.reference_max };
        let scored = score(&pipeline.demand, &supply, &matrix, &decay, &scheme)?;
        Ok(ComputeResponse {
            scenario: entry.id().to_string(),
            congestion,
            decay,
            supply: supply.iter().map(|s| s.id.clone()).collect(),
            class_breaks: scored.class_max.map(ClassScheme::breakpoints),
            scores: scored.access,
            gini: scored.gini,
            gini_note: scored.gini_note,
            class_max: scored.class_max,
            lorenz: scored.lorenz,
            demand: demand_summary(&pipeline.demand, &supply),
        })
    }

    pub fn canonical_placement(&self, req: &PlacementRequest) -> Result<PlacementRequest, ServiceError> {
        let entry = self.placement_scenario(req.scenario.as_deref())?;
        let params = placement_params(entry, req)?;
        Ok(PlacementRequest {
            scenario: Some(entry.id().to_string()),
            method: req.method,
            k: Some(params.k),
            ring_step: Some(params.ring_step_m),
            congestion: Some(req.congestion.unwrap_or(true)),
        })
    }

    /// Runs a placement method and then accessibility on its selection;
    /// congestion defaults on, as in the placement cases.
    pub fn place(&self, req: &PlacementRequest) -> Result<PlacementResponse, ServiceError> {
        let entry = self.placement_scenario(req.scenario.as_deref())?;
        let params = placement_params(entry, req)?;
        let case = match req.method {
            PlacementMethod::Capacity => Case::Case4Capacity,
            PlacementMethod::Distance => Case::Case4Distance,
        };
        let placement = entry.pipeline.place(case, &params)?;
        let ids = placement.selected.iter().cloned().collect();
        let access = self.access_for(entry, &ids, Some(req.congestion.unwrap_or(true)), None)?;
        Ok(PlacementResponse { placement, access })
    }
}

fn placement_params(entry: &ScenarioEntry, req: &PlacementRequest) -> Result<PlacementParams, ServiceError> {
    let mut params = entry.pipeline.config.config.placement.unwrap_or_default();
    if let Some(k) = req.k {
        params.k = k;
    }
    if let Some(step) = req.ring_step {
        params.ring_step_m = step;
    }
    params.validate().map_err(|e| ServiceError::Invalid(e.to_string()))?;
    Ok(params)
}
