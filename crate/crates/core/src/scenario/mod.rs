//! End-to-end runs of the four evacuation cases from a TOML config.

mod config;
mod export;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    Case, ClassificationConfig, CongestionConfig, InputPaths, LoadedConfig, NetworkConfig, ScenarioConfig,
};
pub use export::{cells_geojson, export, read_scores_csv, shelters_geojson, ScoreRow};

use crate::access::{
    classify, e2sfca, nearest_shelter_times, AccessClass, AccessError, AccessResult, ClassScheme, DecayParams, Demand,
    Supply, SupplyRatio,
};
use crate::demand::{
    demand_summary, effective_capacity, filter_demand, order_and_warning, read_population_csv, read_shelters_csv,
    tag_cells, DemandCell, DemandError, DemandSummary, Shelter, ShelterStatus, ZoneSet,
};
use crate::equity::{gini_from_curve, lorenz, EquityError, LorenzPoint};
use crate::geometry::{read_polygon_layers, GeoError};
use crate::placement::{place_capacity_based, place_distance_based, PlacementError, PlacementResult, ZoneDemand};
use crate::road::{
    apply_closures, apply_congestion, derive_times, impute_speeds, read_roads, travel_matrix, CongestionOverlay,
    RoadError, RoadGraph, TravelMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Inputs,
    Network,
    Demand,
    Placement,
    TravelMatrix,
    Accessibility,
    Reference,
    Export,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Inputs => "loading inputs",
            Stage::Network => "building the road network",
            Stage::Demand => "selecting demand",
            Stage::Placement => "placing shelters",
            Stage::TravelMatrix => "computing travel times",
            Stage::Accessibility => "computing accessibility",
            Stage::Reference => "running the reference scenario",
            Stage::Export => "exporting results",
        })
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Geometry(#[from] GeoError),
    #[error(transparent)]
    Road(#[from] RoadError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Access(#[from] AccessError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Other(String),
    #[error(transparent)]
    Nested(Box<ScenarioError>),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageError,
    },
}

impl ScenarioError {
    pub fn is_config(&self) -> bool {
        match self {
            ScenarioError::Config(_) => true,
            ScenarioError::Stage { source: StageError::Nested(inner), .. } => inner.is_config(),
            _ => false,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        match self {
            ScenarioError::Stage { source: StageError::Placement(PlacementError::Infeasible { .. }), .. } => true,
            ScenarioError::Stage { source: StageError::Nested(inner), .. } => inner.is_infeasible(),
            _ => false,
        }
    }
}

pub(crate) trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, ScenarioError>;
}

impl<T, E: Into<StageError>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, ScenarioError> {
        self.map_err(|e| ScenarioError::Stage { stage, source: e.into() })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(path: &Path) -> Result<String, ScenarioError> {
    Ok(sha256_hex(&std::fs::read(path).at(Stage::Inputs)?))
}

/// Parsed inputs shared by every case that points at the same files.
#[derive(Debug, Clone)]
pub struct Inputs {
    /// Speeds imputed and travel times derived.
    pub graph: RoadGraph,
    /// Tagged with zone, zone name and fire flag.
    pub cells: Vec<DemandCell>,
    /// Open shelters and candidates in file order.
    pub shelters: Vec<Shelter>,
    pub zones: ZoneSet,
    /// Role name to sha256 of the file bytes.
    pub hashes: BTreeMap<String, String>,
}

impl Inputs {
    pub fn load(paths: &InputPaths) -> Result<Self, ScenarioError> {
        let mut hashes = BTreeMap::new();
        let mut files = vec![
            ("roads", &paths.roads),
            ("grid", &paths.grid),
            ("shelters", &paths.shelters),
            ("zones", &paths.zones),
        ];
        if let Some(p) = &paths.perimeters {
            files.push(("perimeters", p));
        }
        if let Some(p) = &paths.candidates {
            files.push(("candidates", p));
        }
        for (role, path) in files {
            hashes.insert(role.to_string(), hash_file(path)?);
        }

        let raw = read_roads(&paths.roads).at(Stage::Inputs)?;
        let graph = derive_times(&impute_speeds(&raw).at(Stage::Network)?).at(Stage::Network)?;

        let mut layers = read_polygon_layers(&paths.zones).at(Stage::Inputs)?;
        if let Some(p) = &paths.perimeters {
            layers.extend(read_polygon_layers(p).at(Stage::Inputs)?);
        }
        let zones = ZoneSet::new(layers);

        let mut shelters = read_shelters_csv(&paths.shelters).at(Stage::Inputs)?;
        if let Some(p) = &paths.candidates {
            let mut ids: BTreeSet<String> = shelters.iter().map(|s| s.id.clone()).collect();
            for s in read_shelters_csv(p).at(Stage::Inputs)? {
                if !ids.insert(s.id.clone()) {
                    return Err(StageError::Other(format!("shelter id {} appears in both catalogs", s.id)))
                        .at(Stage::Inputs);
                }
                shelters.push(Shelter { status: ShelterStatus::Candidate, ..s });
            }
        }

        let cells = tag_cells(&read_population_csv(&paths.grid).at(Stage::Inputs)?, &zones);
        Ok(Inputs { graph, cells, shelters, zones, hashes })
    }

    pub fn open_shelters(&self) -> Vec<Shelter> {
        self.shelters.iter().filter(|s| s.status == ShelterStatus::Open).cloned().collect()
    }

    pub fn candidates(&self) -> Vec<Shelter> {
        self.shelters.iter().filter(|s| s.status == ShelterStatus::Candidate).cloned().collect()
    }

    pub fn shelter(&self, id: &str) -> Option<&Shelter> {
        self.shelters.iter().find(|s| s.id == id)
    }
}

/// Case-specific network and demand, prepared once per scenario.
#[derive(Debug)]
pub struct Pipeline {
    pub config: LoadedConfig,
    pub inputs: Arc<Inputs>,
    pub demand: Vec<DemandCell>,
    network: RoadGraph,
    congested: OnceLock<Result<RoadGraph, String>>,
}

impl Pipeline {
    pub fn new(config: &LoadedConfig, inputs: Arc<Inputs>) -> Result<Self, ScenarioError> {
        let case = config.config.case;
        let network = if case.fire_closures() {
            apply_closures(&inputs.graph, inputs.zones.perimeters())
        } else {
            inputs.graph.clone()
        };
        let demand = filter_demand(&inputs.cells, &inputs.zones, &order_and_warning(), case.fire_closures());
        if demand.is_empty() {
            return Err(StageError::Other("no populated cells in the evacuation zones".into())).at(Stage::Demand);
        }
        Ok(Pipeline { config: config.clone(), inputs, demand, network, congested: OnceLock::new() })
    }

    pub fn case(&self) -> Case {
        self.config.config.case
    }

    /// The case network, optionally with the congestion cap applied. Falls
    /// back to default overlay settings when the config has none.
    pub fn graph(&self, congestion: bool) -> Result<&RoadGraph, ScenarioError> {
        if !congestion {
            return Ok(&self.network);
        }
        let built = self.congested.get_or_init(|| {
            let c = self.config.config.congestion.unwrap_or_default();
            CongestionOverlay::new(self.inputs.zones.zone_polygons(), c.buffer_m, c.speed_cap_kph)
                .and_then(|o| apply_congestion(&self.network, &o))
                .map_err(|e| e.to_string())
        });
        built.as_ref().map_err(|e| ScenarioError::Stage { stage: Stage::Network, source: StageError::Other(e.clone()) })
    }

    pub fn travel_matrix(
        &self,
        congestion: bool,
        shelters: &[Shelter],
        cutoff: f64,
    ) -> Result<TravelMatrix, ScenarioError> {
        let graph = self.graph(congestion)?;
        let origins: Vec<_> = self.demand.iter().map(|c| (c.id.clone(), c.centroid)).collect();
        let dests: Vec<_> = shelters.iter().map(|s| (s.id.clone(), s.location)).collect();
        travel_matrix(graph, &origins, &dests, cutoff, self.config.config.network.snap_radius_m).at(Stage::TravelMatrix)
    }

    pub fn demand_total(&self) -> f64 {
        self.demand.iter().map(|c| c.population).fold(0.0, |a, b| a + b)
    }

    /// Population per named zone, in zone order, skipping empty zones.
    pub fn zone_demands(&self) -> Vec<ZoneDemand> {
        self.inputs
            .zones
            .zone_names()
            .into_iter()
            .map(|zone| {
                let demand = self
                    .demand
                    .iter()
                    .filter(|c| c.zone_name.as_deref() == Some(zone.as_str()))
                    .map(|c| c.population)
                    .sum();
                ZoneDemand { zone, demand }
            })
            .filter(|z| z.demand > 0.0)
            .collect()
    }

    pub fn place(
        &self,
        case: Case,
        params: &crate::placement::PlacementParams,
    ) -> Result<PlacementResult, ScenarioError> {
        let open = self.inputs.open_shelters();
        let candidates = self.inputs.candidates();
        let zones = &self.inputs.zones;
        match case {
            Case::Case4Distance => place_distance_based(&candidates, &open, zones, &self.zone_demands(), params),
            _ => place_capacity_based(&candidates, &open, zones, self.demand_total(), params),
        }
        .at(Stage::Placement)
    }

    /// Shelters named in `ids`, marked open, in catalog order.
    pub fn supply_from_ids(&self, ids: &BTreeSet<String>) -> Vec<Shelter> {
        self.inputs
            .shelters
            .iter()
            .filter(|s| ids.contains(&s.id))
            .map(|s| Shelter { status: ShelterStatus::Open, ..s.clone() })
            .collect()
    }
}

/// Scores, classes and equity for one supply set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub ratios: Vec<SupplyRatio>,
    pub access: Vec<AccessResult>,
    pub class_max: Option<f64>,
    pub gini: Option<f64>,
    pub gini_note: Option<String>,
    pub lorenz: Vec<LorenzPoint>,
}

pub fn score(
    demand: &[DemandCell],
    supply: &[Shelter],
    matrix: &TravelMatrix,
    decay: &DecayParams,
    scheme: &ClassScheme,
) -> Result<Scored, ScenarioError> {
    let s: Vec<Supply> =
        supply.iter().map(|s| Supply { id: s.id.clone(), capacity: effective_capacity(s) as f64 }).collect();
    let d: Vec<Demand> = demand.iter().map(|c| Demand { id: c.id.clone(), population: c.population }).collect();
    let (ratios, raw) = e2sfca(&s, &d, matrix, decay).at(Stage::Accessibility)?;
    let (access, class_max) = match classify(&raw, scheme) {
        Ok(labelled) => {
            let max = scheme.reference_max.unwrap_or_else(|| raw.iter().map(|r| r.score).fold(0.0, f64::max));
            (labelled, Some(max))
        }
        // every score is zero, so every cell has no access whatever the breaks
        Err(AccessError::Classification) => {
            (raw.into_iter().map(|r| AccessResult { class_label: Some(AccessClass::NoAccess), ..r }).collect(), None)
        }
        Err(e) => return Err(e).at(Stage::Accessibility),
    };
    let scores: Vec<f64> = access.iter().map(|r| r.score).collect();
    let pops: Vec<f64> = demand.iter().map(|c| c.population).collect();
    let (gini, gini_note, curve) = match lorenz(&scores, &pops) {
        Ok(curve) => (Some(gini_from_curve(&curve)), None, curve),
        Err(e @ (EquityError::NoAccessibility | EquityError::NoPopulation)) => (None, Some(e.to_string()), Vec::new()),
        Err(e) => return Err(StageError::Other(e.to_string())).at(Stage::Accessibility),
    };
    Ok(Scored { ratios, access, class_max, gini, gini_note, lorenz: curve })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyEntry {
    pub id: String,
    pub capacity: u32,
    pub preexisting: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub nodes: usize,
    pub edges: usize,
    pub closed_edges: usize,
    pub capped_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub inputs_sha256: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub case: Case,
    pub decay: DecayParams,
    pub demand: DemandSummary,
    pub supply: Vec<SupplyEntry>,
    pub network: NetworkSummary,
    /// Minutes to the nearest open shelter; case 1 only.
    pub nearest_minutes: Option<BTreeMap<String, f64>>,
    pub placement: Option<PlacementResult>,
    /// Empty for case 1.
    pub ratios: Vec<SupplyRatio>,
    pub access: Vec<AccessResult>,
    pub class_max: Option<f64>,
    pub class_breaks: Option<[f64; 6]>,
    pub gini: Option<f64>,
    pub gini_note: Option<String>,
    pub lorenz: Vec<LorenzPoint>,
    pub provenance: Provenance,
}

/// Loads the config and its inputs, then runs it.
pub fn run_file(path: &Path) -> Result<(ScenarioResult, Arc<Inputs>), ScenarioError> {
    let config = LoadedConfig::from_file(path)?;
    let inputs = Arc::new(Inputs::load(&config.inputs())?);
    let result = run_inner(&config, &inputs, &mut vec![canonical(path)])?;
    Ok((result, inputs))
}

pub fn run(config: &LoadedConfig, inputs: &Arc<Inputs>) -> Result<ScenarioResult, ScenarioError> {
    let mut chain = config.path.iter().map(|p| canonical(p)).collect();
    run_inner(config, inputs, &mut chain)
}

/// Runs an already prepared pipeline, reusing its cached networks.
pub fn run_prepared(pipeline: &Pipeline) -> Result<ScenarioResult, ScenarioError> {
    let mut chain = pipeline.config.path.iter().map(|p| canonical(p)).collect();
    run_pipeline(pipeline, &mut chain)
}

fn canonical(p: &Path) -> PathBuf {
    p.canonicalize().unwrap_or_else(|_| p.to_path_buf())
}

fn reference_max(config: &LoadedConfig, chain: &mut Vec<PathBuf>) -> Result<Option<f64>, ScenarioError> {
    let class = &config.config.classification;
    if let Some(m) = class.reference_max {
        return Ok(Some(m));
    }
    let Some(rel) = &class.reference else {
        return Ok(None);
    };
    let path = canonical(&config.base_dir.join(rel));
    if chain.contains(&path) {
        return Err(ScenarioError::Config(format!("classification reference cycle through {}", path.display())));
    }
    let nested =
        |e: ScenarioError| ScenarioError::Stage { stage: Stage::Reference, source: StageError::Nested(Box::new(e)) };
    let other = LoadedConfig::from_file(&path).map_err(nested)?;
    let inputs = Arc::new(Inputs::load(&other.inputs()).map_err(nested)?);
    chain.push(path);
    let result = run_inner(&other, &inputs, chain).map_err(nested)?;
    chain.pop();
    Ok(result.class_max.or_else(|| {
        let max = result.access.iter().map(|r| r.score).fold(0.0, f64::max);
        (max > 0.0).then_some(max)
    }))
}

fn run_inner(
    config: &LoadedConfig,
    inputs: &Arc<Inputs>,
    chain: &mut Vec<PathBuf>,
) -> Result<ScenarioResult, ScenarioError> {
    let pipeline = Pipeline::new(config, Arc::clone(inputs))?;
    run_pipeline(&pipeline, chain)
}

fn run_pipeline(pipeline: &Pipeline, chain: &mut Vec<PathBuf>) -> Result<ScenarioResult, ScenarioError> {
    let config = &pipeline.config;
    let inputs = &*pipeline.inputs;
    let cfg = &config.config;
    let case = cfg.case;
    let graph = pipeline.graph(case.congested())?;

    let placement = match (case.places(), &cfg.placement) {
        (true, Some(params)) => Some(pipeline.place(case, params)?),
        _ => None,
    };
    let supply = match &placement {
        Some(p) => pipeline.supply_from_ids(&p.selected.iter().cloned().collect()),
        None => inputs.open_shelters(),
    };
    let preexisting: BTreeSet<&str> =
        inputs.shelters.iter().filter(|s| s.status == ShelterStatus::Open).map(|s| s.id.as_str()).collect();

    let network = NetworkSummary {
        nodes: graph.nodes().len(),
        edges: graph.edges().len(),
        closed_edges: inputs.graph.edges().len() - graph.edges().len(),
        capped_edges: if case.congested() {
            pipeline
                .graph(false)?
                .edges()
                .iter()
                .zip(graph.edges())
                .filter(|(a, b)| a.travel_min != b.travel_min)
                .count()
        } else {
            0
        },
    };

    let mut result = ScenarioResult {
        scenario: config.id.clone(),
        case,
        decay: cfg.decay,
        demand: demand_summary(&pipeline.demand, &supply),
        supply: supply
            .iter()
            .map(|s| SupplyEntry {
                id: s.id.clone(),
                capacity: effective_capacity(s),
                preexisting: preexisting.contains(s.id.as_str()),
            })
            .collect(),
        network,
        nearest_minutes: None,
        placement,
        ratios: Vec::new(),
        access: Vec::new(),
        class_max: None,
        class_breaks: None,
        gini: None,
        gini_note: None,
        lorenz: Vec::new(),
        provenance: Provenance { config_sha256: config.sha256.clone(), inputs_sha256: inputs.hashes.clone() },
    };

    if case == Case::Case1 {
        let nearest = nearest_shelter_times(&pipeline.demand, &supply, graph, cfg.network.snap_radius_m)
            .at(Stage::TravelMatrix)?;
        result.nearest_minutes = Some(nearest);
        return Ok(result);
    }

    let scheme = ClassScheme { reference_max: reference_max(config, chain)? };
    let matrix = pipeline.travel_matrix(case.congested(), &supply, cfg.decay.t0)?;
    let scored = score(&pipeline.demand, &supply, &matrix, &cfg.decay, &scheme)?;
    result.class_breaks = scored.class_max.map(ClassScheme::breakpoints);
    result.ratios = scored.ratios;
    result.access = scored.access;
    result.class_max = scored.class_max;
    result.gini = scored.gini;
    result.gini_note = scored.gini_note;
    result.lorenz = scored.lorenz;
    Ok(result)
}
