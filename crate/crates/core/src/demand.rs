//! Population grid and shelter catalogs: capacity estimation, zone
//! tagging, demand filtering and supply/demand totals.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_in_polygon, GeoError, GeoPoint, GeoPolygon, LayerKind, LayerPolygon};

/// Share of gross floor area usable for sleeping space.
pub const USABLE_SHARE: f64 = 0.70;
/// Floor area allotted per sheltered person.
pub const SQFT_PER_PERSON: f64 = 100.0;
pub const SQFT_PER_SQM: f64 = 10.76391;

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{file} line {line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeoError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneTag {
    Order,
    Warning,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandCell {
    pub id: String,
    pub centroid: GeoPoint,
    pub population: f64,
    pub zone_tag: ZoneTag,
    pub in_fire: bool,
    /// Name of the zone polygon holding the centroid, if any.
    pub zone_name: Option<String>,
}

impl DemandCell {
    pub fn new(id: impl Into<String>, centroid: GeoPoint, population: f64) -> Result<Self, DemandError> {
        let id = id.into();
        if !(population >= 0.0) || !population.is_finite() {
            return Err(DemandError::InvalidInput(format!("cell {id}: population must be >= 0, got {population}")));
        }
        Ok(DemandCell { id, centroid, population, zone_tag: ZoneTag::None, in_fire: false, zone_name: None })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AreaUnit {
    Sqft,
    Sqm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorArea {
    pub value: f64,
    pub unit: AreaUnit,
}

impl FloorArea {
    pub fn sqft(value: f64) -> Self {
        FloorArea { value, unit: AreaUnit::Sqft }
    }

    pub fn sqm(value: f64) -> Self {
        FloorArea { value, unit: AreaUnit::Sqm }
    }

    pub fn in_sqft(&self) -> f64 {
        match self.unit {
            AreaUnit::Sqft => self.value,
            AreaUnit::Sqm => self.value * SQFT_PER_SQM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShelterStatus {
    Open,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Shelter {
    pub id: String,
    pub name: String,
    pub location: GeoPoint,
    pub capacity: Option<u32>,
    pub floor_area: Option<FloorArea>,
    pub status: ShelterStatus,
    pub occupied: u32,
}

impl Shelter {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        location: GeoPoint,
        capacity: Option<u32>,
        floor_area: Option<FloorArea>,
        status: ShelterStatus,
        occupied: u32,
    ) -> Result<Self, DemandError> {
        let s = Shelter { id: id.into(), name: name.into(), location, capacity, floor_area, status, occupied };
        s.validate()?;
        Ok(s)
    }

    /// Open shelter with a published capacity.
    pub fn open(id: impl Into<String>, location: GeoPoint, capacity: u32) -> Self {
        let id = id.into();
        Shelter {
            name: id.clone(),
            id,
            location,
            capacity: Some(capacity),
            floor_area: None,
            status: ShelterStatus::Open,
            occupied: 0,
        }
    }

    pub fn candidate(id: impl Into<String>, location: GeoPoint, capacity: u32) -> Self {
        Shelter { status: ShelterStatus::Candidate, ..Shelter::open(id, location, capacity) }
    }

    fn gross_capacity(&self) -> Result<u32, DemandError> {
        match (self.capacity, self.floor_area) {
            (Some(c), _) => Ok(c),
            (None, Some(area)) => estimate_capacity(area),
            (None, None) => {
                Err(DemandError::InvalidInput(format!("shelter {} has neither capacity nor floor area", self.id)))
            }
        }
    }

    fn validate(&self) -> Result<(), DemandError> {
        let gross = self.gross_capacity()?;
        if self.occupied > gross {
            return Err(DemandError::InvalidInput(format!(
                "shelter {}: occupied {} exceeds capacity {gross}",
                self.id, self.occupied
            )));
        }
        Ok(())
    }
}

/// Persons a floor area can hold: 70% usable at 100 sqft each, floored.
pub fn estimate_capacity(area: FloorArea) -> Result<u32, DemandError> {
    let sqft = area.in_sqft();
    if !(sqft > 0.0) || !sqft.is_finite() {
        return Err(DemandError::InvalidInput(format!("floor area must be positive, got {}", area.value)));
    }
    let persons = sqft * USABLE_SHARE / SQFT_PER_PERSON;
    // absorb representation error on exact multiples (e.g. 910.0 - 1e-13)
    Ok((persons + 1e-9).floor() as u32)
}

/// Published capacity (or floor-area estimate) minus current occupants.
pub fn effective_capacity(s: &Shelter) -> u32 {
    s.gross_capacity().unwrap_or(0).saturating_sub(s.occupied)
}

/// Evacuation zones and fire perimeters used to tag demand cells.
#[derive(Debug, Clone, Default)]
pub struct ZoneSet {
    zones: Vec<LayerPolygon>,
    perimeters: Vec<GeoPolygon>,
    perimeter_layers: Vec<LayerPolygon>,
}

impl ZoneSet {
    pub fn new(layers: impl IntoIterator<Item = LayerPolygon>) -> Self {
        let mut set = ZoneSet::default();
        for l in layers {
            match l.kind {
                LayerKind::FirePerimeter => {
                    set.perimeters.push(l.polygon.clone());
                    set.perimeter_layers.push(l);
                }
                _ => set.zones.push(l),
            }
        }
        set
    }

    pub fn zones(&self) -> &[LayerPolygon] {
        &self.zones
    }

    pub fn perimeters(&self) -> &[GeoPolygon] {
        &self.perimeters
    }

    pub fn perimeter_layers(&self) -> &[LayerPolygon] {
        &self.perimeter_layers
    }

    pub fn zone_polygons(&self) -> Vec<GeoPolygon> {
        self.zones.iter().map(|z| z.polygon.clone()).collect()
    }

    /// Distinct zone names in first-appearance order.
    pub fn zone_names(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.zones.iter().filter(|z| seen.insert(z.name.clone())).map(|z| z.name.clone()).collect()
    }

    /// Zone tag and name for a point; order zones take precedence.
    pub fn locate(&self, p: GeoPoint) -> (ZoneTag, Option<String>) {
        for (kind, tag) in [(LayerKind::EvacOrder, ZoneTag::Order), (LayerKind::EvacWarning, ZoneTag::Warning)] {
            if let Some(z) = self.zones.iter().find(|z| z.kind == kind && point_in_polygon(p, &z.polygon)) {
                return (tag, Some(z.name.clone()));
            }
        }
        (ZoneTag::None, None)
    }

    pub fn in_fire(&self, p: GeoPoint) -> bool {
        self.perimeters.iter().any(|f| point_in_polygon(p, f))
    }
}

/// Assigns zone tag, zone name and fire flag by centroid containment.
pub fn tag_cells(cells: &[DemandCell], zones: &ZoneSet) -> Vec<DemandCell> {
    cells
        .iter()
        .map(|c| {
            let (zone_tag, zone_name) = zones.locate(c.centroid);
            DemandCell { zone_tag, zone_name, in_fire: zones.in_fire(c.centroid), ..c.clone() }
        })
        .collect()
}

/// Cells whose centroid falls in an included zone, optionally dropping
/// those inside any fire perimeter. Returned cells carry fresh tags.
pub fn filter_demand(
    cells: &[DemandCell],
    zones: &ZoneSet,
    include: &BTreeSet<ZoneTag>,
    exclude_fire: bool,
) -> Vec<DemandCell> {
    tag_cells(cells, zones)
        .into_iter()
        .filter(|c| include.contains(&c.zone_tag) && !(exclude_fire && c.in_fire))
        .collect()
}

pub fn order_and_warning() -> BTreeSet<ZoneTag> {
    BTreeSet::from([ZoneTag::Order, ZoneTag::Warning])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandSummary {
    pub total_order: f64,
    pub total_warning: f64,
    pub total: f64,
    pub total_supply: f64,
    pub gap: f64,
}

/// Population by zone tag against the effective capacity of open shelters.
pub fn demand_summary(cells: &[DemandCell], shelters: &[Shelter]) -> DemandSummary {
    let sum_tag = |tag| cells.iter().filter(|c| c.zone_tag == tag).map(|c| c.population).fold(0.0, |a, b| a + b);
    let total_order = sum_tag(ZoneTag::Order);
    let total_warning = sum_tag(ZoneTag::Warning);
    let total = total_order + total_warning;
    let total_supply = shelters
        .iter()
        .filter(|s| s.status == ShelterStatus::Open)
        .map(|s| effective_capacity(s) as f64)
        .fold(0.0, |a, b| a + b);
    DemandSummary { total_order, total_warning, total, total_supply, gap: (total - total_supply).max(0.0) }
}

#[derive(Debug, Deserialize)]
struct PopulationRow {
    cell_id: String,
    lon: f64,
    lat: f64,
    population: f64,
}

/// Reads `cell_id,lon,lat,population`; cells come back untagged.
pub fn read_population_csv(path: &Path) -> Result<Vec<DemandCell>, DemandError> {
    let file = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize::<PopulationRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row?;
            let err = |message: String| DemandError::Parse { file: file.clone(), line: i + 2, message };
            let p = GeoPoint::new(row.lon, row.lat).map_err(|e| err(e.to_string()))?;
            DemandCell::new(row.cell_id, p, row.population).map_err(|e| err(e.to_string()))
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ShelterRow {
    id: String,
    name: String,
    lon: f64,
    lat: f64,
    #[serde(default)]
    capacity: Option<u32>,
    #[serde(default)]
    floor_area: Option<f64>,
    #[serde(default)]
    area_unit: Option<AreaUnit>,
    status: ShelterStatus,
    #[serde(default)]
    occupied: Option<u32>,
}

/// Reads `id,name,lon,lat,capacity,floor_area,area_unit,status,occupied`.
pub fn read_shelters_csv(path: &Path) -> Result<Vec<Shelter>, DemandError> {
    let file = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let mut seen = BTreeSet::new();
    reader
        .deserialize::<ShelterRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row?;
            let err = |message: String| DemandError::Parse { file: file.clone(), line: i + 2, message };
            if !seen.insert(row.id.clone()) {
                return Err(err(format!("duplicate shelter id {}", row.id)));
            }
            let location = GeoPoint::new(row.lon, row.lat).map_err(|e| err(e.to_string()))?;
            let floor_area =
                row.floor_area.map(|value| FloorArea { value, unit: row.area_unit.unwrap_or(AreaUnit::Sqft) });
            Shelter::new(row.id, row.name, location, row.capacity, floor_area, row.status, row.occupied.unwrap_or(0))
                .map_err(|e| err(e.to_string()))
        })
        .collect()
}
