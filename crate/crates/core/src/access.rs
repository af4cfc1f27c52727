//! E2SFCA accessibility with Gaussian distance decay, nearest-shelter
//! travel times, and the seven-class display scheme.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{DemandCell, Shelter, ShelterStatus};
use crate::road::{RoadError, RoadGraph, SnapIndex, TravelMatrix};

#[derive(Debug, Error)]
pub enum AccessError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cannot classify: every score is zero and no reference maximum was given")]
    Classification,
    #[error(transparent)]
    Road(#[from] RoadError),
}

/// Gaussian decay width and catchment threshold, both in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayParams {
    pub sigma: f64,
    pub t0: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams { sigma: 30.0, t0: 120.0 }
    }
}

impl DecayParams {
    pub fn new(sigma: f64, t0: f64) -> Result<Self, AccessError> {
        let p = DecayParams { sigma, t0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AccessError> {
        if !(self.sigma > 0.0 && self.t0 > 0.0) || !self.sigma.is_finite() || !self.t0.is_finite() {
            return Err(AccessError::InvalidInput(format!(
                "decay needs sigma > 0 and t0 > 0, got sigma {} t0 {}",
                self.sigma, self.t0
            )));
        }
        Ok(())
    }
}

/// exp(-t²/2σ²) inside the catchment, zero beyond `t0`.
pub fn gaussian_weight(t: f64, params: &DecayParams) -> f64 {
    if t > params.t0 {
        0.0
    } else {
        (-(t * t) / (2.0 * params.sigma * params.sigma)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supply {
    pub id: String,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub id: String,
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyRatio {
    pub shelter_id: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccessClass {
    NoAccess,
    VeryPoor,
    Poor,
    Moderate,
    Good,
    VeryGood,
    Excellent,
}

impl AccessClass {
    pub const ALL: [AccessClass; 7] = [
        AccessClass::NoAccess,
        AccessClass::VeryPoor,
        AccessClass::Poor,
        AccessClass::Moderate,
        AccessClass::Good,
        AccessClass::VeryGood,
        AccessClass::Excellent,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AccessClass::NoAccess => "No Access",
            AccessClass::VeryPoor => "Very Poor",
            AccessClass::Poor => "Poor",
            AccessClass::Moderate => "Moderate",
            AccessClass::Good => "Good",
            AccessClass::VeryGood => "Very Good",
            AccessClass::Excellent => "Excellent",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for AccessClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for AccessClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for AccessClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        AccessClass::from_name(&name).ok_or_else(|| serde::de::Error::custom(format!("unknown class `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessResult {
    pub cell_id: String,
    pub score: f64,
    #[serde(rename = "class")]
    pub class_label: Option<AccessClass>,
}

/// Two-step floating catchment with the same Gaussian weights in both steps.
///
/// `matrix` rows follow `demand`, columns follow `supply`. Shelters whose
/// weighted catchment population is zero get no ratio and contribute nothing.
pub fn e2sfca(
    supply: &[Supply],
    demand: &[Demand],
    matrix: &TravelMatrix,
    params: &DecayParams,
) -> Result<(Vec<SupplyRatio>, Vec<AccessResult>), AccessError> {
    params.validate()?;
    if let Some(s) = supply.iter().find(|s| !(s.capacity >= 0.0) || !s.capacity.is_finite()) {
        return Err(AccessError::InvalidInput(format!("shelter {} has capacity {}", s.id, s.capacity)));
    }
    if let Some(d) = demand.iter().find(|d| !(d.population >= 0.0) || !d.population.is_finite()) {
        return Err(AccessError::InvalidInput(format!("cell {} has population {}", d.id, d.population)));
    }
    if matrix.rows().len() != demand.len() || matrix.dest_ids().len() != supply.len() {
        return Err(AccessError::InvalidInput(format!(
            "matrix is {}x{} but there are {} cells and {} shelters",
            matrix.rows().len(),
            matrix.dest_ids().len(),
            demand.len(),
            supply.len()
        )));
    }

    // step 1: weighted population in each shelter's catchment
    let mut weighted_pop = vec![0.0; supply.len()];
    for (d, row) in demand.iter().zip(matrix.rows()) {
        for &(j, t) in row {
            if t <= params.t0 {
                weighted_pop[j] += d.population * gaussian_weight(t, params);
            }
        }
    }
    let ratio: Vec<Option<f64>> =
        supply.iter().zip(&weighted_pop).map(|(s, &w)| (w > 0.0).then(|| s.capacity / w)).collect();

    // step 2: decay-weighted sum of reachable ratios
    let scores: Vec<f64> = matrix
        .rows()
        .par_iter()
        .map(|row| {
            row.iter()
                .filter(|(_, t)| *t <= params.t0)
                .filter_map(|&(j, t)| ratio[j].map(|r| r * gaussian_weight(t, params)))
                .fold(0.0, |acc, x| acc + x)
        })
        .collect();

    let ratios = supply
        .iter()
        .zip(&ratio)
        .filter_map(|(s, r)| r.map(|ratio| SupplyRatio { shelter_id: s.id.clone(), ratio }))
        .collect();
    let results = demand
        .iter()
        .zip(scores)
        .map(|(d, score)| AccessResult { cell_id: d.id.clone(), score, class_label: None })
        .collect();
    Ok((ratios, results))
}

/// Equal-width classes over (0, max]; zero is its own class. Passing a
/// reference maximum lets several scenarios share one legend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScheme {
    pub reference_max: Option<f64>,
}

impl ClassScheme {
    pub fn with_max(max: f64) -> Self {
        ClassScheme { reference_max: Some(max) }
    }

    /// Upper bounds of the six positive classes.
    pub fn breakpoints(max: f64) -> [f64; 6] {
        std::array::from_fn(|k| max * (k + 1) as f64 / 6.0)
    }

    pub fn class_of(score: f64, max: f64) -> AccessClass {
        if score <= 0.0 {
            return AccessClass::NoAccess;
        }
        let bin = ((score / max * 6.0).ceil() as usize).clamp(1, 6);
        AccessClass::ALL[bin]
    }

    fn resolve_max(&self, results: &[AccessResult]) -> Result<f64, AccessError> {
        let max = self.reference_max.unwrap_or_else(|| results.iter().map(|r| r.score).fold(0.0, f64::max));
        if max > 0.0 && max.is_finite() {
            Ok(max)
        } else {
            Err(AccessError::Classification)
        }
    }
}

pub fn classify(results: &[AccessResult], scheme: &ClassScheme) -> Result<Vec<AccessResult>, AccessError> {
    if let Some(r) = results.iter().find(|r| !(r.score >= 0.0)) {
        return Err(AccessError::InvalidInput(format!("cell {} has score {}", r.cell_id, r.score)));
    }
    let max = scheme.resolve_max(results)?;
    Ok(results
        .iter()
        .map(|r| AccessResult { class_label: Some(ClassScheme::class_of(r.score, max)), ..r.clone() })
        .collect())
}

/// Minutes from each cell to its closest open shelter. Cells that reach
/// no open shelter are absent.
pub fn nearest_shelter_times(
    cells: &[DemandCell],
    shelters: &[Shelter],
    graph: &RoadGraph,
    snap_radius_m: f64,
) -> Result<BTreeMap<String, f64>, AccessError> {
    let index = SnapIndex::new(graph);
    let mut targets = Vec::new();
    for s in shelters.iter().filter(|s| s.status == ShelterStatus::Open) {
        targets.push(index.snap(s.location, snap_radius_m).map_err(|e| with_point(e, &s.id))?);
    }
    if targets.is_empty() {
        return Ok(BTreeMap::new());
    }
    let target_idx: Vec<usize> = targets.iter().map(|id| graph.index_of(*id).expect("snapped node")).collect();
    let minutes = graph.minutes_to_nearest(&target_idx)?;
    let mut out = BTreeMap::new();
    for c in cells {
        let node = index.snap(c.centroid, snap_radius_m).map_err(|e| with_point(e, &c.id))?;
        let t = minutes[graph.index_of(node).expect("snapped node")];
        if t.is_finite() {
            out.insert(c.id.clone(), t);
        }
    }
    Ok(out)
}

fn with_point(e: RoadError, id: &str) -> AccessError {
    match e {
        RoadError::Unsnappable { nearest_m, .. } => {
            AccessError::Road(RoadError::Unsnappable { point: Some(id.to_string()), nearest_m })
        }
        other => AccessError::Road(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GeoPoint, LocalFrame};
    use crate::road::{derive_times, travel_matrix, RoadEdge, RoadNode};
    use proptest::prelude::*;

    fn supply(caps: &[f64]) -> Vec<Supply> {
        caps.iter().enumerate().map(|(j, c)| Supply { id: format!("s{j}"), capacity: *c }).collect()
    }

    fn demand(pops: &[f64]) -> Vec<Demand> {
        pops.iter().enumerate().map(|(i, p)| Demand { id: format!("c{i}"), population: *p }).collect()
    }

    fn matrix(times: &[Vec<Option<f64>>], n_supply: usize) -> TravelMatrix {
        let rows =
            times.iter().map(|r| r.iter().enumerate().filter_map(|(j, t)| t.map(|t| (j, t))).collect()).collect();
        TravelMatrix::new(
            (0..times.len()).map(|i| format!("c{i}")).collect(),
            (0..n_supply).map(|j| format!("s{j}")).collect(),
            rows,
        )
    }

    /// Direct double loop over the two formulas on a dense time table.
    fn brute_force(caps: &[f64], pops: &[f64], times: &[Vec<Option<f64>>], p: &DecayParams) -> Vec<f64> {
        let w = |t: Option<f64>| match t {
            Some(t) if t <= p.t0 => (-(t * t) / (2.0 * p.sigma * p.sigma)).exp(),
            _ => 0.0,
        };
        (0..pops.len())
            .map(|i| {
                let mut a = 0.0;
                for j in 0..caps.len() {
                    if w(times[i][j]) == 0.0 {
                        continue;
                    }
                    let mut denom = 0.0;
                    for k in 0..pops.len() {
                        denom += pops[k] * w(times[k][j]);
                    }
                    if denom > 0.0 {
                        a += caps[j] / denom * w(times[i][j]);
                    }
                }
                a
            })
            .collect()
    }

    #[test]
    fn weight_values() {
        let p = DecayParams::default();
        assert_eq!(gaussian_weight(0.0, &p), 1.0);
        assert!((gaussian_weight(30.0, &p) - 0.606531).abs() < 1e-6);
        assert_eq!(gaussian_weight(121.0, &p), 0.0);
        assert!(gaussian_weight(120.0, &p) > 0.0);
    }

    #[test]
    fn single_pair_ratio() {
        let (r, a) =
            e2sfca(&supply(&[100.0]), &demand(&[50.0]), &matrix(&[vec![Some(0.0)]], 1), &DecayParams::default())
                .unwrap();
        assert_eq!(r[0].ratio, 2.0);
        assert_eq!(a[0].score, 2.0);
    }

    // Frozen from a 40-digit evaluation of the two formulas.
    const R1: f64 = 0.644_126_478_851_934_3;
    const R2: f64 = 0.528_563_872_380_118_2;
    const A1: f64 = 0.609_317_541_843_560_7;
    const A2: f64 = 0.890_682_458_156_439_3;

    pub(crate) fn worked_times() -> Vec<Vec<Option<f64>>> {
        vec![vec![Some(10.0), None], vec![Some(30.0), Some(10.0)], vec![None, Some(200.0)]]
    }

    #[test]
    fn worked_three_cell_fixture() {
        let p = DecayParams::default();
        let (r, a) =
            e2sfca(&supply(&[100.0, 50.0]), &demand(&[100.0, 100.0, 50.0]), &matrix(&worked_times(), 2), &p).unwrap();
        assert!((r[0].ratio - R1).abs() <= 1e-12 * R1);
        assert!((r[1].ratio - R2).abs() <= 1e-12 * R2);
        assert!((a[0].score - A1).abs() <= 1e-12 * A1);
        assert!((a[1].score - A2).abs() <= 1e-12 * A2);
        assert_eq!(a[2].score, 0.0);
        let mass: f64 = [100.0, 100.0, 50.0].iter().zip(&a).map(|(p, r)| p * r.score).sum();
        assert!((mass - 150.0).abs() < 1e-12);
        let oracle = brute_force(&[100.0, 50.0], &[100.0, 100.0, 50.0], &worked_times(), &p);
        for (o, r) in oracle.iter().zip(&a) {
            assert!((o - r.score).abs() <= 1e-12 * o.max(1e-300));
        }
    }

    #[test]
    fn empty_catchment_has_no_ratio() {
        let (r, a) = e2sfca(
            &supply(&[10.0, 10.0]),
            &demand(&[5.0]),
            &matrix(&[vec![Some(1.0), Some(500.0)]], 2),
            &DecayParams::default(),
        )
        .unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].shelter_id, "s0");
        assert_eq!(a[0].score, 2.0);
    }

    #[test]
    fn rejects_negative_inputs() {
        let m = matrix(&[vec![Some(1.0)]], 1);
        assert!(e2sfca(&supply(&[-1.0]), &demand(&[1.0]), &m, &DecayParams::default()).is_err());
        assert!(e2sfca(&supply(&[1.0]), &demand(&[-1.0]), &m, &DecayParams::default()).is_err());
        assert!(DecayParams::new(0.0, 10.0).is_err());
    }

    /// Slower travel is not a uniform penalty: a cell whose times stay put
    /// gains when its neighbours' weights shrink (the ratio grows).
    #[test]
    fn slower_travel_can_raise_some_scores() {
        let p = DecayParams::default();
        let caps = supply(&[100.0]);
        let pops = demand(&[50.0, 50.0]);
        let (_, before) = e2sfca(&caps, &pops, &matrix(&[vec![Some(5.0)], vec![Some(10.0)]], 1), &p).unwrap();
        let (_, after) = e2sfca(&caps, &pops, &matrix(&[vec![Some(5.0)], vec![Some(60.0)]], 1), &p).unwrap();
        assert!(after[0].score > before[0].score);
        assert!(after[1].score < before[1].score);
    }

    #[test]
    fn classes() {
        let max = 2.86;
        assert_eq!(ClassScheme::class_of(0.0, max), AccessClass::NoAccess);
        assert_eq!(ClassScheme::class_of(2.86, max), AccessClass::Excellent);
        assert_eq!(ClassScheme::class_of(0.01, max), AccessClass::VeryPoor);
        assert_eq!(ClassScheme::class_of(max / 6.0, max), AccessClass::VeryPoor);
        assert_eq!(ClassScheme::class_of(max / 6.0 + 1e-9, max), AccessClass::Poor);
        assert_eq!(ClassScheme::class_of(10.0, max), AccessClass::Excellent);
        assert!((ClassScheme::breakpoints(max)[0] - 0.476_666).abs() < 1e-5);
        let zeros = vec![AccessResult { cell_id: "a".into(), score: 0.0, class_label: None }];
        assert!(matches!(classify(&zeros, &ClassScheme::default()), Err(AccessError::Classification)));
        let labelled = classify(&zeros, &ClassScheme::with_max(1.0)).unwrap();
        assert_eq!(labelled[0].class_label, Some(AccessClass::NoAccess));
    }

    #[test]
    fn class_serializes_by_name() {
        let json = serde_json::to_string(&AccessClass::VeryGood).unwrap();
        assert_eq!(json, "\"Very Good\"");
        assert_eq!(serde_json::from_str::<AccessClass>(&json).unwrap(), AccessClass::VeryGood);
    }

    fn grid_graph() -> (RoadGraph, LocalFrame) {
        let frame = LocalFrame::new(GeoPoint { lon: -118.3, lat: 34.1 });
        let nodes: Vec<RoadNode> =
            (0..6).map(|i| RoadNode { id: i, location: frame.unproject([i as f64 * 1000.0, 0.0]) }).collect();
        let mut edges = Vec::new();
        for i in 0..4 {
            for (a, b) in [(i, i + 1), (i + 1, i)] {
                edges.push(RoadEdge {
                    id: format!("{a}-{b}"),
                    from: a,
                    to: b,
                    length_m: 1000.0,
                    highway: "x".into(),
                    maxspeed_kph: Some(60.0),
                    travel_min: None,
                    geometry: vec![],
                });
            }
        }
        // node 5 is isolated
        (derive_times(&RoadGraph::new(nodes, edges).unwrap()).unwrap(), frame)
    }

    #[test]
    fn nearest_times() {
        let (g, frame) = grid_graph();
        let cell = |id: &str, x: f64| DemandCell::new(id, frame.unproject([x, 0.0]), 1.0).unwrap();
        let cells = vec![cell("at", 0.0), cell("mid", 2000.0), cell("lost", 5000.0)];
        let shelters = vec![
            Shelter::open("a", frame.unproject([0.0, 0.0]), 10),
            Shelter::open("b", frame.unproject([4000.0, 0.0]), 10),
            Shelter::candidate("c", frame.unproject([2000.0, 0.0]), 10),
        ];
        let t = nearest_shelter_times(&cells, &shelters, &g, 5000.0).unwrap();
        assert_eq!(t["at"], 0.0);
        assert!((t["mid"] - 2.0).abs() < 1e-12);
        assert!(!t.contains_key("lost"));
        // equals the minimum over a full matrix
        let origins: Vec<(String, GeoPoint)> = cells.iter().map(|c| (c.id.clone(), c.centroid)).collect();
        let dests: Vec<(String, GeoPoint)> = shelters[..2].iter().map(|s| (s.id.clone(), s.location)).collect();
        let m = travel_matrix(&g, &origins, &dests, f64::MAX, 5000.0).unwrap();
        for (i, c) in cells.iter().enumerate() {
            let min = m.row(i).iter().map(|(_, t)| *t).fold(f64::INFINITY, f64::min);
            assert_eq!(t.get(&c.id).copied(), min.is_finite().then_some(min));
        }
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<Vec<Option<f64>>>)> {
        (1usize..6, 1usize..20).prop_flat_map(|(ns, nc)| {
            (
                proptest::collection::vec(0.0f64..500.0, ns),
                proptest::collection::vec(0.0f64..2000.0, nc),
                proptest::collection::vec(proptest::collection::vec(proptest::option::of(0.0f64..200.0), ns), nc),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force((caps, pops, times) in instance()) {
            let p = DecayParams::default();
            let (_, a) = e2sfca(&supply(&caps), &demand(&pops), &matrix(&times, caps.len()), &p).unwrap();
            let oracle = brute_force(&caps, &pops, &times, &p);
            for (o, r) in oracle.iter().zip(&a) {
                prop_assert!((o - r.score).abs() <= 1e-12 * o.abs().max(1e-12));
            }
        }

        #[test]
        fn raising_one_capacity_never_lowers_scores((caps, pops, times) in instance(), j in 0usize..6, extra in 0.0f64..300.0) {
            let p = DecayParams::default();
            let j = j % caps.len();
            let (_, before) = e2sfca(&supply(&caps), &demand(&pops), &matrix(&times, caps.len()), &p).unwrap();
            let mut more = caps.clone();
            more[j] += extra;
            let (_, after) = e2sfca(&supply(&more), &demand(&pops), &matrix(&times, caps.len()), &p).unwrap();
            for (b, a) in before.iter().zip(&after) {
                prop_assert!(a.score >= b.score * (1.0 - 1e-12));
            }
        }

        #[test]
        fn population_weighted_scores_sum_to_served_supply((caps, pops, times) in instance()) {
            let p = DecayParams::default();
            let (ratios, a) = e2sfca(&supply(&caps), &demand(&pops), &matrix(&times, caps.len()), &p).unwrap();
            let mass: f64 = pops.iter().zip(&a).map(|(p, r)| p * r.score).sum();
            let served: f64 = ratios.iter().map(|r| caps[r.shelter_id[1..].parse::<usize>().unwrap()]).sum();
            prop_assert!((mass - served).abs() <= 1e-9 * served.max(1.0));
        }

        #[test]
        fn weight_is_non_increasing(a in 0.0f64..120.0, b in 0.0f64..120.0) {
            let p = DecayParams::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(gaussian_weight(hi, &p) <= gaussian_weight(lo, &p));
        }
    }
}
