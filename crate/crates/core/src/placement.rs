//! Greedy selection of additional shelters around evacuation zones.
//!
//! Both algorithms work on straight-line distances from zone boundaries,
//! grouped into rings of `ring_step_m`. Ring `n` holds every candidate at
//! distance ≤ `n * ring_step_m`; a candidate inside a zone is in ring 1.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{effective_capacity, Shelter, ZoneSet};
use crate::geometry::{GeoPoint, LocalFrame, PlanarPolygon};

pub const METERS_PER_MILE: f64 = 1609.34;

#[derive(Debug, Error, PartialEq)]
pub enum PlacementError {
    #[error("invalid placement parameters: {0}")]
    InvalidParams(String),
    #[error("invalid placement input: {0}")]
    InvalidInput(String),
    #[error("{}", infeasible_message(.zone, *.shortfall))]
    Infeasible { zone: Option<String>, shortfall: f64 },
}

fn infeasible_message(zone: &Option<String>, shortfall: f64) -> String {
    match zone {
        Some(z) => format!("zone {z} cannot be served: short by {shortfall} persons"),
        None => format!("candidates cannot cover the target: short by {shortfall} persons"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    #[default]
    StraightLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementParams {
    pub k: f64,
    pub ring_step_m: f64,
    pub distance_mode: DistanceMode,
}

impl Default for PlacementParams {
    fn default() -> Self {
        PlacementParams { k: 2.0, ring_step_m: METERS_PER_MILE, distance_mode: DistanceMode::StraightLine }
    }
}

impl PlacementParams {
    pub fn validate(&self) -> Result<(), PlacementError> {
        if !(self.k >= 1.0) || !self.k.is_finite() {
            return Err(PlacementError::InvalidParams(format!("k must be at least 1, got {}", self.k)));
        }
        if !(self.ring_step_m > 0.0) || !self.ring_step_m.is_finite() {
            return Err(PlacementError::InvalidParams(format!("ring step must be positive, got {}", self.ring_step_m)));
        }
        Ok(())
    }

    fn ring_of(&self, distance_m: f64) -> u64 {
        ((distance_m / self.ring_step_m) * (1.0 - 1e-12)).ceil().max(1.0) as u64
    }
}

/// A shelter with its distance to the demand area. Pre-seeded shelters are
/// already open and always end up selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub id: String,
    pub capacity: u32,
    pub distance_m: f64,
    pub preseeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneDemand {
    pub zone: String,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneAssignment {
    pub zone: String,
    pub demand: f64,
    pub selected: Vec<String>,
    pub capacity: u64,
    pub radius_m: f64,
}

/// `per_zone` is filled by the distance-based method only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub selected: Vec<String>,
    pub total_capacity: u64,
    pub final_radius_m: f64,
    pub per_zone: Vec<ZoneAssignment>,
}

fn check_demand(demand: f64, what: &str) -> Result<(), PlacementError> {
    if demand > 0.0 && demand.is_finite() {
        Ok(())
    } else {
        Err(PlacementError::InvalidInput(format!("{what} demand must be positive, got {demand}")))
    }
}

fn check_distance(id: &str, d: f64) -> Result<(), PlacementError> {
    if d >= 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(PlacementError::InvalidInput(format!("candidate {id} has distance {d}")))
    }
}

fn by_distance(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    a.distance_m.total_cmp(&b.distance_m).then_with(|| a.id.cmp(&b.id))
}

/// Filter by expanding rings until `k * demand` is covered, then take the
/// largest filtered candidates until `demand` is covered.
pub fn capacity_based(
    candidates: &[RankedCandidate],
    demand: f64,
    params: &PlacementParams,
) -> Result<PlacementResult, PlacementError> {
    params.validate()?;
    check_demand(demand, "total")?;
    for c in candidates {
        check_distance(&c.id, c.distance_m)?;
    }
    let (mut seeded, mut pool): (Vec<&RankedCandidate>, Vec<&RankedCandidate>) =
        candidates.iter().partition(|c| c.preseeded);
    seeded.sort_by(|a, b| a.id.cmp(&b.id));
    pool.sort_by(|a, b| by_distance(a, b));

    let seeded_cap: u64 = seeded.iter().map(|c| c.capacity as u64).sum();
    let target = params.k * demand;

    let mut filtered = Vec::new();
    let mut cum = seeded_cap as f64;
    let mut radius = 0.0;
    let mut i = 0;
    while cum < target {
        let Some(next) = pool.get(i) else {
            return Err(PlacementError::Infeasible { zone: None, shortfall: target - cum });
        };
        let ring = params.ring_of(next.distance_m);
        while let Some(c) = pool.get(i).filter(|c| params.ring_of(c.distance_m) == ring) {
            cum += c.capacity as f64;
            filtered.push(*c);
            i += 1;
        }
        radius = ring as f64 * params.ring_step_m;
    }

    filtered.sort_by(|a, b| b.capacity.cmp(&a.capacity).then_with(|| by_distance(a, b)));
    let mut selected: Vec<String> = seeded.iter().map(|c| c.id.clone()).collect();
    let mut total = seeded_cap;
    for c in filtered {
        if total as f64 >= demand {
            break;
        }
        total += c.capacity as u64;
        selected.push(c.id.clone());
    }
    Ok(PlacementResult { selected, total_capacity: total, final_radius_m: radius, per_zone: Vec::new() })
}

/// A candidate's distance to each zone, indexed like the zone list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonedCandidate {
    pub id: String,
    pub capacity: u32,
    pub distances_m: Vec<f64>,
    pub preseeded: bool,
}

/// Serve zones in order, each claiming whole rings of unclaimed candidates
/// until its own demand is covered.
pub fn distance_based(
    candidates: &[ZonedCandidate],
    zones: &[ZoneDemand],
    params: &PlacementParams,
) -> Result<PlacementResult, PlacementError> {
    params.validate()?;
    if zones.is_empty() {
        return Err(PlacementError::InvalidInput("no zone has demand".into()));
    }
    for z in zones {
        check_demand(z.demand, &format!("zone {}", z.zone))?;
    }
    for c in candidates {
        if c.distances_m.len() != zones.len() {
            return Err(PlacementError::InvalidInput(format!(
                "candidate {} has {} zone distances for {} zones",
                c.id,
                c.distances_m.len(),
                zones.len()
            )));
        }
        for d in &c.distances_m {
            check_distance(&c.id, *d)?;
        }
    }

    let mut claimed = vec![false; candidates.len()];
    let mut per_zone = Vec::with_capacity(zones.len());
    for (z, zone) in zones.iter().enumerate() {
        let mut open: Vec<usize> = (0..candidates.len()).filter(|&i| !claimed[i]).collect();
        let ring = |i: usize| params.ring_of(candidates[i].distances_m[z]);
        open.sort_by(|&a, &b| {
            let (ca, cb) = (&candidates[a], &candidates[b]);
            ring(a)
                .cmp(&ring(b))
                .then_with(|| cb.preseeded.cmp(&ca.preseeded))
                .then_with(|| ca.distances_m[z].total_cmp(&cb.distances_m[z]))
                .then_with(|| ca.id.cmp(&cb.id))
        });

        let mut picked = Vec::new();
        let mut cap = 0u64;
        let mut radius = 0.0;
        let mut pos = 0;
        while (cap as f64) < zone.demand {
            let Some(&first) = open.get(pos) else {
                return Err(PlacementError::Infeasible {
                    zone: Some(zone.zone.clone()),
                    shortfall: zone.demand - cap as f64,
                });
            };
            let r = ring(first);
            while let Some(&i) = open.get(pos).filter(|&&i| ring(i) == r) {
                claimed[i] = true;
                cap += candidates[i].capacity as u64;
                picked.push(candidates[i].id.clone());
                pos += 1;
            }
            radius = r as f64 * params.ring_step_m;
        }
        per_zone.push(ZoneAssignment {
            zone: zone.zone.clone(),
            demand: zone.demand,
            selected: picked,
            capacity: cap,
            radius_m: radius,
        });
    }

    let mut selected: Vec<String> = per_zone.iter().flat_map(|z| z.selected.iter().cloned()).collect();
    // open shelters no ring reached are booked to their nearest zone
    for (i, c) in candidates.iter().enumerate() {
        if c.preseeded && !claimed[i] {
            let nearest = (0..zones.len()).min_by(|&a, &b| c.distances_m[a].total_cmp(&c.distances_m[b]));
            if let Some(z) = nearest {
                per_zone[z].selected.push(c.id.clone());
                per_zone[z].capacity += c.capacity as u64;
            }
            selected.push(c.id.clone());
        }
    }
    let total = per_zone.iter().map(|z| z.capacity).sum();
    Ok(PlacementResult {
        selected,
        total_capacity: total,
        final_radius_m: per_zone.iter().map(|z| z.radius_m).fold(0.0, f64::max),
        per_zone,
    })
}

/// Zone polygons grouped by zone name, projected into one local frame.
struct ZoneGeometry {
    frame: LocalFrame,
    groups: Vec<(String, Vec<PlanarPolygon>)>,
}

impl ZoneGeometry {
    fn new(zones: &ZoneSet) -> Result<Self, PlacementError> {
        let frame = LocalFrame::centered_on(zones.zones().iter().flat_map(|z| z.polygon.exterior()))
            .ok_or_else(|| PlacementError::InvalidInput("no evacuation zones".into()))?;
        let mut groups: BTreeMap<&str, Vec<PlanarPolygon>> = BTreeMap::new();
        for z in zones.zones() {
            groups.entry(&z.name).or_default().push(frame.project_polygon(&z.polygon));
        }
        let groups = zones
            .zone_names()
            .into_iter()
            .map(|name| {
                let polys = groups.remove(name.as_str()).unwrap_or_default();
                (name, polys)
            })
            .collect();
        Ok(ZoneGeometry { frame, groups })
    }

    fn distance_to_group(&self, group: &[PlanarPolygon], p: GeoPoint) -> f64 {
        let xy = self.frame.project(p);
        group.iter().map(|poly| poly.distance_to(xy)).fold(f64::INFINITY, f64::min)
    }

    fn distance_to_any(&self, p: GeoPoint) -> f64 {
        self.groups.iter().map(|(_, g)| self.distance_to_group(g, p)).fold(f64::INFINITY, f64::min)
    }

    fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|(n, _)| n == name)
    }
}

/// Capacity-based placement of `candidates` around all zones. `open`
/// shelters are pre-seeded.
pub fn place_capacity_based(
    candidates: &[Shelter],
    open: &[Shelter],
    zones: &ZoneSet,
    demand_total: f64,
    params: &PlacementParams,
) -> Result<PlacementResult, PlacementError> {
    let geom = ZoneGeometry::new(zones)?;
    let ranked: Vec<RankedCandidate> = open
        .iter()
        .map(|s| (s, true))
        .chain(candidates.iter().map(|s| (s, false)))
        .map(|(s, preseeded)| RankedCandidate {
            id: s.id.clone(),
            capacity: effective_capacity(s),
            distance_m: geom.distance_to_any(s.location),
            preseeded,
        })
        .collect();
    capacity_based(&ranked, demand_total, params)
}

/// Distance-based placement; `demands` name zones present in `zones` and
/// fix the processing order.
pub fn place_distance_based(
    candidates: &[Shelter],
    open: &[Shelter],
    zones: &ZoneSet,
    demands: &[ZoneDemand],
    params: &PlacementParams,
) -> Result<PlacementResult, PlacementError> {
    let geom = ZoneGeometry::new(zones)?;
    let groups = demands
        .iter()
        .map(|d| {
            geom.group_index(&d.zone).ok_or_else(|| PlacementError::InvalidInput(format!("unknown zone {}", d.zone)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let zoned: Vec<ZonedCandidate> = open
        .iter()
        .map(|s| (s, true))
        .chain(candidates.iter().map(|s| (s, false)))
        .map(|(s, preseeded)| ZonedCandidate {
            id: s.id.clone(),
            capacity: effective_capacity(s),
            distances_m: groups.iter().map(|&g| geom.distance_to_group(&geom.groups[g].1, s.location)).collect(),
            preseeded,
        })
        .collect();
    distance_based(&zoned, demands, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GeoPolygon, LayerKind, LayerPolygon};
    use proptest::prelude::*;

    fn km(step: f64) -> PlacementParams {
        PlacementParams { k: 2.0, ring_step_m: step, distance_mode: DistanceMode::StraightLine }
    }

    fn ranked(list: &[(f64, u32)]) -> Vec<RankedCandidate> {
        list.iter()
            .enumerate()
            .map(|(i, &(d, c))| RankedCandidate {
                id: format!("c{i}"),
                capacity: c,
                distance_m: d * 1000.0,
                preseeded: false,
            })
            .collect()
    }

    fn zoned(list: &[(f64, u32)]) -> Vec<ZonedCandidate> {
        list.iter()
            .enumerate()
            .map(|(i, &(d, c))| ZonedCandidate {
                id: format!("c{i}"),
                capacity: c,
                distances_m: vec![d * 1000.0],
                preseeded: false,
            })
            .collect()
    }

    fn one_zone(demand: f64) -> Vec<ZoneDemand> {
        vec![ZoneDemand { zone: "z".into(), demand }]
    }

    #[test]
    fn capacity_hand_trace() {
        let r = capacity_based(&ranked(&[(1.0, 30), (2.0, 50), (3.0, 120), (4.0, 80)]), 100.0, &km(1000.0)).unwrap();
        assert_eq!(r.selected, vec!["c2"]);
        assert_eq!(r.total_capacity, 120);
        assert_eq!(r.final_radius_m, 3000.0);
    }

    #[test]
    fn capacity_single_candidate() {
        let r = capacity_based(&ranked(&[(1.0, 200)]), 100.0, &km(1000.0)).unwrap();
        assert_eq!(r.selected, vec!["c0"]);
        assert_eq!(r.final_radius_m, 1000.0);
    }

    #[test]
    fn capacity_ties_break_by_distance_then_id() {
        let r = capacity_based(&ranked(&[(0.5, 60), (0.2, 60), (0.2, 60), (0.9, 200)]), 100.0, &km(1000.0)).unwrap();
        assert_eq!(r.selected, vec!["c3"]);
        let r = capacity_based(&ranked(&[(0.5, 60), (0.2, 60), (0.2, 60), (0.9, 100)]), 130.0, &km(1000.0)).unwrap();
        assert_eq!(r.selected, vec!["c3", "c1"]);
    }

    #[test]
    fn capacity_preseeded_counts_first() {
        let mut c = ranked(&[(0.5, 80), (1.5, 100), (2.5, 500)]);
        c[1].preseeded = true;
        let r = capacity_based(&c, 150.0, &km(1000.0)).unwrap();
        // 100 + 80 < 300 at ring 1..2, ring 3 reaches 680
        assert_eq!(r.final_radius_m, 3000.0);
        assert_eq!(r.selected, vec!["c1", "c2"]);
        assert_eq!(r.total_capacity, 600);
        let r = capacity_based(&c, 50.0, &km(1000.0)).unwrap();
        assert_eq!(r.selected, vec!["c1"]);
    }

    #[test]
    fn capacity_infeasible_reports_shortfall() {
        let e = capacity_based(&ranked(&[(1.0, 30), (2.0, 50)]), 100.0, &km(1000.0)).unwrap_err();
        assert_eq!(e, PlacementError::Infeasible { zone: None, shortfall: 120.0 });
    }

    #[test]
    fn distance_hand_trace() {
        let r = distance_based(&zoned(&[(1.0, 30), (2.0, 50), (3.0, 120)]), &one_zone(100.0), &km(1000.0)).unwrap();
        assert_eq!(r.selected, vec!["c0", "c1", "c2"]);
        assert_eq!(r.total_capacity, 200);
        assert_eq!(r.final_radius_m, 3000.0);
    }

    #[test]
    fn distance_exact_stop() {
        let r = distance_based(&zoned(&[(1.0, 30), (2.0, 50)]), &one_zone(30.0), &km(1000.0)).unwrap();
        assert_eq!(r.selected, vec!["c0"]);
        assert!(matches!(
            distance_based(&zoned(&[(1.0, 30)]), &one_zone(0.0), &km(1000.0)),
            Err(PlacementError::InvalidInput(_))
        ));
    }

    #[test]
    fn distance_first_come_claims() {
        let cands = vec![
            ZonedCandidate { id: "shared".into(), capacity: 100, distances_m: vec![500.0, 500.0], preseeded: false },
            ZonedCandidate { id: "far".into(), capacity: 100, distances_m: vec![9000.0, 2500.0], preseeded: false },
            ZonedCandidate { id: "seed".into(), capacity: 10, distances_m: vec![9000.0, 9000.0], preseeded: true },
        ];
        let zones = vec![ZoneDemand { zone: "a".into(), demand: 50.0 }, ZoneDemand { zone: "b".into(), demand: 50.0 }];
        let r = distance_based(&cands, &zones, &km(1000.0)).unwrap();
        assert_eq!(r.per_zone[0].selected, vec!["shared", "seed"]);
        assert_eq!(r.per_zone[1].selected, vec!["far"]);
        assert_eq!(r.per_zone[0].capacity, 110);
        assert_eq!(r.per_zone[1].radius_m, 3000.0);
        assert_eq!(r.selected, vec!["shared", "far", "seed"]);
        assert_eq!(r.total_capacity, 210);
    }

    #[test]
    fn distance_infeasible_names_zone() {
        let cands =
            vec![ZonedCandidate { id: "x".into(), capacity: 100, distances_m: vec![0.0, 0.0], preseeded: false }];
        let zones = vec![ZoneDemand { zone: "a".into(), demand: 50.0 }, ZoneDemand { zone: "b".into(), demand: 40.0 }];
        let e = distance_based(&cands, &zones, &km(1000.0)).unwrap_err();
        assert_eq!(e, PlacementError::Infeasible { zone: Some("b".into()), shortfall: 40.0 });
        assert!(e.to_string().contains("zone b"));
    }

    #[test]
    fn params_validation() {
        assert!(km(0.0).validate().is_err());
        assert!(PlacementParams { k: 0.5, ..Default::default() }.validate().is_err());
        assert_eq!(PlacementParams::default().ring_step_m, 1609.34);
    }

    #[test]
    fn ring_edges_are_inclusive() {
        let p = km(1000.0);
        assert_eq!(p.ring_of(0.0), 1);
        assert_eq!(p.ring_of(1000.0), 1);
        assert_eq!(p.ring_of(1000.5), 2);
        assert_eq!(p.ring_of(0.3 * 10_000.0), 3);
    }

    #[test]
    fn geographic_wrappers() {
        let frame = LocalFrame::new(GeoPoint { lon: -118.3, lat: 34.1 });
        let square = |x0: f64, name: &str| {
            let ring: Vec<GeoPoint> = [[x0, 0.0], [x0 + 1000.0, 0.0], [x0 + 1000.0, 1000.0], [x0, 1000.0], [x0, 0.0]]
                .iter()
                .map(|&xy| frame.unproject(xy))
                .collect();
            LayerPolygon {
                kind: LayerKind::EvacOrder,
                name: name.into(),
                polygon: GeoPolygon::new(ring, vec![], "evac_order").unwrap(),
            }
        };
        let zones = ZoneSet::new(vec![square(0.0, "west"), square(20_000.0, "east")]);
        let at = |x: f64, y: f64| frame.unproject([x, y]);
        let candidates = vec![
            Shelter::candidate("inside", at(500.0, 500.0), 40),
            Shelter::candidate("near_west", at(-2500.0, 500.0), 200),
            Shelter::candidate("near_east", at(22_500.0, 500.0), 90),
        ];
        let r = place_capacity_based(&candidates, &[], &zones, 100.0, &km(1000.0)).unwrap();
        assert_eq!(r.final_radius_m, 3000.0);
        assert_eq!(r.selected, vec!["near_west"]);
        let demands =
            vec![ZoneDemand { zone: "east".into(), demand: 50.0 }, ZoneDemand { zone: "west".into(), demand: 30.0 }];
        let r = place_distance_based(&candidates, &[], &zones, &demands, &km(1000.0)).unwrap();
        assert_eq!(r.per_zone[0].selected, vec!["near_east"]);
        assert_eq!(r.per_zone[1].selected, vec!["inside"]);
        assert_eq!(r.per_zone[1].radius_m, 1000.0);
        let unknown = vec![ZoneDemand { zone: "north".into(), demand: 1.0 }];
        assert!(place_distance_based(&candidates, &[], &zones, &unknown, &km(1000.0)).is_err());
    }

    fn instance() -> impl Strategy<Value = (Vec<(f64, u32)>, f64)> {
        (proptest::collection::vec((0.0f64..20.0, 1u32..200), 1..30), 1.0f64..500.0)
    }

    proptest! {
        #[test]
        fn capacity_selection_is_minimal((list, demand) in instance()) {
            let c = ranked(&list);
            match capacity_based(&c, demand, &km(1000.0)) {
                Ok(r) => {
                    prop_assert!(r.total_capacity as f64 >= demand);
                    let cap = |id: &str| c.iter().find(|x| x.id == id).unwrap().capacity as u64;
                    let smallest = r.selected.iter().map(|id| cap(id)).min().unwrap();
                    prop_assert!(((r.total_capacity - smallest) as f64) < demand);
                    // nothing filtered but unselected is larger than a selected one
                    let within: Vec<_> = c.iter().filter(|x| x.distance_m <= r.final_radius_m * (1.0 + 1e-12)).collect();
                    for x in within.iter().filter(|x| !r.selected.contains(&x.id)) {
                        prop_assert!(x.capacity as u64 <= smallest);
                    }
                }
                Err(PlacementError::Infeasible { shortfall, .. }) => {
                    let total: f64 = c.iter().map(|x| x.capacity as f64).sum();
                    prop_assert!((2.0 * demand - total - shortfall).abs() < 1e-9);
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn distance_last_ring_is_needed((list, demand) in instance()) {
            let c = zoned(&list);
            if let Ok(r) = distance_based(&c, &one_zone(demand), &km(1000.0)) {
                let z = &r.per_zone[0];
                let last: u64 = c.iter()
                    .filter(|x| z.selected.contains(&x.id) && x.distances_m[0] > z.radius_m - 1000.0)
                    .map(|x| x.capacity as u64)
                    .sum();
                prop_assert!(z.capacity as f64 >= demand);
                prop_assert!(((z.capacity - last) as f64) < demand);
                // every candidate within the final radius is taken
                for x in c.iter().filter(|x| x.distances_m[0] <= z.radius_m) {
                    prop_assert!(z.selected.contains(&x.id));
                }
            }
        }
    }
}
