//! Geometry primitives shared by the network, demand and placement code.
//!
//! Coordinates are WGS84 degrees. Containment tests run directly on
//! lon/lat; anything metric (buffers, segment/polygon intersection,
//! point-to-polygon distance) goes through a [`LocalFrame`].

mod frame;
mod layers;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use frame::{buffer, buffer_in, LocalFrame, PlanarPolygon};
pub use layers::{read_polygon_layers, write_polygon_layers, LayerKind, LayerPolygon};

/// Mean earth radius used for great-circle distances.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("coordinate out of range: lon {lon}, lat {lat}")]
    InvalidCoordinate { lon: f64, lat: f64 },
    #[error("invalid polygon `{tag}`: {reason}")]
    InvalidPolygon { tag: String, reason: String },
    #[error("buffer distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("failed to read polygon layer: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed GeoJSON: {0}")]
    GeoJson(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        let p = GeoPoint { lon, lat };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(GeoError::InvalidCoordinate { lon, lat })
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }

    fn xy(&self) -> [f64; 2] {
        [self.lon, self.lat]
    }
}

/// Great-circle (haversine) distance in meters.
pub fn distance_m(a: GeoPoint, b: GeoPoint) -> f64 {
    if a == b {
        return 0.0;
    }
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// A validated polygon with optional holes. Rings are closed
/// (first vertex repeated as last).
#[derive(Debug, Clone, PartialEq)]
pub struct GeoPolygon {
    exterior: Vec<GeoPoint>,
    holes: Vec<Vec<GeoPoint>>,
    tag: String,
}

impl GeoPolygon {
    pub fn new(exterior: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>, tag: impl Into<String>) -> Result<Self, GeoError> {
        let tag = tag.into();
        let invalid = |reason: String| GeoError::InvalidPolygon { tag: tag.clone(), reason };
        validate_ring(&exterior).map_err(|r| invalid(format!("exterior: {r}")))?;
        if let Some((a, b)) = first_self_intersection(&exterior) {
            return Err(invalid(format!("exterior self-intersects between segments {a} and {b}")));
        }
        for (i, hole) in holes.iter().enumerate() {
            validate_ring(hole).map_err(|r| invalid(format!("hole {i}: {r}")))?;
        }
        Ok(GeoPolygon { exterior, holes, tag })
    }

    /// Axis-aligned rectangle in lon/lat, counter-clockwise.
    pub fn rect(min: GeoPoint, max: GeoPoint, tag: impl Into<String>) -> Result<Self, GeoError> {
        let ring =
            vec![min, GeoPoint { lon: max.lon, lat: min.lat }, max, GeoPoint { lon: min.lon, lat: max.lat }, min];
        GeoPolygon::new(ring, Vec::new(), tag)
    }

    pub fn exterior(&self) -> &[GeoPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<GeoPoint>] {
        &self.holes
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn bbox(&self) -> (GeoPoint, GeoPoint) {
        let mut min = GeoPoint { lon: f64::INFINITY, lat: f64::INFINITY };
        let mut max = GeoPoint { lon: f64::NEG_INFINITY, lat: f64::NEG_INFINITY };
        for p in &self.exterior {
            min.lon = min.lon.min(p.lon);
            min.lat = min.lat.min(p.lat);
            max.lon = max.lon.max(p.lon);
            max.lat = max.lat.max(p.lat);
        }
        (min, max)
    }

    pub(crate) fn from_parts_unchecked(exterior: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>, tag: String) -> Self {
        GeoPolygon { exterior, holes, tag }
    }
}

fn validate_ring(ring: &[GeoPoint]) -> Result<(), String> {
    if ring.len() < 4 {
        return Err(format!("ring needs at least 4 positions, got {}", ring.len()));
    }
    if let Some(p) = ring.iter().find(|p| !p.is_valid()) {
        return Err(format!("coordinate out of range ({}, {})", p.lon, p.lat));
    }
    if ring.first() != ring.last() {
        return Err("ring is not closed".to_string());
    }
    let xy: Vec<[f64; 2]> = ring.iter().map(GeoPoint::xy).collect();
    if ring_signed_area(&xy) == 0.0 {
        return Err("ring has zero area".to_string());
    }
    Ok(())
}

/// Returns the first pair of non-adjacent segments that touch or cross.
fn first_self_intersection(ring: &[GeoPoint]) -> Option<(usize, usize)> {
    let xy: Vec<[f64; 2]> = ring.iter().map(GeoPoint::xy).collect();
    let n = xy.len() - 1;
    for i in 0..n {
        for j in (i + 2)..n {
            // first and last segments share the closing vertex
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(xy[i], xy[i + 1], xy[j], xy[j + 1]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Containment with boundary counted as inside; `p` inside a hole is outside.
pub fn point_in_polygon(p: GeoPoint, poly: &GeoPolygon) -> bool {
    let xy = p.xy();
    let ext: Vec<[f64; 2]> = poly.exterior.iter().map(GeoPoint::xy).collect();
    let holes: Vec<Vec<[f64; 2]>> = poly.holes.iter().map(|h| h.iter().map(GeoPoint::xy).collect()).collect();
    polygon_contains(&ext, &holes, xy)
}

pub(crate) fn polygon_contains(ext: &[[f64; 2]], holes: &[Vec<[f64; 2]>], p: [f64; 2]) -> bool {
    match locate_in_ring(ext, p) {
        Location::Outside => false,
        Location::Boundary => true,
        Location::Inside => holes.iter().all(|h| locate_in_ring(h, p) != Location::Inside),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Location {
    Inside,
    Boundary,
    Outside,
}

/// Winding-number point location against a closed ring.
pub(crate) fn locate_in_ring(ring: &[[f64; 2]], p: [f64; 2]) -> Location {
    let mut winding = 0i64;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if on_segment(a, b, p) {
            return Location::Boundary;
        }
        let side = cross(a, b, p);
        if a[1] <= p[1] {
            if b[1] > p[1] && side > 0.0 {
                winding += 1;
            }
        } else if b[1] <= p[1] && side < 0.0 {
            winding -= 1;
        }
    }
    if winding != 0 {
        Location::Inside
    } else {
        Location::Outside
    }
}

pub(crate) fn cross(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let tol = BOUNDARY_EPS;
    cross(a, b, p).abs() <= tol * len
        && p[0] >= a[0].min(b[0]) - tol
        && p[0] <= a[0].max(b[0]) + tol
        && p[1] >= a[1].min(b[1]) - tol
        && p[1] <= a[1].max(b[1]) + tol
}

/// Closed-segment intersection test (touching counts).
pub(crate) fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && within_box(c, d, a))
        || (d2 == 0.0 && within_box(c, d, b))
        || (d3 == 0.0 && within_box(a, b, c))
        || (d4 == 0.0 && within_box(a, b, d))
}

fn within_box(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

pub(crate) fn ring_signed_area(ring: &[[f64; 2]]) -> f64 {
    ring.windows(2).map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1]).sum::<f64>() / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint::new(lon, lat).unwrap()
    }

    fn unit_square() -> GeoPolygon {
        GeoPolygon::rect(pt(0.0, 0.0), pt(1.0, 1.0), "square").unwrap()
    }

    fn annulus() -> GeoPolygon {
        let outer = vec![pt(0.0, 0.0), pt(4.0, 0.0), pt(4.0, 4.0), pt(0.0, 4.0), pt(0.0, 0.0)];
        let hole = vec![pt(1.0, 1.0), pt(1.0, 3.0), pt(3.0, 3.0), pt(3.0, 1.0), pt(1.0, 1.0)];
        GeoPolygon::new(outer, vec![hole], "annulus").unwrap()
    }

    fn star() -> GeoPolygon {
        let mut ring: Vec<GeoPoint> = (0..10)
            .map(|i| {
                let r = if i % 2 == 0 { 1.0 } else { 0.4 };
                let a = std::f64::consts::TAU * i as f64 / 10.0;
                pt(r * a.cos(), r * a.sin())
            })
            .collect();
        ring.push(ring[0]);
        GeoPolygon::new(ring, vec![], "star").unwrap()
    }

    /// Even-odd ray casting, independent of the winding-number path.
    fn ray_cast(p: GeoPoint, poly: &GeoPolygon) -> bool {
        fn crossings(ring: &[GeoPoint], p: GeoPoint) -> bool {
            let mut inside = false;
            for w in ring.windows(2) {
                let (a, b) = (w[0], w[1]);
                if (a.lat > p.lat) != (b.lat > p.lat) {
                    let x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
                    if p.lon < x {
                        inside = !inside;
                    }
                }
            }
            inside
        }
        crossings(poly.exterior(), p) && !poly.holes().iter().any(|h| crossings(h, p))
    }

    #[test]
    fn center_of_unit_square_is_inside() {
        assert!(point_in_polygon(pt(0.5, 0.5), &unit_square()));
    }

    #[test]
    fn far_point_is_outside() {
        assert!(!point_in_polygon(pt(2.0, 2.0), &unit_square()));
    }

    #[test]
    fn hole_interior_is_outside() {
        let a = annulus();
        assert!(!point_in_polygon(pt(2.0, 2.0), &a));
        assert!(point_in_polygon(pt(0.5, 2.0), &a));
    }

    #[test]
    fn boundary_counts_as_inside() {
        let sq = unit_square();
        assert!(point_in_polygon(pt(1.0, 0.5), &sq));
        assert!(point_in_polygon(pt(0.0, 0.0), &sq));
        assert!(point_in_polygon(pt(1.0, 2.0), &annulus()));
    }

    #[test]
    fn agrees_with_ray_casting() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for poly in [unit_square(), annulus(), star()] {
            let (min, max) = poly.bbox();
            for _ in 0..1000 {
                let p = pt(rng.gen_range(min.lon - 0.5..max.lon + 0.5), rng.gen_range(min.lat - 0.5..max.lat + 0.5));
                assert_eq!(point_in_polygon(p, &poly), ray_cast(p, &poly), "{p:?} vs {}", poly.tag());
            }
        }
    }

    #[test]
    fn rejects_invalid_polygons() {
        let open = vec![pt(0.0, 0.0), pt(1.0, 0.0), pt(1.0, 1.0), pt(0.0, 1.0)];
        assert!(GeoPolygon::new(open, vec![], "open").is_err());
        let bowtie = vec![pt(0.0, 0.0), pt(1.0, 1.0), pt(1.0, 0.0), pt(0.0, 1.0), pt(0.0, 0.0)];
        assert!(GeoPolygon::new(bowtie, vec![], "bowtie").is_err());
        let flat = vec![pt(0.0, 0.0), pt(1.0, 0.0), pt(2.0, 0.0), pt(0.0, 0.0)];
        assert!(GeoPolygon::new(flat, vec![], "flat").is_err());
        assert!(GeoPoint::new(181.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -91.0).is_err());
    }

    #[test]
    fn distance_identity_and_one_degree() {
        let a = pt(10.0, 45.0);
        assert_eq!(distance_m(a, a), 0.0);
        let d = distance_m(pt(0.0, 0.0), pt(0.0, 1.0));
        assert!((d - 111_195.0).abs() / 111_195.0 < 0.005, "{d}");
    }

    #[test]
    fn distance_is_a_metric_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sample = || pt(rng.gen_range(-180.0..180.0), rng.gen_range(-90.0..90.0));
        for _ in 0..1000 {
            let (a, b, c) = (sample(), sample(), sample());
            assert_eq!(distance_m(a, b), distance_m(b, a));
            assert!(distance_m(a, b) > 0.0);
            assert!(distance_m(a, c) <= distance_m(a, b) + distance_m(b, c) + 1e-6);
        }
    }
}
