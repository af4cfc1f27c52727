use geo::algorithm::buffer::{Buffer, BufferStyle, LineJoin};
use geo::{Area, Coord, LineString, Polygon};

use super::{polygon_contains, ring_signed_area, segments_intersect, GeoError, GeoPoint, GeoPolygon, EARTH_RADIUS_M};

/// Largest gap allowed between a rounded buffer corner and the true circle.
const MAX_ARC_SAGITTA_M: f64 = 0.25;

/// Spherical azimuthal-equidistant projection around `origin`.
///
/// Distances and azimuths from the origin are exact; at county scale the
/// distortion elsewhere is far below a meter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    origin: GeoPoint,
    scale: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        LocalFrame { origin, scale: 1.0 }
    }

    /// Frame centered on the bounding box of `points`.
    pub fn centered_on<'a>(points: impl IntoIterator<Item = &'a GeoPoint>) -> Option<Self> {
        let mut it = points.into_iter().peekable();
        it.peek()?;
        let (mut lo_lon, mut lo_lat) = (f64::INFINITY, f64::INFINITY);
        let (mut hi_lon, mut hi_lat) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in it {
            lo_lon = lo_lon.min(p.lon);
            lo_lat = lo_lat.min(p.lat);
            hi_lon = hi_lon.max(p.lon);
            hi_lat = hi_lat.max(p.lat);
        }
        Some(LocalFrame::new(GeoPoint { lon: (lo_lon + hi_lon) / 2.0, lat: (lo_lat + hi_lat) / 2.0 }))
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    /// Meters per projected unit.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn project(&self, p: GeoPoint) -> [f64; 2] {
        let (phi0, lambda0) = (self.origin.lat.to_radians(), self.origin.lon.to_radians());
        let (phi, lambda) = (p.lat.to_radians(), p.lon.to_radians());
        let dl = lambda - lambda0;
        let east = phi.cos() * dl.sin();
        let north = phi0.cos() * phi.sin() - phi0.sin() * phi.cos() * dl.cos();
        let up = phi0.sin() * phi.sin() + phi0.cos() * phi.cos() * dl.cos();
        let sin_c = east.hypot(north);
        if sin_c == 0.0 {
            return [0.0, 0.0];
        }
        let c = sin_c.atan2(up);
        let k = EARTH_RADIUS_M * c / sin_c / self.scale;
        [k * east, k * north]
    }

    pub fn unproject(&self, xy: [f64; 2]) -> GeoPoint {
        let (x, y) = (xy[0] * self.scale, xy[1] * self.scale);
        let rho = x.hypot(y);
        if rho == 0.0 {
            return self.origin;
        }
        let (phi0, lambda0) = (self.origin.lat.to_radians(), self.origin.lon.to_radians());
        let c = rho / EARTH_RADIUS_M;
        let (sin_c, cos_c) = c.sin_cos();
        let phi = (cos_c * phi0.sin() + y * sin_c * phi0.cos() / rho).clamp(-1.0, 1.0).asin();
        let lambda = lambda0 + (x * sin_c).atan2(rho * phi0.cos() * cos_c - y * phi0.sin() * sin_c);
        let mut lon = lambda.to_degrees();
        if lon > 180.0 {
            lon -= 360.0;
        } else if lon < -180.0 {
            lon += 360.0;
        }
        GeoPoint { lon, lat: phi.to_degrees() }
    }

    pub fn project_polygon(&self, poly: &GeoPolygon) -> PlanarPolygon {
        let ring = |r: &[GeoPoint]| r.iter().map(|p| self.project(*p)).collect::<Vec<_>>();
        PlanarPolygon::new(ring(poly.exterior()), poly.holes().iter().map(|h| ring(h)).collect())
    }

    pub fn project_path(&self, path: &[GeoPoint]) -> Vec<[f64; 2]> {
        path.iter().map(|p| self.project(*p)).collect()
    }
}

/// A polygon in local planar meters, used for metric predicates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarPolygon {
    exterior: Vec<[f64; 2]>,
    holes: Vec<Vec<[f64; 2]>>,
    bbox: [f64; 4],
}

impl PlanarPolygon {
    pub fn new(exterior: Vec<[f64; 2]>, holes: Vec<Vec<[f64; 2]>>) -> Self {
        let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in &exterior {
            bbox[0] = bbox[0].min(p[0]);
            bbox[1] = bbox[1].min(p[1]);
            bbox[2] = bbox[2].max(p[0]);
            bbox[3] = bbox[3].max(p[1]);
        }
        PlanarPolygon { exterior, holes, bbox }
    }

    pub fn exterior(&self) -> &[[f64; 2]] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<[f64; 2]>] {
        &self.holes
    }

    pub fn area(&self) -> f64 {
        ring_signed_area(&self.exterior).abs() - self.holes.iter().map(|h| ring_signed_area(h).abs()).sum::<f64>()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        if !self.bbox_contains(p) {
            return false;
        }
        polygon_contains(&self.exterior, &self.holes, p)
    }

    fn bbox_contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.bbox[0] && p[0] <= self.bbox[2] && p[1] >= self.bbox[1] && p[1] <= self.bbox[3]
    }

    fn rings(&self) -> impl Iterator<Item = &[[f64; 2]]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    /// Whether the closed segment `a`-`b` shares any point with the polygon.
    pub fn intersects_segment(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        if a[0].max(b[0]) < self.bbox[0]
            || a[0].min(b[0]) > self.bbox[2]
            || a[1].max(b[1]) < self.bbox[1]
            || a[1].min(b[1]) > self.bbox[3]
        {
            return false;
        }
        if self.contains(a) || self.contains(b) {
            return true;
        }
        // both endpoints outside: the segment meets the polygon only by
        // crossing one of its rings
        self.rings().any(|ring| ring.windows(2).any(|w| segments_intersect(a, b, w[0], w[1])))
    }

    pub fn intersects_path(&self, path: &[[f64; 2]]) -> bool {
        match path {
            [] => false,
            [p] => self.contains(*p),
            _ => path.windows(2).any(|w| self.intersects_segment(w[0], w[1])),
        }
    }

    /// Euclidean distance from `p` to the polygon; zero inside or on the boundary.
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        self.rings()
            .flat_map(|ring| ring.windows(2).map(move |w| point_segment_distance(p, w[0], w[1])))
            .fold(f64::INFINITY, f64::min)
    }

    fn to_geo(&self) -> Polygon<f64> {
        let ls = |r: &[[f64; 2]]| LineString::from(r.iter().map(|p| Coord { x: p[0], y: p[1] }).collect::<Vec<_>>());
        Polygon::new(ls(&self.exterior), self.holes.iter().map(|h| ls(h)).collect())
    }
}

pub(crate) fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    (p[0] - cx).hypot(p[1] - cy)
}

/// Outward buffer by `dist_m` meters in a frame centered on the polygon.
pub fn buffer(poly: &GeoPolygon, dist_m: f64) -> Result<GeoPolygon, GeoError> {
    let frame = LocalFrame::centered_on(poly.exterior()).expect("valid polygon has vertices");
    buffer_in(&frame, poly, dist_m)
}

/// Outward buffer computed in the given planar frame.
pub fn buffer_in(frame: &LocalFrame, poly: &GeoPolygon, dist_m: f64) -> Result<GeoPolygon, GeoError> {
    if !(dist_m >= 0.0) || !dist_m.is_finite() {
        return Err(GeoError::NegativeDistance(dist_m));
    }
    if dist_m == 0.0 {
        return Ok(poly.clone());
    }
    let planar = frame.project_polygon(poly);
    let dist = dist_m / frame.scale();
    let step = arc_step(dist_m);
    let style = BufferStyle::new(dist).line_join(LineJoin::Round(step));
    let out = planar.to_geo().buffer_with_style(style);
    let largest =
        out.0.into_iter().max_by(|a, b| a.unsigned_area().total_cmp(&b.unsigned_area())).ok_or_else(|| {
            GeoError::InvalidPolygon { tag: poly.tag().to_string(), reason: "buffer produced no geometry".to_string() }
        })?;
    let ring = |ls: &LineString<f64>| {
        let mut pts: Vec<GeoPoint> = ls.0.iter().map(|c| frame.unproject([c.x, c.y])).collect();
        if pts.first() != pts.last() {
            pts.push(pts[0]);
        }
        pts
    };
    let (ext, interiors) = largest.into_inner();
    Ok(GeoPolygon::from_parts_unchecked(ring(&ext), interiors.iter().map(ring).collect(), poly.tag().to_string()))
}

/// Angular step whose chord stays within `MAX_ARC_SAGITTA_M` of the arc.
fn arc_step(radius_m: f64) -> f64 {
    let ratio = (1.0 - MAX_ARC_SAGITTA_M / radius_m).clamp(-1.0, 1.0);
    (2.0 * ratio.acos()).clamp(0.005, 0.2)
}

#[cfg(test)]
mod tests {
    use super::super::{distance_m, point_in_polygon};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const ORIGIN: GeoPoint = GeoPoint { lon: -118.3, lat: 34.1 };

    fn square_m(frame: &LocalFrame, x0: f64, y0: f64, side: f64) -> GeoPolygon {
        let ring = [[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side], [x0, y0]]
            .iter()
            .map(|xy| frame.unproject(*xy))
            .collect();
        GeoPolygon::new(ring, vec![], "sq").unwrap()
    }

    #[test]
    fn round_trip_within_a_meter_at_200km() {
        let frame = LocalFrame::new(ORIGIN);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let r = rng.gen_range(0.0..200_000.0);
            let a = rng.gen_range(0.0..2.0 * PI);
            let xy = [r * a.cos(), r * a.sin()];
            let p = frame.unproject(xy);
            let back = frame.project(p);
            assert!((back[0] - xy[0]).hypot(back[1] - xy[1]) < 1.0);
            // radial distances are preserved by construction
            assert!((distance_m(ORIGIN, p) - r).abs() < 1e-3 * r.max(1.0));
        }
    }

    #[test]
    fn buffer_zero_is_identity() {
        let frame = LocalFrame::new(ORIGIN);
        let sq = square_m(&frame, 0.0, 0.0, 1000.0);
        assert_eq!(buffer(&sq, 0.0).unwrap(), sq);
    }

    #[test]
    fn buffer_rejects_negative_distance() {
        let frame = LocalFrame::new(ORIGIN);
        let sq = square_m(&frame, 0.0, 0.0, 1000.0);
        assert!(matches!(buffer(&sq, -1.0), Err(GeoError::NegativeDistance(_))));
    }

    #[test]
    fn buffered_square_matches_rounded_rectangle_area() {
        let frame = LocalFrame::new(ORIGIN);
        let sq = square_m(&frame, -500.0, -500.0, 1000.0);
        let out = buffer_in(&frame, &sq, 1000.0).unwrap();
        let area = frame.project_polygon(&out).area();
        let expected = 1e6 + 4.0 * 1000.0 * 1000.0 + PI * 1000.0 * 1000.0;
        assert!((area - expected).abs() / expected < 0.01, "{area} vs {expected}");
    }

    #[test]
    fn buffer_keeps_clearance_from_input_boundary() {
        let frame = LocalFrame::new(ORIGIN);
        let sq = square_m(&frame, -500.0, -500.0, 1000.0);
        let dist = 5000.0;
        let out = frame.project_polygon(&buffer_in(&frame, &sq, dist).unwrap());
        let input = frame.project_polygon(&sq);
        for p in input.exterior() {
            let gap =
                out.exterior().windows(2).map(|w| point_segment_distance(*p, w[0], w[1])).fold(f64::INFINITY, f64::min);
            assert!(gap >= dist - 1.0, "gap {gap}");
        }
    }

    #[test]
    fn buffer_is_monotone() {
        let frame = LocalFrame::new(ORIGIN);
        let sq = square_m(&frame, 0.0, 0.0, 800.0);
        let small = buffer_in(&frame, &sq, 1000.0).unwrap();
        let large = buffer_in(&frame, &sq, 5000.0).unwrap();
        for p in small.exterior() {
            assert!(point_in_polygon(*p, &large));
        }
        for p in sq.exterior() {
            assert!(point_in_polygon(*p, &small));
        }
        let mut last = 0.0;
        for d in [0.0, 100.0, 500.0, 1000.0, 2500.0] {
            let a = frame.project_polygon(&buffer_in(&frame, &sq, d).unwrap()).area();
            assert!(a >= last);
            last = a;
        }
    }

    #[test]
    fn segment_intersection_cases() {
        let poly = PlanarPolygon::new(
            vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0], [0.0, 0.0]],
            vec![vec![[4.0, 4.0], [6.0, 4.0], [6.0, 6.0], [4.0, 6.0], [4.0, 4.0]]],
        );
        assert!(poly.intersects_segment([1.0, 1.0], [2.0, 2.0]));
        assert!(poly.intersects_segment([-5.0, 5.0], [15.0, 5.0]));
        assert!(poly.intersects_segment([-5.0, 5.0], [0.0, 5.0]));
        assert!(!poly.intersects_segment([-5.0, -5.0], [-1.0, 20.0]));
        // entirely within the hole
        assert!(!poly.intersects_segment([4.5, 4.5], [5.5, 5.5]));
        assert_eq!(poly.distance_to([13.0, 14.0]), 5.0);
        assert_eq!(poly.distance_to([5.0, 5.0]), 1.0);
        assert_eq!(poly.distance_to([1.0, 1.0]), 0.0);
    }
}
