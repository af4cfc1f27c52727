use rstar::primitives::GeomWithData;
use rstar::RTree;

use super::{NodeId, RoadError, RoadGraph};
use crate::geometry::{distance_m, GeoPoint, EARTH_RADIUS_M};

type IndexedPoint = GeomWithData<[f64; 3], usize>;

/// Earth-centered coordinates; chord length is monotone in arc length,
/// so nearest-by-chord is nearest-by-great-circle.
fn ecef(p: GeoPoint) -> [f64; 3] {
    let (lat, lon) = (p.lat.to_radians(), p.lon.to_radians());
    [EARTH_RADIUS_M * lat.cos() * lon.cos(), EARTH_RADIUS_M * lat.cos() * lon.sin(), EARTH_RADIUS_M * lat.sin()]
}

/// Nearest node by linear scan; ties go to the smaller node id.
pub fn snap(p: GeoPoint, graph: &RoadGraph, max_radius_m: f64) -> Result<NodeId, RoadError> {
    let best = graph
        .nodes()
        .iter()
        .map(|n| (distance_m(p, n.location), n.id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    match best {
        Some((d, id)) if d <= max_radius_m => Ok(id),
        Some((d, _)) => Err(RoadError::Unsnappable { point: None, nearest_m: d }),
        None => Err(RoadError::Unsnappable { point: None, nearest_m: f64::INFINITY }),
    }
}

/// R-tree over graph nodes for repeated snapping.
pub struct SnapIndex<'g> {
    graph: &'g RoadGraph,
    tree: RTree<IndexedPoint>,
}

impl<'g> SnapIndex<'g> {
    pub fn new(graph: &'g RoadGraph) -> Self {
        let items = graph.nodes().iter().enumerate().map(|(i, n)| IndexedPoint::new(ecef(n.location), i)).collect();
        SnapIndex { graph, tree: RTree::bulk_load(items) }
    }

    /// Dense index and distance of the nearest node; ties go to the smaller id.
    fn nearest(&self, p: GeoPoint) -> Option<(usize, f64)> {
        let q = ecef(p);
        let mut iter = self.tree.nearest_neighbor_iter_with_distance_2(q);
        let (first, d2) = iter.next()?;
        let mut best = first.data;
        for (item, d) in iter {
            if d > d2 {
                break;
            }
            if self.graph.nodes()[item.data].id < self.graph.nodes()[best].id {
                best = item.data;
            }
        }
        Some((best, distance_m(p, self.graph.nodes()[best].location)))
    }

    pub(crate) fn snap_index(&self, p: GeoPoint, max_radius_m: f64) -> Result<usize, RoadError> {
        match self.nearest(p) {
            Some((i, d)) if d <= max_radius_m => Ok(i),
            Some((_, d)) => Err(RoadError::Unsnappable { point: None, nearest_m: d }),
            None => Err(RoadError::Unsnappable { point: None, nearest_m: f64::INFINITY }),
        }
    }

    pub fn snap(&self, p: GeoPoint, max_radius_m: f64) -> Result<NodeId, RoadError> {
        self.snap_index(p, max_radius_m).map(|i| self.graph.nodes()[i].id)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{line_graph, ORIGIN};
    use super::*;
    use crate::geometry::LocalFrame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coincident_point_snaps_to_its_node() {
        let g = line_graph(5, 50.0);
        let p = g.node(3).unwrap().location;
        assert_eq!(snap(p, &g, 5000.0).unwrap(), 3);
        assert_eq!(SnapIndex::new(&g).snap(p, 5000.0).unwrap(), 3);
    }

    #[test]
    fn nearer_node_wins() {
        let g = line_graph(2, 50.0);
        let frame = LocalFrame::new(ORIGIN);
        // 10 m from node 0, ~990 m from node 1
        let p = frame.unproject([10.0, 0.0]);
        assert_eq!(snap(p, &g, 5000.0).unwrap(), 0);
    }

    #[test]
    fn isolated_point_is_unsnappable() {
        let g = line_graph(2, 50.0);
        let p = LocalFrame::new(ORIGIN).unproject([-8000.0, 0.0]);
        match snap(p, &g, 5000.0) {
            Err(RoadError::Unsnappable { nearest_m, .. }) => assert!((nearest_m - 8000.0).abs() < 1.0),
            other => panic!("{other:?}"),
        }
        assert!(SnapIndex::new(&g).snap(p, 5000.0).is_err());
    }

    #[test]
    fn index_agrees_with_linear_scan() {
        let g = line_graph(30, 50.0);
        let index = SnapIndex::new(&g);
        let frame = LocalFrame::new(ORIGIN);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = frame.unproject([rng.gen_range(-2000.0..32000.0), rng.gen_range(-3000.0..3000.0)]);
            let a = snap(p, &g, 1e7).unwrap();
            let b = index.snap(p, 1e7).unwrap();
            let da = distance_m(p, g.node(a).unwrap().location);
            let db = distance_m(p, g.node(b).unwrap().location);
            assert!((da - db).abs() < 1e-6, "{a} {b}");
        }
    }
}
