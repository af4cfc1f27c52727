use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;

use rayon::prelude::*;

use super::{NodeId, RoadError, RoadGraph, SnapIndex};
use crate::geometry::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored(f64, usize);

impl Eq for Scored {}

impl Ord for Scored {
    // reversed for a min-heap; ties broken by node index
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    /// Times from the sources to every node.
    Forward,
    /// Times from every node to the nearest source.
    Reverse,
}

impl RoadGraph {
    fn check_times(&self) -> Result<(), RoadError> {
        match self.edges.iter().find(|e| e.travel_min.is_none()) {
            Some(e) => Err(RoadError::RejectedEdge { edge: e.id.clone(), reason: "travel time not derived".into() }),
            None => Ok(()),
        }
    }

    /// Binary-heap Dijkstra over dense node indices. Nodes farther than
    /// `cutoff` stay at infinity.
    pub(crate) fn dijkstra(&self, sources: &[usize], cutoff: f64, dir: Direction) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s] = 0.0;
            heap.push(Scored(0.0, s));
        }
        while let Some(Scored(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            let incident = match dir {
                Direction::Forward => self.out_edges(u),
                Direction::Reverse => self.in_edges(u),
            };
            for &ei in incident {
                let e = &self.edges[ei];
                let next = match dir {
                    Direction::Forward => e.to,
                    Direction::Reverse => e.from,
                };
                let v = self.node_index[&next];
                let nd = d + e.travel_min.unwrap_or(f64::INFINITY);
                if nd < dist[v] && nd <= cutoff {
                    dist[v] = nd;
                    heap.push(Scored(nd, v));
                }
            }
        }
        dist
    }

    /// Minutes from each node to its nearest node in `targets`, following
    /// edge directions. Unreachable nodes are infinite.
    pub(crate) fn minutes_to_nearest(&self, targets: &[usize]) -> Result<Vec<f64>, RoadError> {
        self.check_times()?;
        Ok(self.dijkstra(targets, f64::INFINITY, Direction::Reverse))
    }
}

/// Exact shortest travel time from `source` to every node reachable within
/// `cutoff` minutes (inclusive). Unreached nodes are absent.
pub fn sssp_minutes(graph: &RoadGraph, source: NodeId, cutoff: f64) -> Result<HashMap<NodeId, f64>, RoadError> {
    if !(cutoff > 0.0) {
        return Err(RoadError::InvalidInput(format!("cutoff must be positive, got {cutoff}")));
    }
    let s = graph.index_of(source).ok_or(RoadError::UnknownSource(source))?;
    graph.check_times()?;
    let dist = graph.dijkstra(&[s], cutoff, Direction::Forward);
    Ok(dist.iter().enumerate().filter(|(_, d)| d.is_finite()).map(|(i, d)| (graph.nodes[i].id, *d)).collect())
}

/// Sparse origin × destination matrix of minutes. Row entries are sorted
/// by destination index and only present within the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelMatrix {
    origin_ids: Vec<String>,
    dest_ids: Vec<String>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TravelMatrix {
    pub fn new(origin_ids: Vec<String>, dest_ids: Vec<String>, mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(origin_ids.len(), rows.len(), "one row per origin");
        for row in &mut rows {
            row.sort_by_key(|(j, _)| *j);
        }
        TravelMatrix { origin_ids, dest_ids, rows }
    }

    pub fn origin_ids(&self) -> &[String] {
        &self.origin_ids
    }

    pub fn dest_ids(&self) -> &[String] {
        &self.dest_ids
    }

    pub fn row(&self, origin: usize) -> &[(usize, f64)] {
        &self.rows[origin]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn get(&self, origin: usize, dest: usize) -> Option<f64> {
        let row = &self.rows[origin];
        row.binary_search_by_key(&dest, |(j, _)| *j).ok().map(|k| row[k].1)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Keeps only the listed destination columns, renumbered in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> TravelMatrix {
        let remap: HashMap<usize, usize> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let rows = self
            .rows
            .iter()
            .map(|row| row.iter().filter_map(|(j, t)| remap.get(j).map(|&nj| (nj, *t))).collect())
            .collect();
        TravelMatrix::new(self.origin_ids.clone(), keep.iter().map(|&j| self.dest_ids[j].clone()).collect(), rows)
    }

    /// Writes `origin_id,dest_id,minutes` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["origin_id", "dest_id", "minutes"])?;
        for (i, row) in self.rows.iter().enumerate() {
            for (j, t) in row {
                out.write_record([&self.origin_ids[i], &self.dest_ids[*j], &t.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn snap_all(index: &SnapIndex, points: &[(String, GeoPoint)], radius: f64) -> Result<Vec<usize>, RoadError> {
    points
        .iter()
        .map(|(id, p)| {
            index.snap_index(*p, radius).map_err(|e| match e {
                RoadError::Unsnappable { nearest_m, .. } => {
                    RoadError::Unsnappable { point: Some(id.clone()), nearest_m }
                }
                other => other,
            })
        })
        .collect()
}

/// Travel-time matrix between snapped origins and destinations.
///
/// Runs one bounded Dijkstra per distinct origin node, or per distinct
/// destination node on the reversed graph when there are fewer of those.
pub fn travel_matrix(
    graph: &RoadGraph,
    origins: &[(String, GeoPoint)],
    destinations: &[(String, GeoPoint)],
    cutoff: f64,
    snap_radius_m: f64,
) -> Result<TravelMatrix, RoadError> {
    let index = SnapIndex::new(graph);
    travel_matrix_with(graph, &index, origins, destinations, cutoff, snap_radius_m)
}

pub(crate) fn travel_matrix_with(
    graph: &RoadGraph,
    index: &SnapIndex,
    origins: &[(String, GeoPoint)],
    destinations: &[(String, GeoPoint)],
    cutoff: f64,
    snap_radius_m: f64,
) -> Result<TravelMatrix, RoadError> {
    if !(cutoff > 0.0) {
        return Err(RoadError::InvalidInput(format!("cutoff must be positive, got {cutoff}")));
    }
    graph.check_times()?;
    let o_nodes = snap_all(index, origins, snap_radius_m)?;
    let d_nodes = snap_all(index, destinations, snap_radius_m)?;
    let rows = matrix_rows(graph, &o_nodes, &d_nodes, cutoff);
    Ok(TravelMatrix::new(
        origins.iter().map(|(id, _)| id.clone()).collect(),
        destinations.iter().map(|(id, _)| id.clone()).collect(),
        rows,
    ))
}

fn distinct(nodes: &[usize]) -> Vec<usize> {
    let mut v = nodes.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

pub(crate) fn matrix_rows(
    graph: &RoadGraph,
    o_nodes: &[usize],
    d_nodes: &[usize],
    cutoff: f64,
) -> Vec<Vec<(usize, f64)>> {
    let o_distinct = distinct(o_nodes);
    let d_distinct = distinct(d_nodes);
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); o_nodes.len()];
    if d_distinct.len() < o_distinct.len() {
        let runs: Vec<(usize, Vec<f64>)> =
            d_distinct.par_iter().map(|&d| (d, graph.dijkstra(&[d], cutoff, Direction::Reverse))).collect();
        let by_node: HashMap<usize, &Vec<f64>> = runs.iter().map(|(n, v)| (*n, v)).collect();
        for (j, d) in d_nodes.iter().enumerate() {
            let dist = by_node[d];
            for (i, o) in o_nodes.iter().enumerate() {
                if dist[*o].is_finite() {
                    rows[i].push((j, dist[*o]));
                }
            }
        }
    } else {
        let runs: Vec<(usize, Vec<f64>)> =
            o_distinct.par_iter().map(|&o| (o, graph.dijkstra(&[o], cutoff, Direction::Forward))).collect();
        let by_node: HashMap<usize, &Vec<f64>> = runs.iter().map(|(n, v)| (*n, v)).collect();
        for (i, o) in o_nodes.iter().enumerate() {
            let dist = by_node[o];
            rows[i] =
                d_nodes.iter().enumerate().filter(|(_, d)| dist[**d].is_finite()).map(|(j, d)| (j, dist[*d])).collect();
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::super::tests::{edge, line_graph, ORIGIN};
    use super::super::RoadNode;
    use super::*;
    use crate::geometry::LocalFrame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Graph with explicit per-edge minutes.
    fn timed_graph(n: usize, arcs: &[(usize, usize, f64)]) -> RoadGraph {
        let frame = LocalFrame::new(ORIGIN);
        let nodes = (0..n)
            .map(|i| RoadNode {
                id: i as i64,
                location: frame.unproject([(i % 10) as f64 * 500.0, (i / 10) as f64 * 500.0]),
            })
            .collect();
        let edges = arcs
            .iter()
            .enumerate()
            .map(|(k, &(u, v, minutes))| {
                let mut e = edge(&k.to_string(), u as i64, v as i64, minutes * 1000.0, "x", Some(60.0));
                e.travel_min = Some(minutes);
                e
            })
            .collect();
        RoadGraph::new(nodes, edges).unwrap()
    }

    fn floyd_warshall(n: usize, arcs: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for &(u, v, w) in arcs {
            d[u][v] = d[u][v].min(w);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    #[test]
    fn single_edge() {
        let g = timed_graph(2, &[(0, 1, 3.0)]);
        let m = sssp_minutes(&g, 0, 100.0).unwrap();
        assert_eq!(m, HashMap::from([(0, 0.0), (1, 3.0)]));
    }

    #[test]
    fn triangle_prefers_two_hops() {
        let g = timed_graph(3, &[(0, 1, 5.0), (1, 2, 5.0), (0, 2, 12.0)]);
        assert_eq!(sssp_minutes(&g, 0, 100.0).unwrap()[&2], 10.0);
        assert_eq!(sssp_minutes(&g, 0, 4.0).unwrap(), HashMap::from([(0, 0.0)]));
        let fw = floyd_warshall(3, &[(0, 1, 5.0), (1, 2, 5.0), (0, 2, 12.0)]);
        assert_eq!(fw[0][2], 10.0);
    }

    #[test]
    fn sssp_errors() {
        let g = timed_graph(2, &[(0, 1, 3.0)]);
        assert!(matches!(sssp_minutes(&g, 7, 10.0), Err(RoadError::UnknownSource(7))));
        assert!(sssp_minutes(&g, 0, 0.0).is_err());
    }

    #[test]
    fn matches_floyd_warshall_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.gen_range(2..30);
            let m = rng.gen_range(0..n * 4);
            let arcs: Vec<(usize, usize, f64)> = (0..m)
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(1..20) as f64))
                .filter(|(u, v, _)| u != v)
                .collect();
            let g = timed_graph(n, &arcs);
            let fw = floyd_warshall(n, &arcs);
            let cutoff = rng.gen_range(5.0..80.0);
            for (s, row) in fw.iter().enumerate() {
                let got = sssp_minutes(&g, s as i64, cutoff).unwrap();
                for (t, &want) in row.iter().enumerate() {
                    match got.get(&(t as i64)) {
                        Some(d) => assert_eq!(*d, want),
                        None => assert!(want > cutoff),
                    }
                }
            }
        }
    }

    #[test]
    fn matrix_matches_pairwise_dijkstra() {
        let g = line_graph(8, 30.0);
        let loc = |i: i64| g.node(i).unwrap().location;
        let origins: Vec<(String, GeoPoint)> = [0, 3, 7].iter().map(|&i| (format!("o{i}"), loc(i))).collect();
        let dests: Vec<(String, GeoPoint)> = [1, 6].iter().map(|&i| (format!("d{i}"), loc(i))).collect();
        let m = travel_matrix(&g, &origins, &dests, 1000.0, 5000.0).unwrap();
        for (i, o) in [0, 3, 7].iter().enumerate() {
            let single = sssp_minutes(&g, *o, 1000.0).unwrap();
            for (j, d) in [1, 6].iter().enumerate() {
                assert_eq!(m.get(i, j), single.get(d).copied());
            }
        }
        // the reverse-direction path (more origins than destinations) agrees
        // with forward runs
        let forward = matrix_rows(&g, &[0, 3, 7], &[1, 6, 2, 4], 1000.0);
        let reverse = matrix_rows(&g, &[0, 3, 7, 5, 2], &[1, 6], 1000.0);
        for i in 0..3 {
            for &(j, t) in &reverse[i] {
                assert_eq!(forward[i].iter().find(|(k, _)| *k == j).map(|x| x.1), Some(t));
            }
        }
    }

    #[test]
    fn matrix_zero_diagonal_and_cutoff() {
        let g = line_graph(5, 60.0);
        let p = g.node(2).unwrap().location;
        let m = travel_matrix(&g, &[("a".into(), p)], &[("b".into(), p)], 10.0, 100.0).unwrap();
        assert_eq!(m.get(0, 0), Some(0.0));
        let far = g.node(4).unwrap().location;
        let m =
            travel_matrix(&g, &[("a".into(), g.node(0).unwrap().location)], &[("b".into(), far)], 3.0, 100.0).unwrap();
        assert!(m.row(0).is_empty());
    }

    #[test]
    fn matrix_reports_unsnappable_point() {
        let g = line_graph(3, 60.0);
        let frame = LocalFrame::new(ORIGIN);
        let far = frame.unproject([0.0, 8000.0]);
        let err = travel_matrix(&g, &[("cell-9".into(), far)], &[], 10.0, 5000.0).unwrap_err();
        match err {
            RoadError::Unsnappable { point, nearest_m } => {
                assert_eq!(point.as_deref(), Some("cell-9"));
                assert!(nearest_m > 7900.0);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn matrix_csv_export() {
        let m = TravelMatrix::new(vec!["a".into()], vec!["x".into(), "y".into()], vec![vec![(1, 2.5), (0, 1.0)]]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "origin_id,dest_id,minutes\na,x,1\na,y,2.5\n");
        let sub = m.select_columns(&[1]);
        assert_eq!(sub.row(0), &[(0, 2.5)]);
    }
}
