//! Segment clustering: pairwise DTW, mutual kNN graph, connected components.

mod dtw;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{read_matrix, write_matrix, FrontendError, MatrixHeader};

pub use dtw::{dtw_distance, dtw_distance_banded, pairwise_distances};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("empty feature sequence")]
    EmptySequence,
    #[error("feature dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("unknown cluster {0}")]
    UnknownCluster(usize),
    #[error("distance matrix is not square")]
    NotSquare,
}

impl GraphError {
    pub fn category(&self) -> &'static str {
        match self {
            GraphError::EmptySequence => "EmptySequence",
            GraphError::DimensionMismatch { .. } => "DimensionMismatch",
            GraphError::UnknownCluster(_) => "UnknownCluster",
            GraphError::NotSquare => "NotSquare",
        }
    }
}

/// Symmetric n x n matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Panics if `d.len() != n * n`.
    pub fn from_flat(n: usize, d: Vec<f64>) -> Self {
        assert_eq!(d.len(), n * n);
        Self { n, d }
    }

    /// Distances between 1-D points, `|p_i - p_j|`.
    pub fn from_points(points: &[f64]) -> Self {
        let n = points.len();
        let d = (0..n * n).map(|k| (points[k / n] - points[k % n]).abs()).collect();
        Self { n, d }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// Same binary container as feature matrices, with zero frame geometry.
    pub fn write_binary<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let h = MatrixHeader { rows: self.n, cols: self.n, frame_shift: 0.0, frame_len: 0.0 };
        write_matrix(w, &h, &self.d)
    }

    pub fn read_binary<R: std::io::Read>(r: R) -> Result<Self, FrontendError> {
        let (h, d) = read_matrix(r)?;
        if h.rows != h.cols {
            return Err(FrontendError::CorruptFile("distance matrix is not square".into()));
        }
        Ok(Self { n: h.rows, d })
    }
}

/// Undirected graph as a set of `(i, j)` pairs with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    pub n: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

impl NeighborGraph {
    pub fn new(n: usize) -> Self {
        Self { n, edges: BTreeSet::new() }
    }

    /// Ignores self-loops; stores the pair in canonical order.
    pub fn add_edge(&mut self, i: usize, j: usize) {
        if i != j {
            self.edges.insert((i.min(j), i.max(j)));
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }
}

/// Indices of the `k` nearest nodes to `x` (excluding `x`), ties to lower index.
pub fn k_nearest(d: &DistanceMatrix, x: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..d.n()).filter(|&j| j != x).collect();
    others.sort_by(|&a, &b| d.get(x, a).total_cmp(&d.get(x, b)).then(a.cmp(&b)));
    others.truncate(k);
    others
}

/// Edge `(i, j)` iff each is among the other's `k` nearest neighbours.
pub fn build_mutual_knn_graph(d: &DistanceMatrix, k: usize) -> NeighborGraph {
    let n = d.n();
    let knn: Vec<BTreeSet<usize>> = (0..n).map(|i| k_nearest(d, i, k).into_iter().collect()).collect();
    let mut g = NeighborGraph::new(n);
    for i in 0..n {
        for &j in &knn[i] {
            if i < j && knn[j].contains(&i) {
                g.add_edge(i, j);
            }
        }
    }
    g
}

/// Partition of nodes; cluster ids ordered by smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub clusters: Vec<Vec<usize>>,
}

impl Clustering {
    /// Builds the canonical form from arbitrary labels.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut remap = BTreeMap::new();
        let mut assignment = Vec::with_capacity(labels.len());
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for (node, &l) in labels.iter().enumerate() {
            let id = *remap.entry(l).or_insert_with(|| {
                clusters.push(Vec::new());
                clusters.len() - 1
            });
            clusters[id].push(node);
            assignment.push(id);
        }
        Self { assignment, clusters }
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// `{"clusters": {"0": [segment ids...], ...}}`.
    pub fn to_json(&self, segment_ids: &[String]) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .clusters
            .iter()
            .enumerate()
            .map(|(c, members)| {
                let ids: Vec<&str> = members.iter().map(|&m| segment_ids[m].as_str()).collect();
                (c.to_string(), serde_json::json!(ids))
            })
            .collect();
        serde_json::json!({ "clusters": map })
    }

    /// GraphViz DOT with one subgraph per cluster.
    pub fn to_dot(&self, g: &NeighborGraph, segment_ids: &[String]) -> String {
        let mut out = String::from("graph clusters {\n  node [shape=ellipse];\n");
        for (c, members) in self.clusters.iter().enumerate() {
            let _ = writeln!(out, "  subgraph cluster_{c} {{\n    label=\"cluster {c}\";");
            for &m in members {
                let _ = writeln!(out, "    n{m} [label=\"{}\"];", segment_ids[m].replace('"', "'"));
            }
            out.push_str("  }\n");
        }
        for &(i, j) in &g.edges {
            let _ = writeln!(out, "  n{i} -- n{j};");
        }
        out.push_str("}\n");
        out
    }
}

pub fn connected_components(g: &NeighborGraph) -> Clustering {
    let mut parent: Vec<usize> = (0..g.n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j) in &g.edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            // Smaller index becomes the root so roots are component minima.
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let roots: Vec<usize> = (0..g.n).map(|x| find(&mut parent, x)).collect();
    Clustering::from_labels(&roots)
}

/// Member minimizing summed distance to the rest of its cluster, ties to lower index.
pub fn cluster_medoid(c: &Clustering, d: &DistanceMatrix, cluster_id: usize) -> Result<usize, GraphError> {
    let members = c.clusters.get(cluster_id).ok_or(GraphError::UnknownCluster(cluster_id))?;
    Ok(medoid_of(members, |a, b| d.get(a, b)))
}

/// Medoid over an arbitrary member list and distance function.
pub fn medoid_of(members: &[usize], dist: impl Fn(usize, usize) -> f64) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for &m in members {
        let total: f64 = members.iter().map(|&o| dist(m, o)).sum();
        if total < best.0 || (total == best.0 && m < best.1) {
            best = (total, m);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn k_zero_gives_no_edges() {
        let d = DistanceMatrix::from_points(&[0.0, 1.0, 2.0]);
        assert!(build_mutual_knn_graph(&d, 0).edges.is_empty());
    }

    #[test]
    fn two_pairs_on_a_line() {
        let d = DistanceMatrix::from_points(&[0.0, 1.0, 10.0, 11.0]);
        let g = build_mutual_knn_graph(&d, 1);
        assert_eq!(g.edges, BTreeSet::from([(0, 1), (2, 3)]));
    }

    #[test]
    fn one_sided_neighbour_gets_no_edge() {
        // 0's nearest is 1, but 1's nearest is 2.
        let d = DistanceMatrix::from_points(&[0.0, 3.0, 4.0]);
        assert_eq!(k_nearest(&d, 0, 1), vec![1]);
        assert_eq!(k_nearest(&d, 1, 1), vec![2]);
        let g = build_mutual_knn_graph(&d, 1);
        assert!(!g.has_edge(0, 1));
        assert!(g.has_edge(1, 2));
    }

    #[test]
    fn knn_ties_go_to_lower_index() {
        let d = DistanceMatrix::from_points(&[5.0, 4.0, 6.0]);
        assert_eq!(k_nearest(&d, 0, 1), vec![1]);
    }

    #[test]
    fn components_basic() {
        let g = NeighborGraph::new(5);
        let c = connected_components(&g);
        assert_eq!(c.num_clusters(), 5);
        let mut g = NeighborGraph::new(4);
        g.add_edge(0, 1);
        g.add_edge(1, 2);
        let c = connected_components(&g);
        assert_eq!(c.clusters, vec![vec![0, 1, 2], vec![3]]);
        assert_eq!(c.assignment, vec![0, 0, 0, 1]);
    }

    #[test]
    fn medoids() {
        let d = DistanceMatrix::from_points(&[0.0, 1.0, 5.0]);
        let c = Clustering::from_labels(&[0, 0, 0]);
        assert_eq!(cluster_medoid(&c, &d, 0).unwrap(), 1);
        let c = Clustering::from_labels(&[0, 1, 0]);
        assert_eq!(cluster_medoid(&c, &d, 1).unwrap(), 1);
        // Two members: equal sums, lower index wins.
        assert_eq!(cluster_medoid(&c, &d, 0).unwrap(), 0);
        assert!(matches!(cluster_medoid(&c, &d, 7), Err(GraphError::UnknownCluster(7))));
    }

    #[test]
    fn distance_matrix_binary() {
        let d = DistanceMatrix::from_points(&[0.0, 2.5, -1.0]);
        let mut buf = Vec::new();
        d.write_binary(&mut buf).unwrap();
        assert_eq!(DistanceMatrix::read_binary(&buf[..]).unwrap(), d);
    }

    #[test]
    fn json_and_dot() {
        let mut g = NeighborGraph::new(3);
        g.add_edge(0, 2);
        let c = connected_components(&g);
        let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let j = c.to_json(&ids);
        assert_eq!(j["clusters"]["0"], serde_json::json!(["a", "c"]));
        let dot = c.to_dot(&g, &ids);
        assert!(dot.contains("n0 -- n2"));
        assert!(dot.contains("subgraph cluster_1"));
    }

    proptest! {
        #[test]
        fn mutual_knn_is_monotone_in_k(points in prop::collection::vec(-100.0f64..100.0, 1..25), k in 0usize..6) {
            let d = DistanceMatrix::from_points(&points);
            let a = build_mutual_knn_graph(&d, k);
            let b = build_mutual_knn_graph(&d, k + 1);
            // Monotonicity needs a strict order on neighbours, which index tie-breaking provides.
            prop_assert!(a.edges.is_subset(&b.edges));
        }

        #[test]
        fn components_ignore_edge_order(n in 1usize..30, raw in prop::collection::vec((0usize..30, 0usize..30), 0..60)) {
            let edges: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
            let mut g1 = NeighborGraph::new(n);
            for &(a, b) in &edges { g1.add_edge(a, b); }
            let mut g2 = NeighborGraph::new(n);
            for &(a, b) in edges.iter().rev() { g2.add_edge(b, a); }
            prop_assert_eq!(connected_components(&g1), connected_components(&g2));
        }
    }
}
