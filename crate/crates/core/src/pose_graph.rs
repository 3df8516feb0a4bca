//! Scans, the sparse pose graph, overlap scoring, and top-k edge selection.
//!
//! A graph node is a [`Scan`]; an undirected edge carries the measured
//! relative pose mapping the higher-indexed scan's frame into the
//! lower-indexed one's, an overlap score in [0, 1], and (once estimated)
//! an inlier count and an IRLS weight.
//!
//! Overlap scores come from a pluggable [`OverlapScorer`]: either the
//! correlation of unit global feature vectors carried by the scans, or a
//! geometric ground-truth oracle for synthetic data. Both drive the same
//! top-k construction.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// Per-point descriptors stored row-major: `data[p * dim .. (p+1) * dim]`
/// is the descriptor of point `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptors {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Descriptors {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim.max(1),
                got: data.len(),
            });
        }
        Ok(Descriptors { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }
}

/// A point cloud with optional per-point descriptors and an optional unit
/// global feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    /// 0-based node index.
    pub id: usize,
    /// Points in the scan's own frame, meters.
    pub points: Vec<Vector3<f64>>,
    pub descriptors: Option<Descriptors>,
    pub global_feature: Option<Vec<f64>>,
}

impl Scan {
    pub fn new(id: usize, points: Vec<Vector3<f64>>) -> Self {
        Scan {
            id,
            points,
            descriptors: None,
            global_feature: None,
        }
    }

    /// Attaches descriptors; their count must equal the point count.
    pub fn with_descriptors(mut self, descriptors: Descriptors) -> Result<Self> {
        if descriptors.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: descriptors.len(),
            });
        }
        self.descriptors = Some(descriptors);
        Ok(self)
    }

    /// Attaches a global feature vector; must be unit-norm within 1e-6.
    pub fn with_global_feature(mut self, feature: Vec<f64>) -> Result<Self> {
        let norm: f64 = feature.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::NotNormalized {
                deviation: (norm - 1.0).abs(),
            });
        }
        self.global_feature = Some(feature);
        Ok(self)
    }
}

/// Undirected edge between scans `i < j`. The stored relative pose maps
/// scan j's frame into scan i's frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub relative_pose: Option<RigidTransform>,
    pub overlap_score: f64,
    pub inlier_count: Option<u64>,
    pub weight: Option<f64>,
}

impl Edge {
    pub fn new(i: usize, j: usize, overlap_score: f64) -> Self {
        Edge {
            i,
            j,
            relative_pose: None,
            overlap_score,
            inlier_count: None,
            weight: None,
        }
    }
}

/// Nodes plus undirected edges; at most one edge per unordered pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoseGraph {
    pub scans: Vec<Scan>,
    pub edges: Vec<Edge>,
}

impl PoseGraph {
    pub fn new(scans: Vec<Scan>) -> Self {
        PoseGraph {
            scans,
            edges: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.scans.len()
    }

    /// Inserts an edge. Indices are normalized to `i < j` (inverting the
    /// pose if one is attached); self-edges and duplicates are rejected,
    /// never merged.
    pub fn add_edge(&mut self, mut edge: Edge) -> Result<()> {
        if edge.i == edge.j {
            return Err(Error::SelfEdge { i: edge.i });
        }
        let n = self.scans.len();
        for node in [edge.i, edge.j] {
            if node >= n {
                return Err(Error::NodeOutOfRange { node, n });
            }
        }
        if edge.i > edge.j {
            std::mem::swap(&mut edge.i, &mut edge.j);
            edge.relative_pose = edge.relative_pose.map(|t| t.inverse());
        }
        if self.edge_index(edge.i, edge.j).is_some() {
            return Err(Error::DuplicateEdge { i: edge.i, j: edge.j });
        }
        self.edges.push(edge);
        Ok(())
    }

    /// Index into `edges` of the unordered pair `{a, b}`, if present.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.edges.iter().position(|e| e.i == lo && e.j == hi)
    }

    /// Relative pose mapping `from`'s frame into `to`'s frame, if the edge
    /// exists and carries a pose. Querying against the stored orientation
    /// inverts on the fly.
    pub fn relative_pose(&self, to: usize, from: usize) -> Option<RigidTransform> {
        let idx = self.edge_index(to, from)?;
        let e = &self.edges[idx];
        let pose = e.relative_pose?;
        if e.i == to {
            Some(pose)
        } else {
            Some(pose.inverse())
        }
    }
}

/// Overlap score of two unit feature vectors: (faᵀ·fb + 1)/2 ∈ [0, 1].
pub fn overlap_score(fa: &[f64], fb: &[f64]) -> Result<f64> {
    if fa.len() != fb.len() {
        return Err(Error::DimensionMismatch {
            expected: fa.len(),
            got: fb.len(),
        });
    }
    for f in [fa, fb] {
        let norm: f64 = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(Error::NotNormalized {
                deviation: (norm - 1.0).abs(),
            });
        }
    }
    let dot: f64 = fa.iter().zip(fb).map(|(a, b)| a * b).sum();
    Ok((dot + 1.0) / 2.0)
}

/// Supplies the overlap score of a scan pair during graph construction.
pub trait OverlapScorer {
    fn score(&self, a: &Scan, b: &Scan) -> Result<f64>;
}

/// Scores pairs by correlating the scans' unit global feature vectors.
pub struct FeatureScorer;

impl OverlapScorer for FeatureScorer {
    fn score(&self, a: &Scan, b: &Scan) -> Result<f64> {
        let fa = a
            .global_feature
            .as_deref()
            .ok_or(Error::MissingFeatures { scan: a.id })?;
        let fb = b
            .global_feature
            .as_deref()
            .ok_or(Error::MissingFeatures { scan: b.id })?;
        overlap_score(fa, fb)
    }
}

/// Ground-truth geometric oracle: scores a pair by the symmetrized
/// fraction of points with a cross-scan neighbor within `radius` after
/// both scans are placed in the world frame by their true poses.
pub struct GeometricOracle<'a> {
    /// Camera-to-world pose per scan id.
    pub poses: &'a [RigidTransform],
    pub radius: f64,
}

impl OverlapScorer for GeometricOracle<'_> {
    fn score(&self, a: &Scan, b: &Scan) -> Result<f64> {
        geometric_overlap_oracle(a, b, &self.poses[a.id], &self.poses[b.id], self.radius)
    }
}

/// Fraction of scan_a's world-frame points with a scan_b neighbor within
/// `radius`, averaged with the reverse direction.
pub fn geometric_overlap_oracle(
    scan_a: &Scan,
    scan_b: &Scan,
    pose_a: &RigidTransform,
    pose_b: &RigidTransform,
    radius: f64,
) -> Result<f64> {
    if scan_a.points.is_empty() {
        return Err(Error::EmptyScan { scan: scan_a.id });
    }
    if scan_b.points.is_empty() {
        return Err(Error::EmptyScan { scan: scan_b.id });
    }
    let world_a: Vec<Vector3<f64>> = scan_a.points.iter().map(|p| pose_a.apply(p)).collect();
    let world_b: Vec<Vector3<f64>> = scan_b.points.iter().map(|p| pose_b.apply(p)).collect();
    let ab = directional_overlap(&world_a, &world_b, radius);
    let ba = directional_overlap(&world_b, &world_a, radius);
    Ok((ab + ba) / 2.0)
}

/// Fraction of `from` points with a `to` neighbor within `radius`,
/// via a uniform cell grid of cell size `radius`.
fn directional_overlap(from: &[Vector3<f64>], to: &[Vector3<f64>], radius: f64) -> f64 {
    let grid = CellGrid::build(to, radius);
    let hits = from
        .iter()
        .filter(|p| grid.has_neighbor_within(p, radius))
        .count();
    hits as f64 / from.len() as f64
}

/// Hash grid over points with cell size equal to the query radius, so a
/// radius query only inspects the 27 surrounding cells.
struct CellGrid {
    cell: f64,
    map: std::collections::HashMap<(i64, i64, i64), Vec<Vector3<f64>>>,
}

impl CellGrid {
    fn build(points: &[Vector3<f64>], cell: f64) -> Self {
        let mut map: std::collections::HashMap<(i64, i64, i64), Vec<Vector3<f64>>> =
            std::collections::HashMap::new();
        for p in points {
            map.entry(Self::key(p, cell)).or_default().push(*p);
        }
        CellGrid { cell, map }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    fn has_neighbor_within(&self, p: &Vector3<f64>, radius: f64) -> bool {
        let (cx, cy, cz) = Self::key(p, self.cell);
        let r2 = radius * radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.map.get(&(cx + dx, cy + dy, cz + dz)) {
                        if bucket.iter().any(|q| (p - q).norm_squared() < r2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Default top-k for sparse graph construction (indoor setting).
pub const DEFAULT_K: usize = 10;

/// Connects every scan to the k scans with the largest overlap scores and
/// deduplicates the union, yielding ceil(N·k/2) ≤ E ≤ N·k undirected
/// edges. Ties break toward the smaller node index. Each edge stores its
/// overlap score; relative pose, inlier count, and weight are left unset.
pub fn build_sparse_graph(
    scans: Vec<Scan>,
    k: usize,
    scorer: &dyn OverlapScorer,
) -> Result<PoseGraph> {
    let n = scans.len();
    if n < 2 {
        return Err(Error::InsufficientScans { n });
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidK { k, n });
    }

    // score all pairs once; the matrix is symmetric
    let mut scores = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s = scorer.score(&scans[i], &scans[j])?;
            scores[i][j] = s;
            scores[j][i] = s;
        }
    }

    let mut graph = PoseGraph::new(scans);
    for i in 0..n {
        let mut candidates: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        candidates.sort_by(|&a, &b| {
            scores[i][b]
                .partial_cmp(&scores[i][a])
                .unwrap()
                .then(a.cmp(&b))
        });
        for &j in candidates.iter().take(k) {
            if graph.edge_index(i, j).is_none() {
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                graph.add_edge(Edge::new(lo, hi, scores[lo][hi]))?;
            }
        }
    }
    Ok(graph)
}

/// Partition of the nodes by edge connectivity. Components are sorted
/// internally and ordered by their smallest member.
pub fn connected_components(graph: &PoseGraph) -> Vec<Vec<usize>> {
    let n = graph.scans.len();
    let mut parent: Vec<usize> = (0..n).collect();

    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }

    for e in &graph.edges {
        let (ri, rj) = (find(&mut parent, e.i), find(&mut parent, e.j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }

    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..n {
        let root = find(&mut parent, v);
        groups.entry(root).or_default().push(v);
    }
    groups.into_values().collect()
}
