//! Synthetic scenes with planted ground truth: the desk-scale benchmark
//! substitute. A scene is a set of overlapping point-cloud regions with
//! known camera-to-world poses; a graph is then built from ground-truth
//! overlaps and seeded with perturbed (inlier) or corrupted (outlier)
//! relative poses.
//!
//! Everything is deterministic per seed. Scene geometry and edge injection
//! draw from separate RNG streams so changing the outlier fraction never
//! changes the scene itself.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::eval::EvalPair;
use crate::geometry::{
    angular_distance, random_rotation, random_unit_vector, RigidTransform, Rotation3,
};
use crate::pose_graph::{
    build_sparse_graph, connected_components, Edge, OverlapScorer, PoseGraph, Scan,
};

/// How scan regions are laid out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OverlapStructure {
    /// Regions on a circle; consecutive scans share ≥ 30% of their points,
    /// non-consecutive scans are essentially disjoint.
    Ring,
    /// Regions scattered in a box, tied together by a nearest-neighbor
    /// chain plus each region's nearest few; pairwise shares are smaller
    /// but every scan has several neighbors.
    RandomKnn,
}

/// Parameters of a planted scene.
#[derive(Clone, Copy, Debug)]
pub struct SceneSpec {
    pub n_scans: usize,
    pub points_per_scan: usize,
    /// Overall scene size, meters.
    pub scene_extent: f64,
    pub overlap_structure: OverlapStructure,
    /// Std-dev of inlier rotation noise, degrees; samples truncated at 3σ.
    pub rotation_noise_deg: f64,
    /// Std-dev of inlier translation noise per axis, meters.
    pub translation_noise_m: f64,
    /// Fraction of graph edges replaced by corrupted poses, in [0, 1).
    pub outlier_edge_fraction: f64,
    /// Minimum rotation error of an outlier pose, degrees. Must exceed
    /// 3× the rotation noise so outliers are separable from noise.
    pub outlier_min_angle_deg: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            n_scans: 20,
            points_per_scan: 300,
            scene_extent: 10.0,
            overlap_structure: OverlapStructure::RandomKnn,
            rotation_noise_deg: 1.0,
            translation_noise_m: 0.01,
            outlier_edge_fraction: 0.15,
            outlier_min_angle_deg: 60.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if self.n_scans < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 scans, got {}",
                self.n_scans
            )));
        }
        if self.points_per_scan < 20 {
            return Err(Error::InvalidSpec(format!(
                "need at least 20 points per scan, got {}",
                self.points_per_scan
            )));
        }
        if !(self.scene_extent > 0.0) {
            return Err(Error::InvalidSpec("scene extent must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_edge_fraction) {
            return Err(Error::InvalidSpec(
                "outlier fraction must be in [0, 1)".into(),
            ));
        }
        if self.rotation_noise_deg < 0.0 || self.translation_noise_m < 0.0 {
            return Err(Error::InvalidSpec("noise levels must be non-negative".into()));
        }
        if self.outlier_min_angle_deg <= 3.0 * self.rotation_noise_deg {
            return Err(Error::InvalidSpec(
                "outlier_min_angle_deg must exceed 3× rotation_noise_deg".into(),
            ));
        }
        Ok(())
    }
}

/// Co-located world points shared by a scan pair: `idx_in_i[k]` and
/// `idx_in_j[k]` address the same world point in the two scans.
#[derive(Clone, Debug)]
pub struct SharedPoints {
    pub i: usize,
    pub j: usize,
    pub idx_in_i: Vec<usize>,
    pub idx_in_j: Vec<usize>,
}

/// A generated scene with its ground truth.
#[derive(Clone, Debug)]
pub struct PlantedScene {
    pub spec: SceneSpec,
    pub scans: Vec<Scan>,
    /// Camera-to-world pose per scan.
    pub ground_truth: Vec<RigidTransform>,
    /// Symmetric ground-truth overlap matrix (diagonal zero).
    pub overlaps: Vec<Vec<f64>>,
    /// Planted co-located point sets, one entry per neighboring pair.
    pub shared: Vec<SharedPoints>,
    /// World-point id of every scan point; co-located points share an id.
    pub world_ids: Vec<Vec<u64>>,
    /// Radius used by the geometric overlap oracle.
    pub oracle_radius: f64,
}

/// Edge label recorded at injection time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeLabel {
    Inlier,
    Outlier,
}

/// A pose graph with per-edge ground-truth labels.
#[derive(Clone, Debug)]
pub struct InjectedGraph {
    pub graph: PoseGraph,
    /// Aligned with `graph.edges`.
    pub labels: Vec<EdgeLabel>,
}

impl InjectedGraph {
    pub fn outlier_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == EdgeLabel::Outlier)
            .map(|(idx, _)| idx)
            .collect()
    }
}

/// Neighbor pairs and per-pair shared fractions for a layout.
struct Layout {
    centers: Vec<Vector3<f64>>,
    /// (i, j, shared fraction of each scan's points), i < j.
    pairs: Vec<(usize, usize, f64)>,
    /// Region radius per scan for private points.
    private_radius: Vec<f64>,
}

fn ring_layout(spec: &SceneSpec) -> Layout {
    let n = spec.n_scans;
    let big_r = spec.scene_extent / 2.0;
    let centers: Vec<Vector3<f64>> = (0..n)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            Vector3::new(big_r * theta.cos(), big_r * theta.sin(), 0.0)
        })
        .collect();
    let mut pairs = std::collections::BTreeSet::new();
    for i in 0..n {
        let j = (i + 1) % n;
        if i != j {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    let chord = (centers[0] - centers[1 % n]).norm().max(1e-6);
    Layout {
        centers,
        pairs: pairs.into_iter().map(|(i, j)| (i, j, 0.35)).collect(),
        private_radius: vec![0.35 * chord; n],
    }
}

fn knn_layout(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Layout {
    let n = spec.n_scans;
    let half = spec.scene_extent / 2.0;
    let centers: Vec<Vector3<f64>> = (0..n)
        .map(|_| Vector3::from_fn(|_, _| rng.gen_range(-half..half)))
        .collect();

    let mut pair_set = std::collections::BTreeSet::new();
    // greedy nearest-neighbor chain guarantees connectivity
    let mut visited = vec![false; n];
    let mut current = 0usize;
    visited[0] = true;
    for _ in 1..n {
        let next = (0..n)
            .filter(|&v| !visited[v])
            .min_by(|&a, &b| {
                (centers[current] - centers[a])
                    .norm()
                    .partial_cmp(&(centers[current] - centers[b]).norm())
                    .unwrap()
                    .then(a.cmp(&b))
            })
            .unwrap();
        pair_set.insert((current.min(next), current.max(next)));
        visited[next] = true;
        current = next;
    }
    // plus each region's nearest 4
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| {
            (centers[i] - centers[a])
                .norm()
                .partial_cmp(&(centers[i] - centers[b]).norm())
                .unwrap()
                .then(a.cmp(&b))
        });
        for &j in others.iter().take(4.min(n - 1)) {
            pair_set.insert((i.min(j), i.max(j)));
        }
    }

    let mut degree = vec![0usize; n];
    for &(i, j) in &pair_set {
        degree[i] += 1;
        degree[j] += 1;
    }
    // split a 75% share budget equally over each node's pairs
    let pairs: Vec<(usize, usize, f64)> = pair_set
        .into_iter()
        .map(|(i, j)| {
            let f = (0.75 / degree[i] as f64).min(0.75 / degree[j] as f64);
            (i, j, f)
        })
        .collect();

    let private_radius: Vec<f64> = (0..n)
        .map(|i| {
            let nearest = (0..n)
                .filter(|&j| j != i)
                .map(|j| (centers[i] - centers[j]).norm())
                .fold(f64::INFINITY, f64::min);
            (0.3 * nearest).max(0.02 * spec.scene_extent)
        })
        .collect();

    Layout {
        centers,
        pairs,
        private_radius,
    }
}

fn sample_in_ball(rng: &mut ChaCha8Rng, center: &Vector3<f64>, radius: f64) -> Vector3<f64> {
    loop {
        let p = Vector3::from_fn(|_, _| rng.gen_range(-radius..radius));
        if p.norm_squared() <= radius * radius {
            return center + p;
        }
    }
}

/// Generates a planted scene: overlapping world regions, one pose per
/// scan, the planted co-located point sets, and the ground-truth overlap
/// matrix computed by the geometric oracle.
pub fn generate_scene(spec: &SceneSpec) -> Result<PlantedScene> {
    spec.validate()?;
    let n = spec.n_scans;
    let p_total = spec.points_per_scan;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);

    let layout = match spec.overlap_structure {
        OverlapStructure::Ring => ring_layout(spec),
        OverlapStructure::RandomKnn => knn_layout(spec, &mut rng),
    };

    // shared point counts per pair, clamped so every scan keeps some
    // private points
    let mut share_count: Vec<usize> = layout
        .pairs
        .iter()
        .map(|&(_, _, f)| ((f * p_total as f64).round() as usize).max(1))
        .collect();
    let mut shared_total = vec![0usize; n];
    for (slot, &(i, j, _)) in layout.pairs.iter().enumerate() {
        loop {
            let c = share_count[slot];
            if shared_total[i] + c <= (p_total * 9) / 10 && shared_total[j] + c <= (p_total * 9) / 10
            {
                shared_total[i] += c;
                shared_total[j] += c;
                break;
            }
            share_count[slot] = c.saturating_sub(1).max(1);
            if share_count[slot] == 1 && c == 1 {
                shared_total[i] += 1;
                shared_total[j] += 1;
                break;
            }
        }
    }

    // ground-truth poses: random orientation, region center as position
    let ground_truth: Vec<RigidTransform> = layout
        .centers
        .iter()
        .map(|c| RigidTransform::new(random_rotation(&mut rng), *c))
        .collect();

    // world points: shared sets in pair order, then private fill
    let mut world_points: Vec<Vec<Vector3<f64>>> = vec![Vec::new(); n];
    let mut world_ids: Vec<Vec<u64>> = vec![Vec::new(); n];
    let mut shared = Vec::with_capacity(layout.pairs.len());
    let mut next_id: u64 = 0;

    for (slot, &(i, j, _)) in layout.pairs.iter().enumerate() {
        let mid = (layout.centers[i] + layout.centers[j]) / 2.0;
        let dist = (layout.centers[i] - layout.centers[j]).norm();
        let radius = (0.25 * dist).max(0.02 * spec.scene_extent);
        let mut idx_in_i = Vec::with_capacity(share_count[slot]);
        let mut idx_in_j = Vec::with_capacity(share_count[slot]);
        for _ in 0..share_count[slot] {
            let p = sample_in_ball(&mut rng, &mid, radius);
            idx_in_i.push(world_points[i].len());
            idx_in_j.push(world_points[j].len());
            world_points[i].push(p);
            world_points[j].push(p);
            world_ids[i].push(next_id);
            world_ids[j].push(next_id);
            next_id += 1;
        }
        shared.push(SharedPoints {
            i,
            j,
            idx_in_i,
            idx_in_j,
        });
    }

    for v in 0..n {
        while world_points[v].len() < p_total {
            let p = sample_in_ball(&mut rng, &layout.centers[v], layout.private_radius[v]);
            world_points[v].push(p);
            world_ids[v].push(next_id);
            next_id += 1;
        }
        world_points[v].truncate(p_total);
        world_ids[v].truncate(p_total);
    }

    // store points in each scan's own frame
    let scans: Vec<Scan> = (0..n)
        .map(|v| {
            let inv = ground_truth[v].inverse();
            let pts = world_points[v].iter().map(|p| inv.apply(p)).collect();
            Scan::new(v, pts)
        })
        .collect();

    let oracle_radius = 0.02 * spec.scene_extent;
    let mut overlaps = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s = crate::pose_graph::geometric_overlap_oracle(
                &scans[i],
                &scans[j],
                &ground_truth[i],
                &ground_truth[j],
                oracle_radius,
            )?;
            overlaps[i][j] = s;
            overlaps[j][i] = s;
        }
    }

    Ok(PlantedScene {
        spec: *spec,
        scans,
        ground_truth,
        overlaps,
        shared,
        world_ids,
        oracle_radius,
    })
}

struct TableScorer<'a>(&'a [Vec<f64>]);

impl OverlapScorer for TableScorer<'_> {
    fn score(&self, a: &Scan, b: &Scan) -> Result<f64> {
        Ok(self.0[a.id][b.id])
    }
}

/// Builds the top-k graph from ground-truth overlaps and plants a relative
/// pose on every edge: inliers get the true pose perturbed by the spec's
/// noise, outliers a random pose at least `outlier_min_angle_deg` away in
/// rotation. Outliers are drawn uniformly among edges whose removal —
/// together with the outliers already chosen — leaves the informative
/// inlier subgraph connected, so recovery always stays possible.
/// Inlier counts are surrogates: overlap × points × ½ for inliers, a
/// uniform draw in [3, 20] for outliers.
pub fn inject_edges(scene: &PlantedScene, k: usize, spec: &SceneSpec) -> Result<InjectedGraph> {
    let mut graph = build_sparse_graph(scene.scans.clone(), k, &TableScorer(&scene.overlaps))?;
    let n = graph.scans.len();
    let e_total = graph.edges.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(2);

    let target_outliers = (spec.outlier_edge_fraction * e_total as f64).round() as usize;

    // candidate order: seeded shuffle
    let mut order: Vec<usize> = (0..e_total).collect();
    for idx in (1..order.len()).rev() {
        let swap = rng.gen_range(0..=idx);
        order.swap(idx, swap);
    }

    // an edge is informative if it will carry non-zero initial weight
    let informative: Vec<bool> = graph
        .edges
        .iter()
        .map(|e| {
            let surrogate =
                (scene.overlaps[e.i][e.j] * spec.points_per_scan as f64 * 0.5).round();
            e.overlap_score > 0.0 && surrogate >= 1.0
        })
        .collect();

    let mut is_outlier = vec![false; e_total];
    let mut chosen = 0usize;
    for &cand in &order {
        if chosen == target_outliers {
            break;
        }
        if !connected_without(
            n,
            &graph.edges,
            &informative,
            &is_outlier,
            cand,
        ) {
            continue; // bridge of the informative subgraph: resample
        }
        is_outlier[cand] = true;
        chosen += 1;
    }

    let mut labels = Vec::with_capacity(e_total);
    for idx in 0..e_total {
        let (i, j) = (graph.edges[idx].i, graph.edges[idx].j);
        let truth = RigidTransform::relative(&scene.ground_truth[i], &scene.ground_truth[j]);
        if is_outlier[idx] {
            let rotation = loop {
                let r = random_rotation(&mut rng);
                if angular_distance(&r, &truth.rotation) >= spec.outlier_min_angle_deg {
                    break r;
                }
            };
            let half = spec.scene_extent / 2.0;
            let translation = Vector3::from_fn(|_, _| rng.gen_range(-half..half));
            graph.edges[idx].relative_pose = Some(RigidTransform::new(rotation, translation));
            graph.edges[idx].inlier_count = Some(rng.gen_range(3.0..20.0_f64).round() as u64);
            labels.push(EdgeLabel::Outlier);
        } else {
            let rotation = if spec.rotation_noise_deg > 0.0 {
                let sigma = spec.rotation_noise_deg;
                let angle = loop {
                    let x: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
                    if x.abs() <= 3.0 * sigma {
                        break x.abs();
                    }
                };
                let axis = random_unit_vector(&mut rng);
                Rotation3::from_axis_angle(&axis, angle.to_radians()).compose(&truth.rotation)
            } else {
                truth.rotation
            };
            let translation = truth.translation
                + Vector3::from_fn(|_, _| {
                    rng.sample::<f64, _>(StandardNormal) * spec.translation_noise_m
                });
            graph.edges[idx].relative_pose = Some(RigidTransform::new(rotation, translation));
            let surrogate =
                (scene.overlaps[i][j] * spec.points_per_scan as f64 * 0.5).round() as u64;
            graph.edges[idx].inlier_count = Some(surrogate);
            labels.push(EdgeLabel::Inlier);
        }
    }

    Ok(InjectedGraph { graph, labels })
}

/// True when the informative inlier subgraph stays connected after also
/// treating `candidate` as an outlier.
fn connected_without(
    n: usize,
    edges: &[Edge],
    informative: &[bool],
    is_outlier: &[bool],
    candidate: usize,
) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (idx, e) in edges.iter().enumerate() {
        if idx == candidate || is_outlier[idx] || !informative[idx] {
            continue;
        }
        let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    (0..n).all(|v| find(&mut parent, v) == find(&mut parent, 0))
}

/// Attaches a random unit descriptor to every world point, so co-located
/// points in different scans carry identical descriptors and distinct
/// points almost surely do not. Deterministic per seed.
pub fn attach_descriptors(scene: &mut PlantedScene, dim: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let max_id = scene
        .world_ids
        .iter()
        .flat_map(|ids| ids.iter().copied())
        .max()
        .map_or(0, |m| m + 1);
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(max_id as usize);
    for _ in 0..max_id {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        table.push(v.into_iter().map(|x| x / norm).collect());
    }
    for (scan, ids) in scene.scans.iter_mut().zip(&scene.world_ids) {
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            data.extend_from_slice(&table[id as usize]);
        }
        scan.descriptors = Some(crate::pose_graph::Descriptors::new(dim, data).unwrap());
    }
}

/// Evaluation pairs for a synthetic scene: every graph edge plus every
/// pair with ground-truth overlap at or above `min_overlap`. The point set
/// is the pair's planted co-located points in scan j's frame, or all of
/// scan j's points when nothing is planted for the pair.
pub fn evaluation_pairs(
    scene: &PlantedScene,
    graph: &PoseGraph,
    min_overlap: f64,
) -> Vec<EvalPair> {
    let n = scene.scans.len();
    let mut wanted = std::collections::BTreeSet::new();
    for e in &graph.edges {
        wanted.insert((e.i, e.j));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if scene.overlaps[i][j] >= min_overlap {
                wanted.insert((i, j));
            }
        }
    }
    wanted
        .into_iter()
        .map(|(i, j)| {
            let points = scene
                .shared
                .iter()
                .find(|s| s.i == i && s.j == j)
                .map(|s| {
                    s.idx_in_j
                        .iter()
                        .map(|&idx| scene.scans[j].points[idx])
                        .collect::<Vec<_>>()
                })
                .filter(|pts: &Vec<Vector3<f64>>| !pts.is_empty())
                .unwrap_or_else(|| scene.scans[j].points.clone());
            EvalPair { i, j, points }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irls::{mean_relative_errors, run_irls, IrlsConfig};

    fn ring_spec(n: usize, seed: u64) -> SceneSpec {
        SceneSpec {
            n_scans: n,
            points_per_scan: 200,
            overlap_structure: OverlapStructure::Ring,
            rotation_noise_deg: 0.0,
            translation_noise_m: 0.0,
            outlier_edge_fraction: 0.0,
            outlier_min_angle_deg: 60.0,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn ring_overlaps_follow_layout() {
        let scene = generate_scene(&ring_spec(5, 11)).unwrap();
        for i in 0..5usize {
            let j = (i + 1) % 5;
            assert!(
                scene.overlaps[i][j] >= 0.3,
                "consecutive overlap {} for ({i},{j})",
                scene.overlaps[i][j]
            );
        }
        for i in 0..5usize {
            let j = (i + 2) % 5;
            assert!(
                scene.overlaps[i.min(j)][i.max(j)] < 0.05,
                "non-adjacent overlap {} for ({i},{j})",
                scene.overlaps[i.min(j)][i.max(j)]
            );
        }
    }

    #[test]
    fn minimal_two_scan_scene() {
        let scene = generate_scene(&ring_spec(2, 3)).unwrap();
        assert!(scene.overlaps[0][1] >= 0.3);
        assert_eq!(scene.shared.len(), 1);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_scene(&ring_spec(6, 42)).unwrap();
        let b = generate_scene(&ring_spec(6, 42)).unwrap();
        for (sa, sb) in a.scans.iter().zip(&b.scans) {
            assert_eq!(sa.points, sb.points);
        }
        for (pa, pb) in a.ground_truth.iter().zip(&b.ground_truth) {
            assert_eq!(pa.rotation.matrix(), pb.rotation.matrix());
            assert_eq!(pa.translation, pb.translation);
        }
        assert_eq!(a.overlaps, b.overlaps);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = ring_spec(1, 0);
        assert!(matches!(generate_scene(&s), Err(Error::InvalidSpec(_))));
        s = ring_spec(5, 0);
        s.outlier_edge_fraction = 1.0;
        assert!(matches!(generate_scene(&s), Err(Error::InvalidSpec(_))));
        s = ring_spec(5, 0);
        s.rotation_noise_deg = 30.0; // 3σ = 90 > 60
        assert!(matches!(generate_scene(&s), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn clean_injection_recovers_exactly() {
        let spec = ring_spec(8, 7);
        let scene = generate_scene(&spec).unwrap();
        let injected = inject_edges(&scene, 2, &spec).unwrap();
        assert!(injected.labels.iter().all(|&l| l == EdgeLabel::Inlier));
        let out = run_irls(&injected.graph, &IrlsConfig { iterations: 1, ..Default::default() })
            .unwrap();
        let pairs: Vec<(usize, usize)> =
            injected.graph.edges.iter().map(|e| (e.i, e.j)).collect();
        let (re, te) = mean_relative_errors(&out.poses, &scene.ground_truth, &pairs);
        assert!(re < 1e-6, "rotation error {re}");
        assert!(te < 1e-9, "translation error {te}");
    }

    #[test]
    fn outlier_counts_match_fraction() {
        for seed in 0..5u64 {
            let spec = SceneSpec {
                seed,
                ..Default::default()
            };
            let scene = generate_scene(&spec).unwrap();
            let injected = inject_edges(&scene, 6, &spec).unwrap();
            let e = injected.graph.edges.len();
            let outliers = injected.outlier_indices().len();
            assert!(e >= 60, "seed {seed}: {e} edges");
            assert!(e <= 90, "seed {seed}: {e} edges");
            assert_eq!(
                outliers,
                (0.15 * e as f64).round() as usize,
                "seed {seed}"
            );
            assert!((9..=11).contains(&outliers), "seed {seed}: {outliers} outliers");
        }
    }

    #[test]
    fn outliers_never_disconnect_inlier_subgraph() {
        for seed in 0..5u64 {
            let spec = SceneSpec {
                seed,
                ..Default::default()
            };
            let scene = generate_scene(&spec).unwrap();
            let injected = inject_edges(&scene, 6, &spec).unwrap();
            // rebuild the graph with only informative inlier edges
            let scans = scene.scans.clone();
            let mut inlier_graph = PoseGraph::new(scans);
            for (e, &label) in injected.graph.edges.iter().zip(&injected.labels) {
                let informative = e.inlier_count.unwrap_or(0) >= 1 && e.overlap_score > 0.0;
                if label == EdgeLabel::Inlier && informative {
                    inlier_graph.add_edge(e.clone()).unwrap();
                }
            }
            let comps = connected_components(&inlier_graph);
            assert_eq!(comps.len(), 1, "seed {seed}: inlier subgraph disconnected");
        }
    }

    #[test]
    fn labels_are_sound() {
        let spec = SceneSpec {
            seed: 9,
            ..Default::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let injected = inject_edges(&scene, 6, &spec).unwrap();
        for (e, &label) in injected.graph.edges.iter().zip(&injected.labels) {
            let truth =
                RigidTransform::relative(&scene.ground_truth[e.i], &scene.ground_truth[e.j]);
            let d = angular_distance(&e.relative_pose.unwrap().rotation, &truth.rotation);
            match label {
                EdgeLabel::Inlier => assert!(
                    d <= 3.0 * spec.rotation_noise_deg + 1e-9,
                    "inlier ({},{}) residual {d}",
                    e.i,
                    e.j
                ),
                EdgeLabel::Outlier => assert!(
                    d >= spec.outlier_min_angle_deg,
                    "outlier ({},{}) residual {d}",
                    e.i,
                    e.j
                ),
            }
        }
    }

    #[test]
    fn ring_cycle_composes_to_identity() {
        let spec = ring_spec(6, 13);
        let scene = generate_scene(&spec).unwrap();
        let injected = inject_edges(&scene, 2, &spec).unwrap();
        // walk the ring 0→1→…→5→0 through stored relative poses
        let mut acc = RigidTransform::identity();
        for i in 0..6usize {
            let j = (i + 1) % 6;
            let t = injected.graph.relative_pose(i, j).expect("ring edge");
            acc = acc.compose(&t);
        }
        assert!(angular_distance(&acc.rotation, &Rotation3::identity()) < 1e-9);
        assert!(acc.translation.norm() < 1e-9);
    }

    #[test]
    fn descriptors_tie_colocated_points() {
        let mut scene = generate_scene(&ring_spec(4, 21)).unwrap();
        attach_descriptors(&mut scene, 16, 21);
        let s = &scene.shared[0];
        let di = scene.scans[s.i].descriptors.as_ref().unwrap();
        let dj = scene.scans[s.j].descriptors.as_ref().unwrap();
        for (&a, &b) in s.idx_in_i.iter().zip(&s.idx_in_j) {
            assert_eq!(di.row(a), dj.row(b));
        }
    }

    #[test]
    fn evaluation_pairs_cover_edges_and_overlaps() {
        let spec = ring_spec(6, 17);
        let scene = generate_scene(&spec).unwrap();
        let injected = inject_edges(&scene, 2, &spec).unwrap();
        let pairs = evaluation_pairs(&scene, &injected.graph, 0.3);
        for e in &injected.graph.edges {
            assert!(pairs.iter().any(|p| p.i == e.i && p.j == e.j));
        }
        assert!(pairs.iter().all(|p| !p.points.is_empty()));
    }
}
