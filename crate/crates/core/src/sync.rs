//! Closed-form pose synchronization on a weighted graph of relative poses.
//!
//! Rotations first: the weighted objective Σ w_ij‖R_ij − R_iᵀR_j‖²_F is
//! relaxed to an eigenvector problem on a symmetric 3N×3N block matrix;
//! the three eigenvectors of the smallest eigenvalues are stacked, each
//! 3×3 block is projected back onto SO(3), and the result is gauged so the
//! first node's rotation is the identity.
//!
//! Translations second: with rotations fixed, Σ w_ij‖R_i·t_ij + t_i − t_j‖²
//! is an ordinary weighted linear least-squares problem, solved through its
//! normal equations with the gauge fixed by anchoring the first node at the
//! origin.
//!
//! Both solves are pure and deterministic; independent problems may run in
//! parallel. The block matrix is assembled from the sparse edge list and
//! densified only for the eigensolve, which is dense symmetric — fine for
//! 3N ≤ 3000, far beyond the scene sizes this crate targets.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{self, RigidTransform, Rotation3};

/// Edges with weight at or below this are dropped before connectivity
/// analysis and assembly. History reweighting drives outlier weights
/// toward zero exponentially; the floor keeps numerically dead edges from
/// masking a disconnected graph.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-8;

/// One weighted relative-pose observation: `relative` maps node j's frame
/// into node i's frame. Parallel observations of the same pair are allowed.
#[derive(Clone, Debug)]
pub struct SyncEdge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub relative: RigidTransform,
}

/// A synchronization problem restricted to one connected component.
#[derive(Clone, Debug)]
pub struct SyncProblem {
    n: usize,
    edges: Vec<SyncEdge>,
    weight_floor: f64,
}

impl SyncProblem {
    /// Drops edges at or below `weight_floor` and verifies the remaining
    /// graph connects all `n` nodes.
    pub fn new(n: usize, edges: Vec<SyncEdge>, weight_floor: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InsufficientScans { n });
        }
        let mut active = Vec::with_capacity(edges.len());
        for e in edges {
            if e.i >= n || e.j >= n {
                return Err(Error::NodeOutOfRange {
                    node: e.i.max(e.j),
                    n,
                });
            }
            if e.i == e.j {
                return Err(Error::SelfEdge { i: e.i });
            }
            if e.weight < 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "negative weight on edge ({},{})",
                    e.i, e.j
                )));
            }
            if e.weight > weight_floor {
                active.push(e);
            }
        }

        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for e in &active {
            let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        if (0..n).any(|v| find(&mut parent, v) != 0) {
            return Err(Error::DisconnectedGraph);
        }

        Ok(SyncProblem {
            n,
            edges: active,
            weight_floor,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Edges above the weight floor.
    pub fn edges(&self) -> &[SyncEdge] {
        &self.edges
    }

    pub fn weight_floor(&self) -> f64 {
        self.weight_floor
    }
}

/// Rotations plus eigensolve diagnostics.
#[derive(Clone, Debug)]
pub struct RotationSync {
    /// One rotation per node, gauged so index 0 is the identity.
    pub rotations: Vec<Rotation3>,
    /// The six smallest eigenvalues of the block matrix, ascending.
    pub smallest_eigenvalues: [f64; 6],
    /// max over the three used eigenpairs of ‖L·v − λv‖ / ‖L‖ (spectral).
    pub eigen_residual: f64,
    /// Trace of the assembled block matrix.
    pub laplacian_trace: f64,
}

/// Full synchronization output.
#[derive(Clone, Debug)]
pub struct SyncSolution {
    /// One pose per node, gauged so index 0 is the identity transform.
    pub poses: Vec<RigidTransform>,
    pub rotation_spectrum: [f64; 6],
    pub eigen_residual: f64,
    pub laplacian_trace: f64,
}

fn add_block(l: &mut DMatrix<f64>, row: usize, col: usize, block: &Matrix3<f64>, scale: f64) {
    for a in 0..3 {
        for b in 0..3 {
            l[(row + a, col + b)] += scale * block[(a, b)];
        }
    }
}

/// Solves the weighted rotation-synchronization objective by spectral
/// relaxation.
///
/// The symmetric 3N×3N matrix has diagonal block i = (Σ_j w_ij)·I₃ and
/// off-diagonal blocks −w_ij·R_ij / −w_ij·R_ijᵀ on connected pairs. Its
/// three smallest eigenvectors are stacked into V ∈ ℝ^{3N×3}; a global
/// reflection fix makes the block determinants consistently positive
/// before each transposed block is projected onto SO(3); finally the set
/// is gauged so node 0 carries the identity.
pub fn rotation_synchronize(p: &SyncProblem) -> Result<RotationSync> {
    let n = p.n;
    let dim = 3 * n;
    let mut l = DMatrix::<f64>::zeros(dim, dim);
    for e in &p.edges {
        let r = e.relative.rotation.matrix();
        add_block(&mut l, 3 * e.i, 3 * e.j, r, -e.weight);
        add_block(&mut l, 3 * e.j, 3 * e.i, &r.transpose(), -e.weight);
        for a in 0..3 {
            l[(3 * e.i + a, 3 * e.i + a)] += e.weight;
            l[(3 * e.j + a, 3 * e.j + a)] += e.weight;
        }
    }
    let laplacian_trace = l.trace();

    let eigen = l.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].partial_cmp(&eigen.eigenvalues[b]).unwrap());

    let lambda_max = eigen.eigenvalues[order[dim - 1]].abs();
    // a fourth near-zero eigenvalue means the null space is more than
    // three-dimensional: the graph is effectively disconnected
    if eigen.eigenvalues[order[3]] < 1e-8 * lambda_max {
        return Err(Error::DisconnectedGraph);
    }

    let mut smallest_eigenvalues = [0.0; 6];
    for (slot, &idx) in order.iter().take(6).enumerate() {
        smallest_eigenvalues[slot] = eigen.eigenvalues[idx];
    }

    // stack the three smallest eigenvectors
    let mut v = DMatrix::<f64>::zeros(dim, 3);
    for (col, &idx) in order.iter().take(3).enumerate() {
        v.set_column(col, &eigen.eigenvectors.column(idx));
    }

    // eigen residual of the used pairs, relative to the spectral norm
    let mut eigen_residual: f64 = 0.0;
    for (col, &idx) in order.iter().take(3).enumerate() {
        let vec = v.column(col);
        let res = (&l * vec - eigen.eigenvalues[idx] * vec).norm();
        eigen_residual = eigen_residual.max(res / lambda_max);
    }

    // global reflection fix: the eigenvectors are determined only up to a
    // right orthogonal factor, which may be a reflection; negating one
    // column flips every block determinant at once
    let block = |v: &DMatrix<f64>, i: usize| -> Matrix3<f64> {
        Matrix3::from_fn(|a, b| v[(3 * i + a, b)])
    };
    let negative = (0..n).filter(|&i| block(&v, i).determinant() < 0.0).count();
    if 2 * negative > n {
        for row in 0..dim {
            v[(row, 2)] = -v[(row, 2)];
        }
    }

    // each block approximates R_iᵀ (times a shared orthogonal factor), so
    // project the transpose to recover R_i
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let r = geometry::project_to_so3(&block(&v, i).transpose())
            .map_err(|_| Error::DegenerateBlock { node: i })?;
        raw.push(r);
    }

    // gauge: left-multiply everything by the inverse of node 0's rotation
    let gauge = raw[0].inverse();
    let rotations = raw.iter().map(|r| gauge.compose(r)).collect();

    Ok(RotationSync {
        rotations,
        smallest_eigenvalues,
        eigen_residual,
        laplacian_trace,
    })
}

/// Solves the weighted translation-synchronization objective
/// Σ w_ij‖R_i·t_ij + t_i − t_j‖² given already-synchronized rotations.
///
/// The normal equations are assembled directly from the edge list (each
/// edge contributes the equation t_j − t_i = R_i·t_ij at weight w_ij) and
/// the gauge is fixed by deleting node 0's coordinate block, pinning
/// t_0 = 0.
pub fn translation_synchronize(
    p: &SyncProblem,
    rotations: &[Rotation3],
) -> Result<Vec<Vector3<f64>>> {
    let n = p.n;
    assert_eq!(rotations.len(), n, "one rotation per node required");
    let dim = 3 * (n - 1);
    let mut normal = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);

    // reduced coordinates: node v > 0 occupies rows 3(v-1)..3v
    for e in &p.edges {
        let h = rotations[e.i].apply(&e.relative.translation);
        let w = e.weight;
        let (i, j) = (e.i, e.j);
        if i > 0 {
            for a in 0..3 {
                normal[(3 * (i - 1) + a, 3 * (i - 1) + a)] += w;
                rhs[3 * (i - 1) + a] -= w * h[a];
            }
        }
        if j > 0 {
            for a in 0..3 {
                normal[(3 * (j - 1) + a, 3 * (j - 1) + a)] += w;
                rhs[3 * (j - 1) + a] += w * h[a];
            }
        }
        if i > 0 && j > 0 {
            for a in 0..3 {
                normal[(3 * (i - 1) + a, 3 * (j - 1) + a)] -= w;
                normal[(3 * (j - 1) + a, 3 * (i - 1) + a)] -= w;
            }
        }
    }

    let chol = normal.cholesky().ok_or(Error::SingularSystem)?;
    let sol = chol.solve(&rhs);

    let mut translations = Vec::with_capacity(n);
    translations.push(Vector3::zeros());
    for v in 1..n {
        translations.push(Vector3::new(
            sol[3 * (v - 1)],
            sol[3 * (v - 1) + 1],
            sol[3 * (v - 1) + 2],
        ));
    }
    Ok(translations)
}

/// Rotation then translation synchronization; poses gauged so node 0 is
/// the identity transform.
pub fn synchronize(p: &SyncProblem) -> Result<SyncSolution> {
    let rot = rotation_synchronize(p)?;
    let t = translation_synchronize(p, &rot.rotations)?;
    let poses = rot
        .rotations
        .into_iter()
        .zip(t)
        .map(|(rotation, translation)| RigidTransform::new(rotation, translation))
        .collect();
    Ok(SyncSolution {
        poses,
        rotation_spectrum: rot.smallest_eigenvalues,
        eigen_residual: rot.eigen_residual,
        laplacian_trace: rot.laplacian_trace,
    })
}

/// The rotation objective Σ w_ij‖R_ij − R_iᵀR_j‖²_F at a candidate
/// solution. Diagnostic, used by tests.
pub fn rotation_objective(p: &SyncProblem, rotations: &[Rotation3]) -> f64 {
    p.edges
        .iter()
        .map(|e| {
            let rel = rotations[e.i].inverse().compose(&rotations[e.j]);
            let diff = e.relative.rotation.matrix() - rel.matrix();
            e.weight * diff.norm_squared()
        })
        .sum()
}

/// The translation objective Σ w_ij‖R_i·t_ij + t_i − t_j‖² at a candidate
/// solution. Diagnostic, used by tests.
pub fn translation_objective(p: &SyncProblem, poses: &[RigidTransform]) -> f64 {
    p.edges
        .iter()
        .map(|e| {
            let r = poses[e.i].rotation.apply(&e.relative.translation) + poses[e.i].translation
                - poses[e.j].translation;
            e.weight * r.norm_squared()
        })
        .sum()
}
