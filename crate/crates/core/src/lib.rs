//! Multiview point-cloud registration.
//!
//! Recovers one global rigid pose per scan from a sparse, overlap-scored
//! pose graph. The stages, each usable on its own:
//!
//! 1. [`pose_graph`] — overlap scoring and top-k sparse graph construction;
//! 2. [`pairwise`] — descriptor matching and RANSAC relative-pose estimation
//!    on the graph edges;
//! 3. [`sync`] — closed-form rotation synchronization (spectral) and
//!    translation synchronization (weighted linear least squares);
//! 4. [`irls`] — the iteratively reweighted driver with a history
//!    reweighting function that suppresses outlier edges;
//! 5. [`eval`] — relative-pose error metrics, registration recall, ECDF.
//!
//! [`synth`] generates planted-ground-truth scenes for benchmarking and
//! [`io`] holds the on-disk formats (graph/pose files, PLY, raw buffers).

pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod irls;
pub mod pairwise;
pub mod pose_graph;
pub mod sync;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{RigidTransform, Rotation3};
pub use pose_graph::{Edge, PoseGraph, Scan};
