//! On-disk formats.
//!
//! * Graph file: JSON with a version, scans (point/descriptor file paths
//!   plus an optional inline feature vector), and edges (overlap score,
//!   optional 4×4 row-major pose, inlier count, weight).
//! * Poses file: JSON list of node id + 4×4 row-major matrix.
//! * Point clouds: ASCII PLY (`vertex x y z`) or a raw little-endian f32
//!   triple stream (`.xyz.bin`).
//! * Descriptors: little-endian f32, row-major, behind an 8-byte header of
//!   point count and dimension as u32 each.
//!
//! JSON floats are emitted in shortest round-trip form, so save → load
//! reproduces every f64 bit-exactly. All writers go through a
//! temp-then-rename so no partial file is ever left behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Rotation3};
use crate::pose_graph::{Descriptors, Edge, PoseGraph, Scan};

pub const FORMAT_VERSION: u32 = 1;

/// Serialized scan record. Paths are relative to the graph file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptors: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_feature: Option<Vec<f64>>,
}

/// Serialized edge record; `pose` is the 4×4 row-major [R | t; 0 0 0 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub i: usize,
    pub j: usize,
    pub overlap_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inlier_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub version: u32,
    pub scans: Vec<ScanEntry>,
    pub edges: Vec<EdgeEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseEntry {
    pub id: usize,
    pub matrix: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosesDocument {
    pub version: u32,
    pub poses: Vec<PoseEntry>,
}

/// Row-major 16-element encoding of a rigid transform.
pub fn pose_to_matrix(t: &RigidTransform) -> Vec<f64> {
    let r = t.rotation.matrix();
    let mut m = Vec::with_capacity(16);
    for row in 0..3 {
        for col in 0..3 {
            m.push(r[(row, col)]);
        }
        m.push(t.translation[row]);
    }
    m.extend_from_slice(&[0.0, 0.0, 0.0, 1.0]);
    m
}

/// Parses a 4×4 row-major rigid transform, validating the bottom row and
/// the rotation block.
pub fn matrix_to_pose(m: &[f64]) -> Result<RigidTransform> {
    if m.len() != 16 {
        return Err(Error::Format(format!(
            "pose matrix needs 16 entries, got {}",
            m.len()
        )));
    }
    let bottom = [m[12], m[13], m[14], m[15]];
    if bottom
        .iter()
        .zip([0.0, 0.0, 0.0, 1.0])
        .any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(Error::Format("pose matrix bottom row is not 0 0 0 1".into()));
    }
    let rot = Matrix3::from_fn(|r, c| m[4 * r + c]);
    let rotation = Rotation3::new(rot)
        .map_err(|_| Error::Format("pose matrix rotation block is not a rotation".into()))?;
    Ok(RigidTransform::new(
        rotation,
        Vector3::new(m[3], m[7], m[11]),
    ))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`, so
/// a failed write never leaves a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("not a file path: {}", path.display())))?;
    let mut tmp = PathBuf::from(path);
    tmp.set_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_graph_document(path: &Path, doc: &GraphDocument) -> Result<()> {
    let json = serde_json::to_string_pretty(doc)?;
    write_atomic(path, json.as_bytes())
}

pub fn load_graph_document(path: &Path) -> Result<GraphDocument> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn save_poses(path: &Path, poses: &[RigidTransform]) -> Result<()> {
    let doc = PosesDocument {
        version: FORMAT_VERSION,
        poses: poses
            .iter()
            .enumerate()
            .map(|(id, t)| PoseEntry {
                id,
                matrix: pose_to_matrix(t),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc)?;
    write_atomic(path, json.as_bytes())
}

/// Loads a poses file; entries must cover ids 0..n exactly once.
pub fn load_poses(path: &Path) -> Result<Vec<RigidTransform>> {
    let doc: PosesDocument = serde_json::from_str(&fs::read_to_string(path)?)?;
    let n = doc.poses.len();
    let mut out = vec![None; n];
    for entry in &doc.poses {
        if entry.id >= n || out[entry.id].is_some() {
            return Err(Error::Format(format!("bad or duplicate pose id {}", entry.id)));
        }
        out[entry.id] = Some(matrix_to_pose(&entry.matrix)?);
    }
    Ok(out.into_iter().map(|p| p.unwrap()).collect())
}

/// Builds the serializable document for a graph. `point_paths` and
/// `descriptor_paths` supply the per-scan file names already written (or
/// None for scans without them).
pub fn document_from_graph(
    graph: &PoseGraph,
    point_paths: &[Option<String>],
    descriptor_paths: &[Option<String>],
) -> GraphDocument {
    GraphDocument {
        version: FORMAT_VERSION,
        scans: graph
            .scans
            .iter()
            .map(|s| ScanEntry {
                id: s.id,
                points: point_paths.get(s.id).cloned().flatten(),
                descriptors: descriptor_paths.get(s.id).cloned().flatten(),
                global_feature: s.global_feature.clone(),
            })
            .collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| EdgeEntry {
                i: e.i,
                j: e.j,
                overlap_score: e.overlap_score,
                pose: e.relative_pose.as_ref().map(pose_to_matrix),
                inlier_count: e.inlier_count,
                weight: e.weight,
            })
            .collect(),
    }
}

/// Materializes a document into a graph, loading point and descriptor
/// files relative to `base_dir`. Scan ids must be 0..n in order.
pub fn graph_from_document(doc: &GraphDocument, base_dir: &Path) -> Result<PoseGraph> {
    let mut scans = Vec::with_capacity(doc.scans.len());
    for (expected, entry) in doc.scans.iter().enumerate() {
        if entry.id != expected {
            return Err(Error::Format(format!(
                "scan ids must be 0..n in order, found {} at position {}",
                entry.id, expected
            )));
        }
        let points = match &entry.points {
            Some(rel) => read_points(&base_dir.join(rel))?,
            None => Vec::new(),
        };
        let mut scan = Scan::new(entry.id, points);
        if let Some(rel) = &entry.descriptors {
            let desc = read_descriptors(&base_dir.join(rel))?;
            scan = scan.with_descriptors(desc)?;
        }
        if let Some(f) = &entry.global_feature {
            scan = scan.with_global_feature(f.clone())?;
        }
        scans.push(scan);
    }
    let mut graph = PoseGraph::new(scans);
    for entry in &doc.edges {
        let mut edge = Edge::new(entry.i, entry.j, entry.overlap_score);
        if let Some(m) = &entry.pose {
            edge.relative_pose = Some(matrix_to_pose(m)?);
        }
        edge.inlier_count = entry.inlier_count;
        edge.weight = entry.weight;
        graph.add_edge(edge)?;
    }
    Ok(graph)
}

/// Reads a point file by extension: `.ply` as ASCII PLY, anything else as
/// a raw little-endian f32 triple stream.
pub fn read_points(path: &Path) -> Result<Vec<Vector3<f64>>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => read_ply(path),
        _ => read_xyz_bin(path),
    }
}

pub fn write_ply(path: &Path, points: &[Vector3<f64>]) -> Result<()> {
    let mut out = String::with_capacity(64 + points.len() * 24);
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", points.len()));
    out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in points {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_ply(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim() == "ply" => {}
        _ => return Err(Error::Format("missing ply magic".into())),
    }
    let mut count: Option<usize> = None;
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        if let Some(rest) = line.strip_prefix("element vertex ") {
            count = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| Error::Format("bad vertex count".into()))?,
            );
        } else if line.starts_with("element ") {
            return Err(Error::Format("only vertex elements are supported".into()));
        }
    }
    let count = count.ok_or_else(|| Error::Format("no vertex element in header".into()))?;
    let mut points = Vec::with_capacity(count);
    for line in lines.take(count) {
        let mut it = line.split_whitespace().map(|t| t.parse::<f64>());
        let (x, y, z) = match (it.next(), it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y)), Some(Ok(z))) => (x, y, z),
            _ => return Err(Error::Format("bad vertex line".into())),
        };
        points.push(Vector3::new(x, y, z));
    }
    if points.len() != count {
        return Err(Error::Format(format!(
            "expected {count} vertices, file has {}",
            points.len()
        )));
    }
    Ok(points)
}

pub fn write_xyz_bin(path: &Path, points: &[Vector3<f64>]) -> Result<()> {
    let mut bytes = Vec::with_capacity(points.len() * 12);
    for p in points {
        for c in 0..3 {
            bytes.extend_from_slice(&(p[c] as f32).to_le_bytes());
        }
    }
    write_atomic(path, &bytes)
}

pub fn read_xyz_bin(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 12 != 0 {
        return Err(Error::Format(format!(
            "xyz stream length {} is not a multiple of 12",
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / 12);
    for chunk in bytes.chunks_exact(12) {
        let f = |o: usize| f32::from_le_bytes([chunk[o], chunk[o + 1], chunk[o + 2], chunk[o + 3]]);
        points.push(Vector3::new(f(0) as f64, f(4) as f64, f(8) as f64));
    }
    Ok(points)
}

pub fn write_descriptors(path: &Path, desc: &Descriptors) -> Result<()> {
    let count = desc.len() as u32;
    let dim = desc.dim as u32;
    let mut bytes = Vec::with_capacity(8 + desc.data.len() * 4);
    bytes.extend_from_slice(&count.to_le_bytes());
    bytes.extend_from_slice(&dim.to_le_bytes());
    for &x in &desc.data {
        bytes.extend_from_slice(&(x as f32).to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_descriptors(path: &Path) -> Result<Descriptors> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 {
        return Err(Error::Format("descriptor file shorter than header".into()));
    }
    let count = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let dim = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    let expected = 8 + count * dim * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "descriptor payload is {} bytes, header implies {}",
            bytes.len(),
            expected
        )));
    }
    if dim == 0 {
        return Err(Error::Format("descriptor dimension is zero".into()));
    }
    let mut data = Vec::with_capacity(count * dim);
    for chunk in bytes[8..].chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
    }
    Descriptors::new(dim, data)
}
