//! Gauge-free evaluation: relative-pose errors, registration recall, and
//! ECDF tables.
//!
//! Every metric is computed on pairwise relative poses derived from the
//! global poses, so applying one rigid transform to all predictions (or
//! choosing a different gauge per component) changes nothing.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{angular_distance, RigidTransform};

/// Rotation-error ECDF thresholds, degrees.
pub const ROTATION_THRESHOLDS_DEG: [f64; 5] = [3.0, 5.0, 10.0, 30.0, 45.0];

/// Translation-error ECDF thresholds, meters.
pub const TRANSLATION_THRESHOLDS_M: [f64; 5] = [0.05, 0.1, 0.25, 0.5, 0.75];

/// Default registration-recall success distance (indoor), meters.
pub const DEFAULT_RR_THRESHOLD: f64 = 0.2;

/// One evaluated scan pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    /// Rotation error, degrees.
    pub re: f64,
    /// Translation error, meters.
    pub te: f64,
    /// Set when the pair passed the recall distance check.
    pub success: bool,
}

/// Full metrics output.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub pairs: Vec<PairRecord>,
    /// successes / evaluated pairs, in [0, 1].
    pub recall: f64,
    /// Fraction of pairs with re ≤ threshold, per entry of
    /// [`ROTATION_THRESHOLDS_DEG`].
    pub rotation_ecdf: [f64; 5],
    /// Fraction of pairs with te ≤ threshold, per entry of
    /// [`TRANSLATION_THRESHOLDS_M`].
    pub translation_ecdf: [f64; 5],
    pub mean_re: f64,
    pub median_re: f64,
    pub mean_te: f64,
    pub median_te: f64,
}

/// A scan pair to evaluate, carrying the point set used for the recall
/// distance check. Points are in scan j's frame; for synthetic scenes
/// these are the planted co-located points of the pair.
#[derive(Clone, Debug)]
pub struct EvalPair {
    pub i: usize,
    pub j: usize,
    pub points: Vec<Vector3<f64>>,
}

/// Rotation and translation error of the predicted relative pose of pair
/// (i, j) against its ground truth: re in degrees, te as the Euclidean
/// distance between the relative translations, meters.
pub fn pose_errors(
    pred_i: &RigidTransform,
    pred_j: &RigidTransform,
    gt_i: &RigidTransform,
    gt_j: &RigidTransform,
) -> (f64, f64) {
    let pred = RigidTransform::relative(pred_i, pred_j);
    let gt = RigidTransform::relative(gt_i, gt_j);
    let re = angular_distance(&pred.rotation, &gt.rotation);
    let te = (pred.translation - gt.translation).norm();
    (re, te)
}

/// Registration recall: the fraction of evaluation pairs whose points,
/// mapped by the predicted and the ground-truth relative pose, end up
/// within `dist_threshold` of each other on average.
pub fn registration_recall(
    pred: &[RigidTransform],
    gt: &[RigidTransform],
    pairs: &[EvalPair],
    dist_threshold: f64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let mut successes = 0usize;
    for pair in pairs {
        if pair_success(pred, gt, pair, dist_threshold) {
            successes += 1;
        }
    }
    Ok(successes as f64 / pairs.len() as f64)
}

fn pair_success(
    pred: &[RigidTransform],
    gt: &[RigidTransform],
    pair: &EvalPair,
    dist_threshold: f64,
) -> bool {
    if pair.points.is_empty() {
        return false;
    }
    let t_pred = RigidTransform::relative(&pred[pair.i], &pred[pair.j]);
    let t_gt = RigidTransform::relative(&gt[pair.i], &gt[pair.j]);
    let mean: f64 = pair
        .points
        .iter()
        .map(|p| (t_pred.apply(p) - t_gt.apply(p)).norm())
        .sum::<f64>()
        / pair.points.len() as f64;
    mean < dist_threshold
}

/// ECDF fractions plus mean and median over a list of (re, te) errors.
pub fn ecdf_report(errors: &[(f64, f64)]) -> Result<([f64; 5], [f64; 5], f64, f64, f64, f64)> {
    if errors.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = errors.len() as f64;
    let mut rotation_ecdf = [0.0; 5];
    let mut translation_ecdf = [0.0; 5];
    for (slot, &t) in ROTATION_THRESHOLDS_DEG.iter().enumerate() {
        rotation_ecdf[slot] = errors.iter().filter(|(re, _)| *re <= t).count() as f64 / n;
    }
    for (slot, &t) in TRANSLATION_THRESHOLDS_M.iter().enumerate() {
        translation_ecdf[slot] = errors.iter().filter(|(_, te)| *te <= t).count() as f64 / n;
    }
    let mean_re = errors.iter().map(|(re, _)| re).sum::<f64>() / n;
    let mean_te = errors.iter().map(|(_, te)| te).sum::<f64>() / n;
    Ok((
        rotation_ecdf,
        translation_ecdf,
        mean_re,
        median(errors.iter().map(|(re, _)| *re)),
        mean_te,
        median(errors.iter().map(|(_, te)| *te)),
    ))
}

/// Median of a non-empty sequence (mean of the middle two when even).
pub fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Evaluates predicted against ground-truth poses over the given pairs.
pub fn evaluate(
    pred: &[RigidTransform],
    gt: &[RigidTransform],
    pairs: &[EvalPair],
    rr_threshold: f64,
) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let mut records = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let (re, te) = pose_errors(&pred[pair.i], &pred[pair.j], &gt[pair.i], &gt[pair.j]);
        records.push(PairRecord {
            i: pair.i,
            j: pair.j,
            re,
            te,
            success: pair_success(pred, gt, pair, rr_threshold),
        });
    }
    let errors: Vec<(f64, f64)> = records.iter().map(|r| (r.re, r.te)).collect();
    let (rotation_ecdf, translation_ecdf, mean_re, median_re, mean_te, median_te) =
        ecdf_report(&errors)?;
    let recall = records.iter().filter(|r| r.success).count() as f64 / records.len() as f64;
    Ok(MetricsReport {
        pairs: records,
        recall,
        rotation_ecdf,
        translation_ecdf,
        mean_re,
        median_re,
        mean_te,
        median_te,
    })
}

/// CSV rows (i, j, re_deg, te_m, success), one per pair, with a header.
pub fn report_csv(report: &MetricsReport) -> String {
    let mut out = String::from("i,j,re_deg,te_m,success\n");
    for r in &report.pairs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.i, r.j, r.re, r.te, r.success as u8
        ));
    }
    out
}

/// Human-readable summary of a metrics report.
pub fn report_summary(report: &MetricsReport, rr_threshold: f64) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "pairs evaluated: {}\nregistration recall @ {:.3} m: {:.4}\n",
        report.pairs.len(),
        rr_threshold,
        report.recall
    ));
    out.push_str(&format!(
        "rotation error: mean {:.4}°, median {:.4}°\n",
        report.mean_re, report.median_re
    ));
    out.push_str(&format!(
        "translation error: mean {:.4} m, median {:.4} m\n",
        report.mean_te, report.median_te
    ));
    out.push_str("rotation ECDF:");
    for (t, v) in ROTATION_THRESHOLDS_DEG.iter().zip(report.rotation_ecdf) {
        out.push_str(&format!("  {:.0}°:{:.3}", t, v));
    }
    out.push_str("\ntranslation ECDF:");
    for (t, v) in TRANSLATION_THRESHOLDS_M.iter().zip(report.translation_ecdf) {
        out.push_str(&format!("  {:.2}m:{:.3}", t, v));
    }
    out.push('\n');
    out
}
