//! Evaluation protocol: depth accuracy, point-cloud F-score AUC, camera-ray AUC,
//! uncertainty sparsification, rank correlation, boundary F1, and dataset aggregation.

mod ause;
mod boundary;
mod depth;
mod fscore;
mod rays;
mod report;
mod spearman;

pub use ause::{
    ause, ause_from_samples, uncertainty_samples, AuseResult, SparsificationCurve, AUSE_MIN_PIXELS, SPARSIFICATION_STEPS,
};
pub use boundary::{boundary_f1, BoundaryConfig};
pub use depth::{align_prediction, depth_metrics, AlignmentMode, DepthMetrics};
pub use fscore::{fscore_auc, fscore_curve, nearest_distances, FScoreConfig};
pub use rays::{angular_errors, ray_auc, RayAucConfig};
pub use report::{aggregate, MetricRecord, MetricReport, MetricSummary};
pub use spearman::{fractional_ranks, spearman};

use crate::error::{Error, Result};
use crate::grid::DepthMap;

/// Row-major indices where both maps are valid.
pub(crate) fn overlap(pred: &DepthMap, gt: &DepthMap) -> Result<Vec<usize>> {
    pred.values.ensure_shape(&gt.values, "ground-truth depth")?;
    Ok(pred
        .mask
        .as_slice()
        .iter()
        .zip(gt.mask.as_slice())
        .enumerate()
        .filter(|(_, (a, b))| **a && **b)
        .map(|(i, _)| i)
        .collect())
}

pub(crate) fn nonempty_overlap(pred: &DepthMap, gt: &DepthMap) -> Result<Vec<usize>> {
    let idx = overlap(pred, gt)?;
    if idx.is_empty() {
        return Err(Error::degenerate("prediction and ground truth share no valid pixel"));
    }
    Ok(idx)
}

/// Median with the two middle values averaged for even counts. Sorts in place.
pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

/// `max(a/b, b/a) < 1.25`.
#[inline]
pub(crate) fn within_delta(a: f64, b: f64, k: i32) -> bool {
    (a / b).max(b / a) < 1.25f64.powi(k)
}
