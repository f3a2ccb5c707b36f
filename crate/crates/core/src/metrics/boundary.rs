use crate::error::{Error, Result};
use crate::grid::DepthMap;

use super::{align_prediction, AlignmentMode};

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryConfig {
    /// Ratio thresholds in percent: a crossing needs `max(d_p/d_q, d_q/d_p) > 1 + t/100`.
    pub thresholds_pct: Vec<f64>,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            thresholds_pct: vec![5.0, 10.0, 15.0, 20.0, 25.0],
        }
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    (a / b).max(b / a)
}

/// Scale-invariant boundary F1 in percent, averaged over the thresholds.
///
/// Edges join 4-neighbors valid in both maps. A threshold at which neither map has a
/// crossing scores 1. Returns a degenerate-input error when ground truth has no
/// crossing at any threshold.
pub fn boundary_f1(pred: &DepthMap, gt: &DepthMap, cfg: &BoundaryConfig) -> Result<f64> {
    if cfg.thresholds_pct.is_empty() {
        return Err(Error::usage("at least one boundary threshold is required"));
    }
    let pred = align_prediction(pred, gt, AlignmentMode::MedianScale)?;
    let (w, h) = (gt.width(), gt.height());
    let ok = |i: usize| pred.mask.as_slice()[i] && gt.mask.as_slice()[i];
    let (p, g) = (pred.values.as_slice(), gt.values.as_slice());
    let mut edges = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !ok(i) {
                continue;
            }
            for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)].into_iter().flatten() {
                if ok(j) {
                    edges.push((ratio(p[i], p[j]), ratio(g[i], g[j])));
                }
            }
        }
    }
    let mut any_gt = false;
    let mut total = 0.0;
    for t in &cfg.thresholds_pct {
        let lim = 1.0 + t / 100.0;
        let (mut tp, mut np, mut ng) = (0usize, 0usize, 0usize);
        for &(rp, rg) in &edges {
            let (cp, cg) = (rp > lim, rg > lim);
            np += cp as usize;
            ng += cg as usize;
            tp += (cp && cg) as usize;
        }
        any_gt |= ng > 0;
        total += if np == 0 && ng == 0 {
            1.0
        } else {
            2.0 * tp as f64 / (np + ng) as f64
        };
    }
    if !any_gt {
        return Err(Error::degenerate("ground truth has no depth boundary"));
    }
    Ok(100.0 * total / cfg.thresholds_pct.len() as f64)
}
