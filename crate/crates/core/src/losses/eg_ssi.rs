use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ValidityMask};
use crate::patchkernel::{pairwise_sum, Patch, PatchSet};

use super::{LossValue, Wrt};

/// Degeneracy thresholds of the edge-guided loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgSsiConfig {
    /// Patches with fewer valid ground-truth pixels are skipped.
    pub min_valid: usize,
    /// Patches where either side's MAD falls below this are skipped.
    pub mad_floor: f64,
}

impl Default for EgSsiConfig {
    fn default() -> Self {
        Self {
            min_valid: 16,
            mad_floor: 1e-6,
        }
    }
}

/// Valid pixels of one patch in row-major order.
#[derive(Clone, Debug, Default)]
pub(crate) struct PatchGather {
    pub pred: Vec<f64>,
    pub gt: Vec<f64>,
    pub idx: Vec<usize>,
}

impl PatchGather {
    pub fn collect(
        &mut self,
        patch: &Patch,
        pred: &Grid<f64>,
        gt: &Grid<f64>,
        mask: &ValidityMask,
    ) {
        self.pred.clear();
        self.gt.clear();
        self.idx.clear();
        let w = pred.width();
        let (x0, y0) = patch.origin();
        let (p, g, m) = (pred.as_slice(), gt.as_slice(), mask.as_slice());
        for y in y0..y0 + patch.size {
            let row = y * w;
            for i in row + x0..row + x0 + patch.size {
                if m[i] && p[i].is_finite() {
                    self.pred.push(p[i]);
                    self.gt.push(g[i]);
                    self.idx.push(i);
                }
            }
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// ∂median/∂x_k for the given middle order statistics. Tied selections get 0.
fn median_weights(x: &[f64], (lo, hi): (f64, f64), out: &mut Vec<f64>) {
    out.clear();
    out.resize(x.len(), 0.0);
    let mark = |out: &mut Vec<f64>, v: f64, w: f64| {
        let mut hit = None;
        for (k, xv) in x.iter().enumerate() {
            if *xv == v {
                if hit.is_some() {
                    return;
                }
                hit = Some(k);
            }
        }
        if let Some(k) = hit {
            out[k] = w;
        }
    };
    if lo == hi {
        mark(out, lo, 1.0);
    } else {
        mark(out, lo, 0.5);
        mark(out, hi, 0.5);
    }
}

/// Contribution of one gathered patch, given the two middle order statistics of each side.
///
/// Returns `None` when either side's MAD falls below the floor. Shared by the serial
/// reference and the parallel kernel so both produce bit-identical results.
pub(crate) fn finish_patch(
    g: &PatchGather,
    pred_mid: (f64, f64),
    gt_mid: (f64, f64),
    mad_floor: f64,
    grad_out: Option<&mut Vec<f64>>,
) -> Option<f64> {
    let n = g.pred.len() as f64;
    let m = 0.5 * (pred_mid.0 + pred_mid.1);
    let mt = 0.5 * (gt_mid.0 + gt_mid.1);
    let s = g.pred.iter().map(|x| (x - m).abs()).sum::<f64>() / n;
    let st = g.gt.iter().map(|x| (x - mt).abs()).sum::<f64>() / n;
    if !(s >= mad_floor && st >= mad_floor) {
        return None;
    }
    let mut value = 0.0;
    for (x, xt) in g.pred.iter().zip(&g.gt) {
        value += ((x - m) / s - (xt - mt) / st).abs();
    }
    value /= n;

    if let Some(grad) = grad_out {
        // L = (1/n) Σ |y_i − t_i|, y_i = (x_i − m)/s.
        let gi: Vec<f64> = g
            .pred
            .iter()
            .zip(&g.gt)
            .map(|(x, xt)| sign((x - m) / s - (xt - mt) / st) / n)
            .collect();
        let big_g: f64 = gi.iter().sum();
        let big_h: f64 = gi.iter().zip(&g.pred).map(|(a, x)| a * (x - m)).sum();
        let big_s: f64 = g.pred.iter().map(|x| sign(x - m)).sum();
        let mut dm = Vec::new();
        median_weights(&g.pred, pred_mid, &mut dm);
        grad.clear();
        grad.extend(g.pred.iter().enumerate().map(|(k, x)| {
            let ds = (sign(x - m) - big_s * dm[k]) / n;
            gi[k] / s - big_g / s * dm[k] - big_h / (s * s) * ds
        }));
    }
    Some(value)
}

fn sorted_middle(values: &[f64], scratch: &mut Vec<f64>) -> (f64, f64) {
    scratch.clear();
    scratch.extend_from_slice(values);
    scratch.sort_by(f64::total_cmp);
    let n = scratch.len();
    (scratch[(n - 1) / 2], scratch[n / 2])
}

pub(crate) fn check_inputs(
    pred: &Grid<f64>,
    gt: &Grid<f64>,
    mask: &ValidityMask,
    patches: &[Patch],
) -> Result<()> {
    pred.ensure_shape(gt, "ground-truth inverse depth")?;
    pred.ensure_shape(mask, "ground-truth mask")?;
    let (w, h) = pred.shape();
    for (i, p) in patches.iter().enumerate() {
        if !p.fits(w, h) {
            return Err(Error::usage(format!(
                "patch {i} ({p:?}) does not fit a {w}×{h} image"
            )));
        }
    }
    Ok(())
}

/// Edge-guided scale-and-shift-invariant loss on inverse depth, serial reference.
///
/// Per patch, both maps are standardized by their median and mean absolute deviation
/// over valid ground-truth pixels, and the mean L1 difference is taken. The loss is
/// the mean over patches that pass the degeneracy checks. Gradients flow through the
/// median and MAD.
pub fn eg_ssi_loss(
    pred_inv: &Grid<f64>,
    gt_inv: &Grid<f64>,
    gt_mask: &ValidityMask,
    patches: &PatchSet,
    cfg: &EgSsiConfig,
    with_grad: bool,
) -> Result<LossValue> {
    check_inputs(pred_inv, gt_inv, gt_mask, &patches.entries)?;
    let mut gather = PatchGather::default();
    let mut scratch = Vec::new();
    let mut values = Vec::new();
    let mut grads: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for p in &patches.entries {
        gather.collect(p, pred_inv, gt_inv, gt_mask);
        if gather.pred.len() < cfg.min_valid.max(1) {
            continue;
        }
        let pm = sorted_middle(&gather.pred, &mut scratch);
        let gm = sorted_middle(&gather.gt, &mut scratch);
        let mut grad = Vec::new();
        let out = finish_patch(
            &gather,
            pm,
            gm,
            cfg.mad_floor,
            with_grad.then_some(&mut grad),
        );
        if let Some(v) = out {
            values.push(v);
            if with_grad {
                grads.push((gather.idx.clone(), grad));
            }
        }
    }
    if values.is_empty() {
        return Err(Error::degenerate(format!(
            "all {} patches were skipped",
            patches.entries.len()
        )));
    }
    let count = values.len() as f64;
    let mut out = LossValue::scalar(pairwise_sum(&values) / count);
    if with_grad {
        let mut g = Grid::filled(pred_inv.width(), pred_inv.height(), 0.0);
        let gs = g.as_mut_slice();
        for (idx, grad) in &grads {
            for (i, d) in idx.iter().zip(grad) {
                gs[*i] += d / count;
            }
        }
        out.grads.insert(Wrt::InvDepth, g);
    }
    Ok(out)
}
