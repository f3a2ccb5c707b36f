use crate::error::{Error, Result};
use crate::grid::{Grid, UncertaintyMap, ValidityMask};

use super::{LossValue, Wrt};

/// `mean |Σ − sg(|z_log − z*_log|)|` over valid pixels. Only Σ receives gradient.
pub fn uncertainty_l1(
    sigma: &UncertaintyMap,
    z_log_pred: &Grid<f64>,
    z_log_gt: &Grid<f64>,
    mask: &ValidityMask,
    with_grad: bool,
) -> Result<LossValue> {
    sigma.ensure_shape(z_log_pred, "predicted log-depth")?;
    sigma.ensure_shape(z_log_gt, "ground-truth log-depth")?;
    sigma.ensure_shape(mask, "mask")?;
    let n = mask.as_slice().iter().filter(|m| **m).count();
    if n == 0 {
        return Err(Error::degenerate("uncertainty loss has an empty mask"));
    }
    let nf = n as f64;
    let mut sum = 0.0;
    let mut grad = with_grad.then(|| Grid::filled(sigma.width(), sigma.height(), 0.0));
    for i in 0..sigma.len() {
        if !mask.as_slice()[i] {
            continue;
        }
        let target = (z_log_pred.as_slice()[i] - z_log_gt.as_slice()[i]).abs();
        let r = sigma.as_slice()[i] - target;
        sum += r.abs();
        if let Some(g) = grad.as_mut() {
            g.as_mut_slice()[i] = if r > 0.0 {
                1.0 / nf
            } else if r < 0.0 {
                -1.0 / nf
            } else {
                0.0
            };
        }
    }
    let mut out = LossValue::scalar(sum / nf);
    if let Some(g) = grad {
        out.grads.insert(Wrt::Sigma, g);
        out.grads
            .insert(Wrt::ZLogTarget, Grid::filled(sigma.width(), sigma.height(), 0.0));
    }
    Ok(out)
}
