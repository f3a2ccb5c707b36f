use crate::error::Result;
use crate::geometry::{angle_between, AngleMap};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayAucConfig {
    pub theta_max_deg: f64,
    pub step_deg: f64,
}

impl Default for RayAucConfig {
    fn default() -> Self {
        Self {
            theta_max_deg: 15.0,
            step_deg: 0.1,
        }
    }
}

/// Per-pixel angle (radians) between predicted and ground-truth rays.
pub fn angular_errors(pred: &AngleMap, gt: &AngleMap) -> Result<Vec<f64>> {
    pred.theta.ensure_shape(&gt.theta, "ground-truth angles")?;
    Ok((0..pred.height())
        .flat_map(|y| (0..pred.width()).map(move |x| (x, y)))
        .map(|(x, y)| angle_between(pred.ray(x, y), gt.ray(x, y)))
        .collect())
}

/// `(1/θmax)·∫₀^θmax recall(t) dt` with `recall(t)` the fraction of pixels whose ray error
/// is at most `t`, integrated with a left Riemann sum on the step grid.
pub fn ray_auc(pred: &AngleMap, gt: &AngleMap, cfg: &RayAucConfig) -> Result<f64> {
    let mut err = angular_errors(pred, gt)?;
    if err.is_empty() {
        return Ok(0.0);
    }
    err.sort_by(f64::total_cmp);
    let steps = (cfg.theta_max_deg / cfg.step_deg).round().max(1.0) as usize;
    let n = err.len() as f64;
    let total: f64 = (0..steps)
        .map(|j| {
            let t = (j as f64 * cfg.step_deg).to_radians();
            err.partition_point(|e| *e <= t) as f64 / n
        })
        .sum();
    Ok(total / steps as f64)
}
