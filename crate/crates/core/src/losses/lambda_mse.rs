use crate::error::{Error, Result};
use crate::geometry::AngleMap;
use crate::grid::{DepthMap, Grid, ValidityMask};

use super::{LossValue, Wrt};

/// Dense pseudo-spherical output `(θ, φ, z_log)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputMaps {
    pub theta: Grid<f64>,
    pub phi: Grid<f64>,
    pub z_log: Grid<f64>,
}

impl OutputMaps {
    pub fn new(theta: Grid<f64>, phi: Grid<f64>, z_log: Grid<f64>) -> Result<Self> {
        theta.ensure_shape(&phi, "phi")?;
        theta.ensure_shape(&z_log, "z_log")?;
        Ok(Self { theta, phi, z_log })
    }

    pub fn from_angles_depth(angles: &AngleMap, depth: &DepthMap) -> Result<Self> {
        Self::new(angles.theta.clone(), angles.phi.clone(), depth.log_depth())
    }

    fn dims(&self) -> [&Grid<f64>; 3] {
        [&self.theta, &self.phi, &self.z_log]
    }
}

/// Empirical per-dimension mean and population variance of the error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorStats {
    pub mean: [f64; 3],
    pub var: [f64; 3],
    pub count: usize,
}

fn residuals(pred: &OutputMaps, gt: &OutputMaps, mask: &ValidityMask) -> Result<[Vec<f64>; 3]> {
    pred.theta.ensure_shape(&gt.theta, "ground-truth output")?;
    pred.theta.ensure_shape(mask, "mask")?;
    let p = pred.dims();
    let g = gt.dims();
    let mut eps: [Vec<f64>; 3] = Default::default();
    for (d, e) in eps.iter_mut().enumerate() {
        *e = p[d]
            .as_slice()
            .iter()
            .zip(g[d].as_slice())
            .zip(mask.as_slice())
            .filter(|(_, m)| **m)
            .map(|((a, b), _)| a - b)
            .collect();
    }
    Ok(eps)
}

fn stats_of(eps: &[Vec<f64>; 3]) -> ErrorStats {
    let n = eps[0].len();
    let nf = n as f64;
    let mut mean = [0.0; 3];
    let mut var = [0.0; 3];
    for d in 0..3 {
        mean[d] = eps[d].iter().sum::<f64>() / nf;
        var[d] = eps[d].iter().map(|e| (e - mean[d]).powi(2)).sum::<f64>() / nf;
    }
    ErrorStats {
        mean,
        var,
        count: n,
    }
}

pub fn error_stats(pred: &OutputMaps, gt: &OutputMaps, mask: &ValidityMask) -> Result<ErrorStats> {
    let eps = residuals(pred, gt, mask)?;
    if eps[0].is_empty() {
        return Err(Error::degenerate("no valid pixels"));
    }
    Ok(stats_of(&eps))
}

/// `Σ_d V_d[ε] + λ_d·E_d[ε]²` over valid pixels.
///
/// The gradient with respect to the prediction in dimension `d` at pixel `i` is
/// `(2/N)·(ε_i − (1 − λ_d)·E_d[ε])`.
pub fn lambda_mse(
    pred: &OutputMaps,
    gt: &OutputMaps,
    mask: &ValidityMask,
    lambda: [f64; 3],
    with_grad: bool,
) -> Result<LossValue> {
    let eps = residuals(pred, gt, mask)?;
    let n = eps[0].len();
    if n < 2 {
        return Err(Error::degenerate(format!(
            "λMSE needs at least 2 valid pixels, got {n}"
        )));
    }
    let stats = stats_of(&eps);
    let value = (0..3)
        .map(|d| stats.var[d] + lambda[d] * stats.mean[d] * stats.mean[d])
        .sum();
    let mut out = LossValue::scalar(value);
    if with_grad {
        let nf = n as f64;
        for (d, wrt) in [Wrt::Theta, Wrt::Phi, Wrt::ZLog].into_iter().enumerate() {
            let shift = (1.0 - lambda[d]) * stats.mean[d];
            let mut g = Grid::filled(mask.width(), mask.height(), 0.0);
            let mut k = 0;
            for (gi, m) in g.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                if *m {
                    *gi = 2.0 / nf * (eps[d][k] - shift);
                    k += 1;
                }
            }
            out.grads.insert(wrt, g);
        }
    }
    Ok(out)
}
