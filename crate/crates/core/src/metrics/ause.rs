use crate::error::{Error, Result};
use crate::grid::{DepthMap, UncertaintyMap};

use super::{overlap, within_delta};

/// Number of sparsification fractions, `0, 0.01, …, 0.99`.
pub const SPARSIFICATION_STEPS: usize = 100;

/// Minimum overlap for a map-level evaluation.
pub const AUSE_MIN_PIXELS: usize = 100;

/// δ1 (percent) after removing the most uncertain fraction of pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsificationCurve {
    pub fractions: Vec<f64>,
    pub method_delta1: Vec<f64>,
    pub oracle_delta1: Vec<f64>,
    pub random_delta1: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuseResult {
    pub ause: f64,
    /// NaN when the random curve coincides with the oracle.
    pub nause: f64,
    pub curve: SparsificationCurve,
}

/// δ1 curve when pixels are dropped in `order` (most uncertain first).
fn curve(good: &[bool], order: &[usize]) -> Vec<f64> {
    let n = good.len();
    let total = good.iter().filter(|g| **g).count();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for &i in order {
        prefix.push(prefix.last().unwrap() + good[i] as usize);
    }
    (0..SPARSIFICATION_STEPS)
        .map(|k| {
            let removed = k * n / SPARSIFICATION_STEPS;
            100.0 * (total - prefix[removed]) as f64 / (n - removed) as f64
        })
        .collect()
}

/// Indices by descending key; ties keep ascending index order.
fn descending(key: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
    order
}

fn mean_gap(upper: &[f64], lower: &[f64]) -> f64 {
    upper.iter().zip(lower).map(|(u, l)| (u - l) / 100.0).sum::<f64>() / upper.len() as f64
}

/// Sparsification on per-pixel samples: `good` is the δ1 hit flag, `abs_log_err` drives the
/// oracle ordering, `sigma` the method ordering.
pub fn ause_from_samples(good: &[bool], abs_log_err: &[f64], sigma: &[f64]) -> Result<AuseResult> {
    if good.len() != abs_log_err.len() || good.len() != sigma.len() {
        return Err(Error::usage("sparsification inputs differ in length"));
    }
    if good.is_empty() {
        return Err(Error::degenerate("no pixels to sparsify"));
    }
    let method = curve(good, &descending(sigma));
    let oracle = curve(good, &descending(abs_log_err));
    let random = vec![method[0]; SPARSIFICATION_STEPS];
    let ause = mean_gap(&oracle, &method);
    let random_ause = mean_gap(&oracle, &random);
    let nause = if random_ause == 0.0 { f64::NAN } else { ause / random_ause };
    Ok(AuseResult {
        ause,
        nause,
        curve: SparsificationCurve {
            fractions: (0..SPARSIFICATION_STEPS)
                .map(|k| k as f64 / SPARSIFICATION_STEPS as f64)
                .collect(),
            method_delta1: method,
            oracle_delta1: oracle,
            random_delta1: random,
        },
    })
}

/// δ1 hit flags, absolute log errors and σ over the valid overlap of `pred`, `gt` and finite `sigma`, in row-major order.
pub fn uncertainty_samples(
    pred: &DepthMap,
    gt: &DepthMap,
    sigma: &UncertaintyMap,
) -> Result<(Vec<bool>, Vec<f64>, Vec<f64>)> {
    pred.values.ensure_shape(sigma, "uncertainty map")?;
    let (p, g, s) = (pred.values.as_slice(), gt.values.as_slice(), sigma.as_slice());
    let idx: Vec<usize> = overlap(pred, gt)?.into_iter().filter(|&i| s[i].is_finite()).collect();
    Ok((
        idx.iter().map(|&i| within_delta(p[i], g[i], 1)).collect(),
        idx.iter().map(|&i| (p[i].ln() - g[i].ln()).abs()).collect(),
        idx.iter().map(|&i| s[i]).collect(),
    ))
}

pub fn ause(pred: &DepthMap, gt: &DepthMap, sigma: &UncertaintyMap) -> Result<AuseResult> {
    let (good, err, s) = uncertainty_samples(pred, gt, sigma)?;
    if good.len() < AUSE_MIN_PIXELS {
        return Err(Error::degenerate(format!(
            "sparsification needs at least {AUSE_MIN_PIXELS} valid pixels, got {}",
            good.len()
        )));
    }
    ause_from_samples(&good, &err, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    /// Re-evaluates δ1 from scratch at every fraction by explicit removal.
    fn brute(good: &[bool], key: &[f64]) -> Vec<f64> {
        let n = good.len();
        (0..100)
            .map(|k| {
                let drop = k * n / 100;
                let kept: Vec<usize> = (0..n)
                    .filter(|&i| {
                        let rank = (0..n)
                            .filter(|&j| key[j] > key[i] || (key[j] == key[i] && j < i))
                            .count();
                        rank >= drop
                    })
                    .collect();
                100.0 * kept.iter().filter(|&&i| good[i]).count() as f64 / kept.len() as f64
            })
            .collect()
    }

    #[test]
    fn eight_pixel_case() {
        let err = [0.05, 0.4, 0.1, 0.3, 0.01, 0.25, 0.2, 0.02];
        let good: Vec<bool> = err.iter().map(|e| *e < 1.25f64.ln()).collect();
        let sigma = [0.3, 0.1, 0.2, 0.5, 0.05, 0.4, 0.4, 0.0];
        let r = ause_from_samples(&good, &err, &sigma).unwrap();
        assert_eq!(r.curve.method_delta1, brute(&good, &sigma));
        assert_eq!(r.curve.oracle_delta1, brute(&good, &err));
        assert!(r.ause > 0.0);
    }

    #[test]
    fn oracle_sigma_is_zero() {
        let pred = DepthMap::from_values(Grid::from_fn(12, 12, |x, y| 1.0 + ((x * 7 + y * 13) % 11) as f64 * 0.1));
        let gt = DepthMap::constant(12, 12, 1.4);
        let sigma = pred.values.map(|d| (d.ln() - 1.4f64.ln()).abs());
        let r = ause(&pred, &gt, &sigma).unwrap();
        assert_eq!(r.ause, 0.0);
        assert_eq!(r.nause, 0.0);
        let r = ause(&pred, &gt, &sigma.map(|s| s.exp() * 3.0)).unwrap();
        assert_eq!(r.ause, 0.0);
    }

    #[test]
    fn too_few_pixels() {
        let d = DepthMap::constant(5, 5, 1.0);
        assert!(ause(&d, &d, &Grid::filled(5, 5, 0.0)).is_err());
    }
}
