use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FScoreConfig {
    /// Number of evenly spaced thresholds in `(0, d_max/20]`.
    pub thresholds: usize,
    /// Clouds larger than this are uniformly subsampled.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for FScoreConfig {
    fn default() -> Self {
        Self {
            thresholds: 20,
            max_points: 25_000,
            seed: 0,
        }
    }
}

fn subsample(points: &[Vec3], max: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    if points.len() <= max {
        return points.to_vec();
    }
    let mut idx = rand::seq::index::sample(rng, points.len(), max).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| points[i]).collect()
}

type Cell = (i64, i64, i64);

fn cell_of(p: &Vec3, side: f64) -> Cell {
    (
        (p[0] / side).floor() as i64,
        (p[1] / side).floor() as i64,
        (p[2] / side).floor() as i64,
    )
}

fn buckets(points: &[Vec3], side: f64) -> HashMap<Cell, Vec<usize>> {
    let mut map: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        map.entry(cell_of(p, side)).or_default().push(i);
    }
    map
}

/// Fine cells per search radius.
const SUBDIV: i64 = 4;

/// Distance from each query to its nearest reference point, or infinity when none
/// is strictly closer than `radius`.
///
/// A coarse hash grid with cell side `radius` rejects isolated queries; otherwise a
/// fine grid is searched in growing Chebyshev shells, stopping once no unvisited cell
/// can hold a closer point.
pub fn nearest_distances(queries: &[Vec3], refs: &[Vec3], radius: f64) -> Vec<f64> {
    let fine = radius / SUBDIV as f64;
    let coarse_map = buckets(refs, radius);
    let fine_map = buckets(refs, fine);
    let dist = |q: &Vec3, r: &Vec3| {
        ((q[0] - r[0]).powi(2) + (q[1] - r[1]).powi(2) + (q[2] - r[2]).powi(2)).sqrt()
    };
    queries
        .iter()
        .map(|q| {
            let (cx, cy, cz) = cell_of(q, radius);
            let near = (-1..=1).any(|dx| {
                (-1..=1).any(|dy| (-1..=1).any(|dz| coarse_map.contains_key(&(cx + dx, cy + dy, cz + dz))))
            });
            if !near {
                return f64::INFINITY;
            }
            let (fx, fy, fz) = cell_of(q, fine);
            let mut best = f64::INFINITY;
            for r in 0..=SUBDIV {
                for dx in -r..=r {
                    for dy in -r..=r {
                        for dz in -r..=r {
                            if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                                continue;
                            }
                            if let Some(b) = fine_map.get(&(fx + dx, fy + dy, fz + dz)) {
                                for &j in b {
                                    best = best.min(dist(q, &refs[j]));
                                }
                            }
                        }
                    }
                }
                // Unvisited cells are at least r fine cells away.
                if best <= r as f64 * fine {
                    break;
                }
            }
            if best < radius {
                best
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// F1 at each threshold `τ_k = k·d_max / (20·K)`, `k = 1..=K`. A point matches when
/// its nearest neighbor in the other cloud is strictly closer than `τ_k`.
pub fn fscore_curve(pred: &[Vec3], gt: &[Vec3], d_max: f64, cfg: &FScoreConfig) -> Result<Vec<f64>> {
    if !(d_max.is_finite() && d_max > 0.0) {
        return Err(Error::usage(format!("maximum depth must be positive, got {d_max}")));
    }
    if cfg.thresholds == 0 {
        return Err(Error::usage("at least one threshold is required"));
    }
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::degenerate("F-score needs two nonempty clouds"));
    }
    // Same stream for both clouds: equal-size clouds keep corresponding points.
    let pred = subsample(pred, cfg.max_points, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let gt = subsample(gt, cfg.max_points, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let k = cfg.thresholds;
    let denom = 20.0 * k as f64;
    let taus: Vec<f64> = (1..=k).map(|i| i as f64 * d_max / denom).collect();
    let radius = taus[k - 1];
    let mut dp = nearest_distances(&pred, &gt, radius);
    let mut dg = nearest_distances(&gt, &pred, radius);
    dp.sort_by(f64::total_cmp);
    dg.sort_by(f64::total_cmp);
    Ok(taus
        .iter()
        .map(|&t| {
            let precision = dp.partition_point(|d| *d < t) as f64 / dp.len() as f64;
            let recall = dg.partition_point(|d| *d < t) as f64 / dg.len() as f64;
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .collect())
}

/// Area under the F1-vs-threshold curve up to `d_max/20`, normalized to `[0, 1]`.
pub fn fscore_auc(pred: &[Vec3], gt: &[Vec3], d_max: f64, cfg: &FScoreConfig) -> Result<f64> {
    let curve = fscore_curve(pred, gt, d_max, cfg)?;
    Ok(curve.iter().sum::<f64>() / curve.len() as f64)
}
