//! Deterministic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use metricdepth_core::geometry::point_from_angles;
use metricdepth_core::losses::OutputMaps;
use metricdepth_core::{DepthMap, Grid, UncertaintyMap, Vec3};

pub use metricdepth_core::patchkernel::bench_fixture as kernel_fixture;

/// Ground truth, a noisy prediction of it, and an uncertainty map.
pub struct MetricFixture {
    pub gt: DepthMap,
    pub pred: DepthMap,
    pub sigma: UncertaintyMap,
}

pub fn metric_fixture(width: usize, height: usize, seed: u64) -> MetricFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = DepthMap::from_values(Grid::from_fn(width, height, |x, y| {
        if (x * 7 + y * 13) % 29 == 0 {
            f64::NAN
        } else {
            2.0 + 8.0 * ((x as f64 * 0.02).sin() * (y as f64 * 0.03).cos()).abs()
        }
    }));
    let noise = Grid::from_fn(width, height, |_, _| rng.random_range(-0.3f64..0.3));
    let pred = DepthMap::from_values(Grid::from_fn(width, height, |x, y| 1.1 * gt.values[(x, y)].max(1.0) * noise[(x, y)].exp()));
    let sigma = Grid::from_fn(width, height, |x, y| noise[(x, y)].abs() + rng.random_range(0.0..0.2));
    MetricFixture { gt, pred, sigma }
}

/// Two clouds of `n` points each, the second a jittered copy of the first.
pub fn cloud_pair(n: usize, seed: u64) -> (Vec<Vec3>, Vec<Vec3>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt: Vec<Vec3> = (0..n)
        .map(|_| {
            let (t, p) = (rng.random_range(-0.6..0.6), rng.random_range(-0.45..0.45));
            point_from_angles(t, p, rng.random_range(2.0..10.0)).expect("front-facing")
        })
        .collect();
    let pred = gt
        .iter()
        .map(|q| q.map(|c| c + rng.random_range(-0.05..0.05)))
        .collect();
    (pred, gt)
}

/// Random pseudo-spherical outputs for the λMSE loss.
pub fn output_maps(width: usize, height: usize, seed: u64) -> (OutputMaps, OutputMaps, Grid<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = || {
        OutputMaps::new(
            Grid::from_fn(width, height, |_, _| rng.random_range(-0.8..0.8)),
            Grid::from_fn(width, height, |_, _| rng.random_range(-0.6..0.6)),
            Grid::from_fn(width, height, |_, _| rng.random_range(0.0..3.0)),
        )
        .expect("equal shapes")
    };
    let (a, b) = (map(), map());
    (a, b, Grid::filled(width, height, true))
}
