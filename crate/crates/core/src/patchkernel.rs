//! Parallel patch-loss kernel for the edge-guided loss.
//!
//! Patches are processed independently on a bounded worker pool. Per-patch values
//! are reduced with a pairwise tree whose shape depends only on the number of
//! patches, and gradients are scattered in patch order, so the output is
//! bit-identical for every thread count and equal to the serial reference in
//! [`crate::losses::eg_ssi_loss`].

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, ValidityMask};
use crate::losses::{finish_patch, EgSsiConfig, PatchGather};

/// Square patch of side `size`; its top-left corner is `(cx − size/2, cy − size/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Patch {
    pub cx: usize,
    pub cy: usize,
    pub size: usize,
}

impl Patch {
    #[inline]
    pub fn origin(&self) -> (usize, usize) {
        (self.cx - self.size / 2, self.cy - self.size / 2)
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        let half = self.size / 2;
        self.size > 0
            && self.cx >= half
            && self.cy >= half
            && self.cx - half + self.size <= width
            && self.cy - half + self.size <= height
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PatchSet {
    pub entries: Vec<Patch>,
    /// Seed the set was drawn with.
    pub seed: u64,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sum with a fixed binary tree: split at `n/2`, recurse. Leaves hold up to 8 values.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        s
    } else {
        let (a, b) = values.split_at(values.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Validated patch jobs over an image of fixed size.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchWorkPlan {
    pub patches: Vec<Patch>,
    pub width: usize,
    pub height: usize,
}

impl PatchWorkPlan {
    pub fn new(set: &PatchSet, width: usize, height: usize) -> Result<Self> {
        for (i, p) in set.entries.iter().enumerate() {
            if !p.fits(width, height) {
                return Err(Error::usage(format!(
                    "patch {i} ({p:?}) does not fit a {width}×{height} image"
                )));
            }
        }
        Ok(Self {
            patches: set.entries.clone(),
            width,
            height,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelOutput {
    pub value: f64,
    /// Contribution of each patch, `None` where the patch was skipped.
    pub per_patch: Vec<Option<f64>>,
    pub grad: Option<Grid<f64>>,
}

struct PatchResult {
    value: Option<f64>,
    idx: Vec<usize>,
    grad: Vec<f64>,
}

/// Lower and upper middle order statistics via selection on a private copy.
fn select_middle(values: &[f64], scratch: &mut Vec<f64>) -> (f64, f64) {
    scratch.clear();
    scratch.extend_from_slice(values);
    let n = scratch.len();
    let k = n / 2;
    let (left, hi, _) = scratch.select_nth_unstable_by(k, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        (hi, hi)
    } else {
        let lo = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

fn run_one(
    patch: &Patch,
    pred: &Grid<f64>,
    gt: &Grid<f64>,
    mask: &ValidityMask,
    cfg: &EgSsiConfig,
    with_grad: bool,
    gather: &mut PatchGather,
    scratch: &mut Vec<f64>,
) -> PatchResult {
    gather.collect(patch, pred, gt, mask);
    if gather.pred.len() < cfg.min_valid.max(1) {
        return PatchResult {
            value: None,
            idx: Vec::new(),
            grad: Vec::new(),
        };
    }
    let pm = select_middle(&gather.pred, scratch);
    let gm = select_middle(&gather.gt, scratch);
    let mut grad = Vec::new();
    let value = finish_patch(gather, pm, gm, cfg.mad_floor, with_grad.then_some(&mut grad));
    PatchResult {
        value,
        idx: if with_grad && value.is_some() {
            gather.idx.clone()
        } else {
            Vec::new()
        },
        grad,
    }
}

/// Runs the edge-guided loss over `plan` on `threads` workers.
pub fn run_patch_loss(
    plan: &PatchWorkPlan,
    pred: &Grid<f64>,
    gt: &Grid<f64>,
    mask: &ValidityMask,
    cfg: &EgSsiConfig,
    threads: usize,
    with_grad: bool,
) -> Result<KernelOutput> {
    if threads == 0 {
        return Err(Error::usage("thread count must be at least 1"));
    }
    crate::losses::check_inputs(pred, gt, mask, &plan.patches)?;
    if pred.shape() != (plan.width, plan.height) {
        return Err(Error::usage("plan was built for a different image size"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::usage(format!("cannot build worker pool: {e}")))?;

    pool.install(|| {
        let results: Vec<PatchResult> = plan
            .patches
            .par_iter()
            .map_init(
                || (PatchGather::default(), Vec::new()),
                |(gather, scratch), p| run_one(p, pred, gt, mask, cfg, with_grad, gather, scratch),
            )
            .collect();

        let per_patch: Vec<Option<f64>> = results.iter().map(|r| r.value).collect();
        let values: Vec<f64> = per_patch.iter().flatten().copied().collect();
        if values.is_empty() {
            return Err(Error::degenerate(format!(
                "all {} patches were skipped",
                plan.patches.len()
            )));
        }
        let count = values.len() as f64;
        let value = pairwise_sum(&values) / count;

        let grad = with_grad.then(|| {
            let w = plan.width;
            let mut g = Grid::filled(w, plan.height, 0.0);
            let rows_per_band = plan.height.div_ceil(threads * 4).max(1);
            g.as_mut_slice()
                .par_chunks_mut(rows_per_band * w)
                .enumerate()
                .for_each(|(band, chunk)| {
                    let start = band * rows_per_band * w;
                    let end = start + chunk.len();
                    for r in results.iter().filter(|r| r.value.is_some()) {
                        let lo = r.idx.partition_point(|i| *i < start);
                        let hi = r.idx.partition_point(|i| *i < end);
                        for k in lo..hi {
                            chunk[r.idx[k] - start] += r.grad[k] / count;
                        }
                    }
                });
            g
        });

        Ok(KernelOutput {
            value,
            per_patch,
            grad,
        })
    })
}

/// Benchmark sweep parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub counts: Vec<usize>,
    pub threads: Vec<usize>,
    /// Side of the square test image.
    pub image_side: usize,
    pub warmup: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![64],
            counts: vec![1024],
            threads: vec![1, 2, 8],
            image_side: 1024,
            warmup: 1,
            reps: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub patch_size: usize,
    pub patch_count: usize,
    pub threads: usize,
    /// Fastest of the timed repetitions.
    pub seconds: f64,
    pub patches_per_s: f64,
    pub px_per_s: f64,
}

pub const BENCH_HEADER: &str = "patch_size\tpatch_count\tthreads\tseconds\tpatches_per_s";

impl BenchRow {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.6}\t{:.1}",
            self.patch_size, self.patch_count, self.threads, self.seconds, self.patches_per_s
        )
    }
}

pub fn bench_report(rows: &[BenchRow]) -> String {
    let mut s = String::from(BENCH_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_tsv());
        s.push('\n');
    }
    s
}

/// Random inverse-depth pair and patch plan used by the benchmarks.
pub fn bench_fixture(side: usize, size: usize, count: usize, seed: u64) -> Result<(PatchWorkPlan, Grid<f64>, Grid<f64>)> {
    if size == 0 || size > side {
        return Err(Error::usage(format!("patch size {size} does not fit a {side}-px image")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = Grid::from_fn(side, side, |_, _| rng.random_range(0.1..1.0));
    let gt = Grid::from_fn(side, side, |_, _| rng.random_range(0.1..1.0));
    let half = size / 2;
    let entries = (0..count)
        .map(|_| Patch {
            cx: half + rng.random_range(0..=side - size),
            cy: half + rng.random_range(0..=side - size),
            size,
        })
        .collect();
    let plan = PatchWorkPlan::new(&PatchSet { entries, seed }, side, side)?;
    Ok((plan, pred, gt))
}

/// Times [`run_patch_loss`] (with gradients) over every size × count × threads combination.
pub fn bench_kernel(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mask = Grid::filled(cfg.image_side, cfg.image_side, true);
    let ssi = EgSsiConfig::default();
    let mut rows = Vec::new();
    for &size in &cfg.sizes {
        for &count in &cfg.counts {
            let (plan, pred, gt) = bench_fixture(cfg.image_side, size, count, cfg.seed)?;
            for &threads in &cfg.threads {
                let mut best = 0.0;
                if count > 0 {
                    for _ in 0..cfg.warmup {
                        run_patch_loss(&plan, &pred, &gt, &mask, &ssi, threads, true)?;
                    }
                    best = f64::INFINITY;
                    for _ in 0..cfg.reps.max(1) {
                        let t = Instant::now();
                        run_patch_loss(&plan, &pred, &gt, &mask, &ssi, threads, true)?;
                        best = f64::min(best, t.elapsed().as_secs_f64());
                    }
                }
                let rate = |work: f64| if best > 0.0 { work / best } else { 0.0 };
                rows.push(BenchRow {
                    patch_size: size,
                    patch_count: count,
                    threads,
                    seconds: best,
                    patches_per_s: rate(count as f64),
                    px_per_s: rate((count * size * size) as f64),
                });
            }
        }
    }
    Ok(rows)
}
