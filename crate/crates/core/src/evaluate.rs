//! Dataset evaluation: every manifest record through the metric suite, merged in
//! manifest order regardless of worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{backproject, AngleMap, Intrinsics};
use crate::grid::DepthMap;
use crate::io::{self, DatasetManifest, DepthFileFormat, ManifestRecord};
use crate::metrics::{
    aggregate, align_prediction, ause, boundary_f1, depth_metrics, fscore_auc, ray_auc, spearman,
    uncertainty_samples, AlignmentMode, BoundaryConfig, FScoreConfig, MetricRecord, MetricReport,
    RayAucConfig, AUSE_MIN_PIXELS,
};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub align: AlignmentMode,
    pub fscore: FScoreConfig,
    pub rays: RayAucConfig,
    pub boundary: BoundaryConfig,
    /// Boundary F1 is only scored when at least this fraction of ground truth is valid.
    pub dense_gt_fraction: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            align: AlignmentMode::None,
            fscore: FScoreConfig::default(),
            rays: RayAucConfig::default(),
            boundary: BoundaryConfig::default(),
            dense_gt_fraction: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordFailure {
    pub line: usize,
    pub id: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub report: MetricReport,
    pub failures: Vec<RecordFailure>,
}

fn load_depth(path: &std::path::Path, png_scale: f64) -> Result<DepthMap> {
    io::read_depth(path, DepthFileFormat::from_path(path, png_scale)?)
}

fn camera_for(path: &std::path::Path, depth: &DepthMap) -> Result<Intrinsics> {
    let k = io::read_camera(path)?;
    if (k.width, k.height) != (depth.width(), depth.height()) {
        return Err(Error::usage(format!(
            "camera {} is {}×{}, depth is {}×{}",
            path.display(),
            k.width,
            k.height,
            depth.width(),
            depth.height()
        )));
    }
    Ok(k)
}

/// Undefined metrics are recorded as NaN so aggregation counts them as excluded.
fn or_nan(r: Result<f64>, name: &str, id: &str) -> Result<f64> {
    match r {
        Ok(v) => Ok(v),
        Err(Error::Degenerate(msg)) => {
            log::info!("{id}: {name} undefined: {msg}");
            Ok(f64::NAN)
        }
        Err(e) => Err(e),
    }
}

/// Metrics of one record. `index` decorrelates the point subsampling across records.
pub fn evaluate_record(
    rec: &ManifestRecord,
    manifest: &DatasetManifest,
    opts: &EvalOptions,
    index: usize,
) -> Result<MetricRecord> {
    let id = rec.id();
    let gt = load_depth(&rec.gt, manifest.png_scale)?;
    let pred = load_depth(&rec.pred, manifest.png_scale)?;
    pred.values.ensure_shape(&gt.values, "ground-truth depth")?;
    let mut out = MetricRecord::new(id.clone());
    let dm = depth_metrics(&pred, &gt, opts.align)?;
    for (name, v) in dm.entries() {
        out.push(name, v);
    }
    let aligned = align_prediction(&pred, &gt, opts.align)?;

    if let Some(cam) = &rec.camera {
        let k_gt = camera_for(cam, &gt)?;
        let k_pred = match &rec.pred_camera {
            Some(p) => camera_for(p, &gt)?,
            None => k_gt,
        };
        let a_gt = AngleMap::from_intrinsics(&k_gt);
        let a_pred = AngleMap::from_intrinsics(&k_pred);
        let d_max = match manifest.max_depth {
            Some(d) => d,
            None => gt
                .values
                .as_slice()
                .iter()
                .zip(gt.mask.as_slice())
                .filter(|(_, m)| **m)
                .map(|(v, _)| *v)
                .fold(0.0, f64::max),
        };
        let cfg = FScoreConfig {
            seed: opts.fscore.seed.wrapping_add(index as u64),
            ..opts.fscore
        };
        let gt_cloud = backproject(&a_gt, &gt)?;
        let pred_cloud = backproject(&a_pred, &aligned)?;
        let fa = fscore_auc(&pred_cloud.points, &gt_cloud.points, d_max, &cfg);
        out.push("fscore_auc", or_nan(fa, "F-score AUC", &id)?);
        if rec.pred_camera.is_some() {
            out.push("ray_auc", ray_auc(&a_pred, &a_gt, &opts.rays)?);
        }
    }

    if let Some(path) = &rec.uncertainty {
        let sigma = io::read_grid(path, DepthFileFormat::from_path(path, manifest.png_scale)?)?;
        let (_, err, s) = uncertainty_samples(&aligned, &gt, &sigma)?;
        let (a, na) = if s.len() < AUSE_MIN_PIXELS {
            log::info!("{id}: sparsification undefined with {} pixels", s.len());
            (f64::NAN, f64::NAN)
        } else {
            let r = ause(&aligned, &gt, &sigma)?;
            (r.ause, r.nause)
        };
        out.push("ause", a);
        out.push("nause", na);
        out.push("spearman", or_nan(spearman(&s, &err), "rank correlation", &id)?);
    }

    let dense = gt.valid_count() as f64 >= opts.dense_gt_fraction * gt.values.len() as f64;
    if dense {
        let bf = boundary_f1(&pred, &gt, &opts.boundary);
        out.push("boundary_f1", or_nan(bf, "boundary F1", &id)?);
    }
    Ok(out)
}

/// Evaluates every record on `jobs` workers. Failing records are listed, not fatal.
pub fn evaluate_manifest(
    manifest: &DatasetManifest,
    opts: &EvalOptions,
    jobs: usize,
) -> Result<EvalOutcome> {
    if jobs == 0 {
        return Err(Error::usage("jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::usage(e.to_string()))?;
    let results: Vec<Result<MetricRecord>> = pool.install(|| {
        manifest
            .records
            .par_iter()
            .enumerate()
            .map(|(i, r)| evaluate_record(r, manifest, opts, i))
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rec, res) in manifest.records.iter().zip(results) {
        match res {
            Ok(m) => records.push(m),
            Err(e) => failures.push(RecordFailure {
                line: rec.line,
                id: rec.id(),
                message: e.to_string(),
            }),
        }
    }
    Ok(EvalOutcome {
        report: aggregate(manifest.name.clone(), records),
        failures,
    })
}
