use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::DepthMap;

use super::{median_in_place, nonempty_overlap, within_delta};

/// How the prediction is aligned to ground truth before scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AlignmentMode {
    #[default]
    None,
    /// Multiply by `median(d*/d)`.
    MedianScale,
    /// Least-squares scale and shift of inverse depth.
    SsiInverseDepth,
}

impl FromStr for AlignmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "median" | "median_scale" => Ok(Self::MedianScale),
            "ssi" | "ssi_inverse_depth" => Ok(Self::SsiInverseDepth),
            other => Err(Error::usage(format!("unknown alignment `{other}`"))),
        }
    }
}

impl fmt::Display for AlignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::MedianScale => "median",
            Self::SsiInverseDepth => "ssi",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthMetrics {
    /// Percent of pixels with `max(d/d*, d*/d) < 1.25`.
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Mean absolute relative error, as a fraction.
    pub arel: f64,
    pub rms: f64,
    pub rms_log: f64,
    pub log10: f64,
    /// `100·√(V[e] + 0.15·E[e]²)` with `e = ln d − ln d*`.
    pub si_log: f64,
    pub n_valid: usize,
}

impl DepthMetrics {
    pub fn entries(&self) -> [(&'static str, f64); 8] {
        [
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta3", self.delta3),
            ("arel", self.arel),
            ("rms", self.rms),
            ("rms_log", self.rms_log),
            ("log10", self.log10),
            ("si_log", self.si_log),
        ]
    }
}

const MIN_ALIGNED_INV_DEPTH: f64 = 1e-8;

/// Returns the prediction after alignment; pixels outside the overlap are unchanged.
pub fn align_prediction(pred: &DepthMap, gt: &DepthMap, mode: AlignmentMode) -> Result<DepthMap> {
    let idx = nonempty_overlap(pred, gt)?;
    let p = pred.values.as_slice();
    let g = gt.values.as_slice();
    match mode {
        AlignmentMode::None => Ok(pred.clone()),
        AlignmentMode::MedianScale => {
            let mut ratios: Vec<f64> = idx.iter().map(|&i| g[i] / p[i]).collect();
            let s = median_in_place(&mut ratios);
            Ok(pred.scaled(s))
        }
        AlignmentMode::SsiInverseDepth => {
            let n = idx.len() as f64;
            let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
            for &i in &idx {
                let (x, y) = (1.0 / p[i], 1.0 / g[i]);
                sx += x;
                sy += y;
                sxx += x * x;
                sxy += x * y;
            }
            let det = n * sxx - sx * sx;
            let (a, b) = if det.abs() > 1e-12 * (n * sxx).max(f64::MIN_POSITIVE) {
                ((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
            } else {
                (sy / sx, 0.0)
            };
            let mut values = pred.values.clone();
            for &i in &idx {
                let inv = (a / p[i] + b).max(MIN_ALIGNED_INV_DEPTH);
                values.as_mut_slice()[i] = 1.0 / inv;
            }
            DepthMap::new(values, pred.mask.clone())
        }
    }
}

pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, align: AlignmentMode) -> Result<DepthMetrics> {
    let aligned = align_prediction(pred, gt, align)?;
    let idx = nonempty_overlap(&aligned, gt)?;
    let p = aligned.values.as_slice();
    let g = gt.values.as_slice();
    let n = idx.len() as f64;
    let mut hits = [0usize; 3];
    let (mut arel, mut sq, mut sq_log, mut l10) = (0.0, 0.0, 0.0, 0.0);
    let mut e = Vec::with_capacity(idx.len());
    for &i in &idx {
        let (d, t) = (p[i], g[i]);
        for (k, h) in hits.iter_mut().enumerate() {
            if within_delta(d, t, k as i32 + 1) {
                *h += 1;
            }
        }
        arel += (d - t).abs() / t;
        sq += (d - t) * (d - t);
        let le = d.ln() - t.ln();
        sq_log += le * le;
        l10 += (d.log10() - t.log10()).abs();
        e.push(le);
    }
    let mean_e = e.iter().sum::<f64>() / n;
    let var_e = e.iter().map(|v| (v - mean_e).powi(2)).sum::<f64>() / n;
    let pct = |h: usize| 100.0 * h as f64 / n;
    Ok(DepthMetrics {
        delta1: pct(hits[0]),
        delta2: pct(hits[1]),
        delta3: pct(hits[2]),
        arel: arel / n,
        rms: (sq / n).sqrt(),
        rms_log: (sq_log / n).sqrt(),
        log10: l10 / n,
        si_log: 100.0 * (var_e + 0.15 * mean_e * mean_e).max(0.0).sqrt(),
        n_valid: idx.len(),
    })
}
