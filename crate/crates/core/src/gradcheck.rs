//! Central finite-difference verification of every analytic loss gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{compose_warp, sample_augmentation, GeomAugmentation};
use crate::error::Result;
use crate::grid::{DepthMap, Grid, ValidityMask};
use crate::losses::{
    consistency_loss, eg_ssi_loss, lambda_mse, uncertainty_l1, warp_depth, EgSsiConfig, LossValue,
    OutputMaps, Wrt,
};
use crate::patchkernel::{run_patch_loss, Patch, PatchSet, PatchWorkPlan};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub tol: f64,
    pub step: f64,
    pub instances: usize,
    /// Negates every analytic gradient, to show the suite catches a wrong sign.
    pub inject_sign_flip: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tol: 1e-4,
            step: 1e-5,
            instances: 50,
            inject_sign_flip: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckRow {
    pub loss: &'static str,
    pub instances: usize,
    /// Worst `max|analytic − numeric| / max|numeric|` over instances.
    pub max_rel_err: f64,
    pub passed: bool,
}

pub const GRADCHECK_HEADER: &str = "loss\tinstances\tmax_rel_err\tstatus";

impl GradcheckRow {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{:.3e}\t{}",
            self.loss,
            self.instances,
            self.max_rel_err,
            if self.passed { "pass" } else { "FAIL" }
        )
    }
}

/// Relative error of `analytic` against central differences of `f` around `x`.
pub fn compare_gradient(
    x: &Grid<f64>,
    analytic: &Grid<f64>,
    step: f64,
    mut f: impl FnMut(&Grid<f64>) -> Result<f64>,
) -> Result<f64> {
    let mut probe = x.clone();
    let mut worst_abs: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..x.len() {
        let x0 = x.as_slice()[i];
        probe.as_mut_slice()[i] = x0 + step;
        let up = f(&probe)?;
        probe.as_mut_slice()[i] = x0 - step;
        let down = f(&probe)?;
        probe.as_mut_slice()[i] = x0;
        let numeric = (up - down) / (2.0 * step);
        worst_abs = worst_abs.max((analytic.as_slice()[i] - numeric).abs());
        scale = scale.max(numeric.abs());
    }
    Ok(worst_abs / scale.max(1e-12))
}

fn uniform(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f64, hi: f64) -> Grid<f64> {
    Grid::from_fn(w, h, |_, _| rng.random_range(lo..hi))
}

fn analytic(v: &LossValue, wrt: Wrt, flip: bool) -> Grid<f64> {
    let g = v.grad(wrt).expect("gradient requested").clone();
    if flip {
        g.map(|x| -x)
    } else {
        g
    }
}

fn check_lambda_mse(rng: &mut ChaCha8Rng, cfg: &GradcheckConfig) -> Result<f64> {
    let (w, h) = (6, 5);
    let maps = |rng: &mut ChaCha8Rng| {
        OutputMaps::new(
            uniform(rng, w, h, -1.0, 1.0),
            uniform(rng, w, h, -0.8, 0.8),
            uniform(rng, w, h, -1.0, 3.0),
        )
    };
    let pred = maps(rng)?;
    let gt = maps(rng)?;
    let mask = Grid::from_fn(w, h, |x, y| y == 0 && x < 2 || rng.random_bool(0.8));
    let lambda = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
    let v = lambda_mse(&pred, &gt, &mask, lambda, true)?;
    let mut worst: f64 = 0.0;
    for wrt in [Wrt::Theta, Wrt::Phi, Wrt::ZLog] {
        let x = match wrt {
            Wrt::Theta => &pred.theta,
            Wrt::Phi => &pred.phi,
            _ => &pred.z_log,
        };
        let err = compare_gradient(x, &analytic(&v, wrt, cfg.inject_sign_flip), cfg.step, |probe| {
            let mut p = pred.clone();
            match wrt {
                Wrt::Theta => p.theta = probe.clone(),
                Wrt::Phi => p.phi = probe.clone(),
                _ => p.z_log = probe.clone(),
            }
            Ok(lambda_mse(&p, &gt, &mask, lambda, false)?.value)
        })?;
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Min residual kept away from the |·| kink.
const KINK_GAP: f64 = 1e-3;

fn check_consistency(rng: &mut ChaCha8Rng, cfg: &GradcheckConfig) -> Result<f64> {
    let (w, h) = (10, 8);
    loop {
        let a1: GeomAugmentation = sample_augmentation(rng, (w, h), (w, h));
        let a2 = sample_augmentation(rng, (w, h), (w, h));
        let warp = compose_warp(&a1, &a2)?;
        let z1 = DepthMap::from_values(uniform(rng, w, h, 1.0, 3.0));
        let z2 = DepthMap::from_values(uniform(rng, w, h, 1.0, 3.0));
        let warped = warp_depth(&z1, &warp)?;
        let residuals: Vec<f64> = warped
            .values
            .as_slice()
            .iter()
            .zip(warped.mask.as_slice())
            .zip(z2.values.as_slice())
            .filter(|((_, m), _)| **m)
            .map(|((a, _), b)| (a - b).abs())
            .collect();
        if residuals.len() < 4 || residuals.iter().any(|r| *r < KINK_GAP) {
            continue;
        }
        let v = consistency_loss(&z1, &z2, &warp, true)?;
        return compare_gradient(
            &z1.values,
            &analytic(&v, Wrt::Depth1, cfg.inject_sign_flip),
            cfg.step,
            |probe| Ok(consistency_loss(&DepthMap::from_values(probe.clone()), &z2, &warp, false)?.value),
        );
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let m = median(&mut v.to_vec());
    let s = v.iter().map(|x| (x - m).abs()).sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) / s).collect()
}

/// No near-ties in any patch and no normalized residual near zero.
fn eg_instance_is_smooth(pred: &Grid<f64>, gt: &Grid<f64>, mask: &ValidityMask, patches: &[Patch]) -> bool {
    patches.iter().all(|p| {
        let (x0, y0) = p.origin();
        let mut ps = Vec::new();
        let mut gs = Vec::new();
        for y in y0..y0 + p.size {
            for x in x0..x0 + p.size {
                if mask[(x, y)] {
                    ps.push(pred[(x, y)]);
                    gs.push(gt[(x, y)]);
                }
            }
        }
        let mut sorted = ps.clone();
        sorted.sort_by(f64::total_cmp);
        let gaps_ok = sorted.windows(2).all(|w| w[1] - w[0] > KINK_GAP * 0.1);
        let resid_ok = normalized(&ps)
            .iter()
            .zip(normalized(&gs))
            .all(|(a, b)| (a - b).abs() > KINK_GAP);
        gaps_ok && resid_ok
    })
}

fn eg_instance(rng: &mut ChaCha8Rng) -> (Grid<f64>, Grid<f64>, ValidityMask, PatchSet) {
    let (w, h) = (12, 12);
    loop {
        let pred = uniform(rng, w, h, 0.2, 2.0);
        let gt = uniform(rng, w, h, 0.2, 2.0);
        let mask = Grid::from_fn(w, h, |_, _| rng.random_bool(0.9));
        let entries: Vec<Patch> = (0..3)
            .map(|_| {
                let size = rng.random_range(5..=8);
                let half = size / 2;
                Patch {
                    cx: rng.random_range(half..=w - size + half),
                    cy: rng.random_range(half..=h - size + half),
                    size,
                }
            })
            .collect();
        if eg_instance_is_smooth(&pred, &gt, &mask, &entries) {
            return (pred, gt, mask, PatchSet { entries, seed: 0 });
        }
    }
}

fn check_eg_ssi(rng: &mut ChaCha8Rng, cfg: &GradcheckConfig) -> Result<f64> {
    let (pred, gt, mask, set) = eg_instance(rng);
    let eg = EgSsiConfig::default();
    let v = eg_ssi_loss(&pred, &gt, &mask, &set, &eg, true)?;
    compare_gradient(&pred, &analytic(&v, Wrt::InvDepth, cfg.inject_sign_flip), cfg.step, |probe| {
        Ok(eg_ssi_loss(probe, &gt, &mask, &set, &eg, false)?.value)
    })
}

fn check_eg_ssi_kernel(rng: &mut ChaCha8Rng, cfg: &GradcheckConfig) -> Result<f64> {
    let (pred, gt, mask, set) = eg_instance(rng);
    let eg = EgSsiConfig::default();
    let plan = PatchWorkPlan::new(&set, pred.width(), pred.height())?;
    let out = run_patch_loss(&plan, &pred, &gt, &mask, &eg, 2, true)?;
    let mut g = out.grad.expect("gradient requested");
    if cfg.inject_sign_flip {
        g = g.map(|x| -x);
    }
    compare_gradient(&pred, &g, cfg.step, |probe| {
        Ok(run_patch_loss(&plan, probe, &gt, &mask, &eg, 2, false)?.value)
    })
}

fn check_uncertainty(rng: &mut ChaCha8Rng, cfg: &GradcheckConfig) -> Result<f64> {
    let (w, h) = (6, 5);
    let zp = uniform(rng, w, h, -1.0, 2.0);
    let zg = uniform(rng, w, h, -1.0, 2.0);
    let mask = Grid::from_fn(w, h, |x, y| (x, y) == (0, 0) || rng.random_bool(0.8));
    let sigma = Grid::from_fn(w, h, |x, y| {
        let off = rng.random_range(0.05..0.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        (zp[(x, y)] - zg[(x, y)]).abs() + off
    });
    let v = uncertainty_l1(&sigma, &zp, &zg, &mask, true)?;
    compare_gradient(&sigma, &analytic(&v, Wrt::Sigma, cfg.inject_sign_flip), cfg.step, |probe| {
        Ok(uncertainty_l1(probe, &zp, &zg, &mask, false)?.value)
    })
}

type Check = fn(&mut ChaCha8Rng, &GradcheckConfig) -> Result<f64>;

/// Runs `cfg.instances` random instances per loss.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<Vec<GradcheckRow>> {
    let checks: [(&'static str, Check); 5] = [
        ("lambda_mse", check_lambda_mse),
        ("consistency", check_consistency),
        ("eg_ssi", check_eg_ssi),
        ("eg_ssi_kernel", check_eg_ssi_kernel),
        ("uncertainty_l1", check_uncertainty),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for (name, check) in checks {
        let mut worst: f64 = 0.0;
        for _ in 0..cfg.instances {
            worst = worst.max(check(&mut rng, cfg)?);
        }
        rows.push(GradcheckRow {
            loss: name,
            instances: cfg.instances,
            max_rel_err: worst,
            passed: worst <= cfg.tol,
        });
    }
    Ok(rows)
}
