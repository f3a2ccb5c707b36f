use std::path::Path;

use metricdepth_core::config::{read_loss_config, LossConfig};
use metricdepth_core::geometry::{intrinsics_from_residuals, IntrinsicsResiduals};
use metricdepth_core::io::{self, DepthFileFormat};
use metricdepth_core::losses::{
    consistency_loss, select_patches, total_loss, uncertainty_l1, lambda_mse, LossComponents,
    LossValue, OutputMaps, Wrt,
};
use metricdepth_core::patchkernel::{run_patch_loss, PatchWorkPlan};
use metricdepth_core::augment::{compose_warp, GeomAugmentation};
use metricdepth_core::{AngleMap, DepthMap, Error, Grid, Intrinsics, Result};

use crate::{LossArgs, EXIT_NUMERIC};

fn depth(path: &Path, png_scale: f64) -> Result<DepthMap> {
    io::read_depth(path, DepthFileFormat::from_path(path, png_scale)?)
}

fn camera(path: Option<&Path>, w: usize, h: usize) -> Result<Intrinsics> {
    let k = match path {
        Some(p) => io::read_camera(p)?,
        None => intrinsics_from_residuals(IntrinsicsResiduals::identity(), w, h)?,
    };
    if (k.width, k.height) != (w, h) {
        return Err(Error::Usage(format!(
            "camera is {}×{} but depth is {w}×{h}",
            k.width, k.height
        )));
    }
    Ok(k)
}

fn fmt_weights(c: &LossConfig) -> String {
    let w = &c.weights;
    format!(
        "lambda=({},{},{}) alpha={} beta={} gamma={}",
        w.lambda[0], w.lambda[1], w.lambda[2], w.alpha, w.beta, w.gamma
    )
}

/// Numeric failures are reported per component; anything else aborts.
fn component(name: &str, r: Result<LossValue>, failed: &mut bool) -> Result<Option<LossValue>> {
    match r {
        Ok(v) => {
            println!("{name}\t{}", v.value);
            Ok(Some(v))
        }
        Err(e @ (Error::Degenerate(_) | Error::Domain(_))) => {
            println!("{name}\terror: {e}");
            *failed = true;
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

pub fn run(a: LossArgs) -> Result<u8> {
    let cfg = match &a.config {
        Some(p) => read_loss_config(p)?,
        None => LossConfig::default(),
    };
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let gt = depth(&a.gt, a.png_scale)?;
    let pred = depth(&a.pred, a.png_scale)?;
    pred.values.ensure_shape(&gt.values, "ground-truth depth")?;
    let rgb = io::read_rgb(&a.rgb)?;
    rgb.ensure_shape(&gt.values, "RGB image")?;
    let (w, h) = (gt.width(), gt.height());
    let k_gt = camera(a.camera.as_deref(), w, h)?;
    let k_pred = match &a.pred_camera {
        Some(p) => camera(Some(p), w, h)?,
        None => k_gt,
    };
    let out_gt = OutputMaps::from_angles_depth(&AngleMap::from_intrinsics(&k_gt), &gt)?;
    let out_pred = OutputMaps::from_angles_depth(&AngleMap::from_intrinsics(&k_pred), &pred)?;
    let both = Grid::from_fn(w, h, |x, y| gt.mask[(x, y)] && pred.mask[(x, y)]);

    println!("weights\t{}", fmt_weights(&cfg));
    println!("seed\t{seed}");
    let mut failed = false;
    let mut parts = LossComponents {
        lambda_mse: component(
            "lambda_mse",
            lambda_mse(&out_pred, &out_gt, &both, cfg.weights.lambda, a.grad),
            &mut failed,
        )?,
        ..LossComponents::default()
    };
    match &a.pred2 {
        Some(p) => {
            let pred2 = depth(p, a.png_scale)?;
            let id = GeomAugmentation::identity(w, h);
            let warp = compose_warp(&id, &id)?;
            parts.consistency = component(
                "consistency",
                consistency_loss(&pred, &pred2, &warp, a.grad),
                &mut failed,
            )?;
        }
        None => println!("consistency\tskipped (no --pred2)"),
    }
    let patches = select_patches(&rgb, seed, &cfg.patches);
    let plan = PatchWorkPlan::new(&patches, w, h)?;
    let eg = run_patch_loss(&plan, &pred.inverse(), &gt.inverse(), &both, &cfg.eg_ssi, a.jobs.get(), a.grad)
        .map(|k| {
            let used = k.per_patch.iter().flatten().count();
            log::info!("edge-guided loss used {used} of {} patches", k.per_patch.len());
            let mut v = LossValue::scalar(k.value);
            if let Some(g) = k.grad {
                v.grads.insert(Wrt::InvDepth, g);
            }
            v
        });
    parts.eg_ssi = component("eg_ssi", eg, &mut failed)?;
    println!("patches\t{}", patches.len());
    match &a.sigma {
        Some(p) => {
            let sigma = io::read_grid(p, DepthFileFormat::from_path(p, a.png_scale)?)?;
            parts.uncertainty = component(
                "uncertainty_l1",
                uncertainty_l1(&sigma, &out_pred.z_log, &out_gt.z_log, &both, a.grad),
                &mut failed,
            )?;
        }
        None => println!("uncertainty_l1\tskipped (no --sigma)"),
    }
    let total = total_loss(&parts, &cfg.weights);
    println!("total\t{}", total.value);
    if a.grad {
        for (wrt, g) in &total.grads {
            let s = g.as_slice();
            let l2 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            let max = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            println!("grad.{}\tl2={l2}\tmax_abs={max}", wrt.name());
        }
    }
    Ok(if failed { EXIT_NUMERIC } else { 0 })
}
