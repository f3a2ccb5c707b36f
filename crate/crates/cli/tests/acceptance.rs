//! Acceptance suite. Prints one PASS/FAIL/N/A line per criterion and exits nonzero on any FAIL.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use metricdepth_core::augment::{
    compose_warp, sample_augmentation, sample_training_shape, MAX_PIXELS, MIN_PIXELS,
};
use metricdepth_core::geometry::{
    angles_fov_check, angles_to_ray, homogeneous_rays, intrinsics_from_residuals, point_from_angles,
    project_to_angles_depth, ray_to_angles, sine_encode, RayEncoding,
};
use metricdepth_core::gradcheck::{run_gradcheck, GradcheckConfig};
use metricdepth_core::io::{decode_grid, encode_grid, read_depth, read_grid, write_depth, DepthFileFormat};
use metricdepth_core::losses::{
    consistency_loss, eg_ssi_loss, lambda_mse, select_patches, EgSsiConfig, LossWeights, OutputMaps,
    PatchSelection, Wrt,
};
use metricdepth_core::metrics::{
    ause, ause_from_samples, boundary_f1, fscore_auc, spearman, BoundaryConfig, FScoreConfig,
    SPARSIFICATION_STEPS,
};
use metricdepth_core::patchkernel::{run_patch_loss, Patch, PatchSet, PatchWorkPlan};
use metricdepth_core::synth::{render, render_pair, Primitive, SceneSpec, Texture};
use metricdepth_core::{DepthMap, Error, Grid, Intrinsics, IntrinsicsResiduals, PointCloud, Vec3};

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    NotApplicable,
}

type Check = std::result::Result<(Status, String), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn pass(detail: impl Into<String>) -> Check {
    Ok((Status::Pass, detail.into()))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

// ---------------------------------------------------------------------------
// Constants

fn constants() -> Check {
    let mut r = rng(1);
    for _ in 0..10_000 {
        let res = IntrinsicsResiduals {
            dfx: r.random_range(0.1..4.0),
            dfy: r.random_range(0.1..4.0),
            dcx: r.random_range(0.0..2.0),
            dcy: r.random_range(0.0..2.0),
        };
        let (w, h) = (r.random_range(1..4000usize), r.random_range(1..4000usize));
        let k = intrinsics_from_residuals(res, w, h).map_err(|e| e.to_string())?;
        ensure!(
            k.fx == res.dfx * w as f64 / 2.0
                && k.fy == res.dfy * h as f64 / 2.0
                && k.cx == res.dcx * w as f64 / 2.0
                && k.cy == res.dcy * h as f64 / 2.0,
            "residual formula inexact for {res:?} at {w}x{h}"
        );
    }

    let w = LossWeights::default();
    ensure!(
        w.lambda == [1.0, 1.0, 0.15] && (w.alpha, w.beta, w.gamma) == (0.1, 1.0, 0.1),
        "default weights {w:?}"
    );

    ensure!(RayEncoding::CHANNELS == 128, "encoding has {} channels", RayEncoding::CHANNELS);
    for (cw, ch) in [(7, 5), (64, 48)] {
        let k = Intrinsics::new(50.0, 55.0, cw as f64 / 2.0, ch as f64 / 2.0, cw, ch).unwrap();
        let e = sine_encode(&homogeneous_rays(&k));
        ensure!(e.channels.len() == cw * ch * 128, "encoding buffer size {}", e.channels.len());
        ensure!(e.channels.iter().all(|v| (-1.0..=1.0).contains(v)), "encoding out of [-1, 1]");
    }

    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..10_000 {
        let a = sample_augmentation(&mut r, (640, 480), (320, 240));
        ensure!((0.25..=4.0).contains(&a.scale), "scale {}", a.scale);
        ensure!(a.tx.abs() <= 0.1 && a.ty.abs() <= 0.1, "translation ({}, {})", a.tx, a.ty);
        lo = lo.min(a.scale);
        hi = hi.max(a.scale);
    }
    ensure!(lo < 0.27 && hi > 3.7, "scale range [{lo}, {hi}] does not span 2^[-2, 2]");
    for _ in 0..10_000 {
        let s = sample_training_shape(&mut r);
        let area = (s.width * s.height) as f64;
        let ratio = s.width as f64 / s.height as f64;
        ensure!(
            (MIN_PIXELS..=MAX_PIXELS).contains(&area) && (0.5..=2.0).contains(&ratio),
            "shape {}x{}",
            s.width,
            s.height
        );
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("d");
    cli_ok(&["synth", "--scenes", "1", "--width", "64", "--height", "48", "--focal", "60", "--out", s(&data)])?;
    let out = cli_ok(&[
        "loss",
        "--pred",
        s(&data.join("scene_0000_pred.dkf")),
        "--gt",
        s(&data.join("scene_0000_gt.dkf")),
        "--rgb",
        s(&data.join("scene_0000_rgb.png")),
    ])?;
    let echo = "weights\tlambda=(1,1,0.15) alpha=0.1 beta=1 gamma=0.1";
    ensure!(out.lines().any(|l| l == echo), "loss output lacks weight echo:\n{out}");
    pass("residual formula exact on 1e4 draws; weights echoed; 128 channels; 1e4 augmentations and shapes in range")
}

// ---------------------------------------------------------------------------
// Geometry

fn geometry() -> Check {
    let mut r = rng(2);
    let lim = 80f64.to_radians();
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let (t, p) = (r.random_range(-lim..lim), r.random_range(-lim..lim));
        let d = angles_to_ray(t, p);
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        ensure!((n - 1.0).abs() <= 1e-9, "ray norm {n}");
        let (t2, p2) = ray_to_angles(d).map_err(|e| e.to_string())?;
        worst = worst.max(rel(t2, t)).max(rel(p2, p));
        let back = angles_to_ray(t2, p2);
        for i in 0..3 {
            worst = worst.max(rel(back[i], d[i]));
        }

        let z = r.random_range(0.1..100.0);
        let q = point_from_angles(t, p, z).map_err(|e| e.to_string())?;
        let cloud = PointCloud::new(vec![q]).map_err(|e| e.to_string())?;
        let (a, zs) = project_to_angles_depth(&cloud).map_err(|e| e.to_string())?;
        worst = worst.max(rel(a[0].0, t)).max(rel(a[0].1, p)).max(rel(zs[0], z));
        let q2 = point_from_angles(a[0].0, a[0].1, zs[0]).map_err(|e| e.to_string())?;
        let scale = (q[0].abs()).max(q[1].abs()).max(q[2].abs());
        for i in 0..3 {
            worst = worst.max((q2[i] - q[i]).abs() / scale);
        }
    }
    ensure!(worst <= 1e-9, "roundtrip relative error {worst:e}");

    let mut fov = 0.0f64;
    for _ in 0..20 {
        let res = IntrinsicsResiduals {
            dfx: r.random_range(0.5..3.0),
            dfy: r.random_range(0.5..3.0),
            dcx: r.random_range(0.8..1.2),
            dcy: r.random_range(0.8..1.2),
        };
        let (w, h) = (r.random_range(8..80usize), r.random_range(8..80usize));
        let base = intrinsics_from_residuals(res, w, h).unwrap();
        for k in [2usize, 4] {
            let big = intrinsics_from_residuals(res, k * w, k * h).unwrap();
            let kf = k as f64;
            ensure!(
                (big.fx, big.fy, big.cx, big.cy) == (kf * base.fx, kf * base.fy, kf * base.cx, kf * base.cy),
                "intrinsics not scaled exactly by {k}"
            );
            fov = fov.max(angles_fov_check(&base, &big).map_err(|e| e.to_string())?);
        }
    }
    ensure!(fov <= 1e-6, "FoV drift {fov:e} rad");
    pass(format!("1e5 samples, max rel err {worst:.1e} (tol 1e-9); FoV drift {fov:.1e} rad (tol 1e-6)"))
}

// ---------------------------------------------------------------------------
// SI_log identity

fn si_log() -> Check {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = r.random_range(2..400usize);
        let zp: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let zg: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let zeros = Grid::filled(n, 1, 0.0);
        let pred = OutputMaps::new(zeros.clone(), zeros.clone(), Grid::from_vec(n, 1, zp.clone()).unwrap()).unwrap();
        let gt = OutputMaps::new(zeros.clone(), zeros, Grid::from_vec(n, 1, zg.clone()).unwrap()).unwrap();
        let l = lambda_mse(&pred, &gt, &Grid::filled(n, 1, true), [1.0, 1.0, 0.15], false)
            .map_err(|e| e.to_string())?;
        let d: Vec<f64> = zp.iter().zip(&zg).map(|(a, b)| a - b).collect();
        let m = d.iter().sum::<f64>() / n as f64;
        let m2 = d.iter().map(|v| v * v).sum::<f64>() / n as f64;
        worst = worst.max((l.value - (m2 - 0.85 * m * m)).abs());
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    pass(format!("1e3 vectors, max |diff| {worst:.1e} (tol 1e-12)"))
}

// ---------------------------------------------------------------------------
// Gradient suite

fn gradients() -> Check {
    let rows = run_gradcheck(&GradcheckConfig::default()).map_err(|e| e.to_string())?;
    let names: Vec<&str> = rows.iter().map(|r| r.loss).collect();
    for need in ["lambda_mse", "consistency", "eg_ssi", "uncertainty_l1"] {
        ensure!(names.contains(&need), "no gradient check for {need}");
    }
    let mut detail = Vec::new();
    for row in &rows {
        ensure!(
            row.passed && row.instances == 50 && row.max_rel_err <= 1e-4,
            "{} failed: {} instances, max rel err {:e}",
            row.loss,
            row.instances,
            row.max_rel_err
        );
        detail.push(format!("{} {:.1e}", row.loss, row.max_rel_err));
    }
    let flipped = run_gradcheck(&GradcheckConfig {
        instances: 3,
        inject_sign_flip: true,
        ..GradcheckConfig::default()
    })
    .map_err(|e| e.to_string())?;
    ensure!(flipped.iter().all(|r| !r.passed), "sign-flipped gradients were accepted");
    pass(format!("50 instances each, step 1e-5, tol 1e-4: {}", detail.join(", ")))
}

// ---------------------------------------------------------------------------
// EG-SSI

fn random_inv_depth(r: &mut ChaCha8Rng, w: usize, h: usize, holes: f64) -> (Grid<f64>, Grid<bool>) {
    let mask = Grid::from_fn(w, h, |_, _| !r.random_bool(holes));
    let v = Grid::from_fn(w, h, |_, _| 1.0 / r.random_range(0.5..30.0));
    (v, mask)
}

fn tilted_plane(r: &mut ChaCha8Rng, camera: Intrinsics, texture: Texture) -> SceneSpec {
    let normal = [r.random_range(-0.5..0.5), r.random_range(-0.5..0.5), 1.0];
    SceneSpec {
        primitives: vec![Primitive::Plane { normal, offset: r.random_range(2.0..10.0) }],
        camera,
        texture,
        seed: r.random(),
    }
}

fn eg_ssi() -> Check {
    let mut r = rng(4);
    let cfg = EgSsiConfig::default();
    let (w, h) = (48, 40);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (pred, _) = random_inv_depth(&mut r, w, h, 0.0);
        let (gt, mask) = random_inv_depth(&mut r, w, h, 0.1);
        let size = r.random_range(6..=16usize);
        let half = size / 2;
        let patch = Patch {
            cx: r.random_range(half..=w - size + half),
            cy: r.random_range(half..=h - size + half),
            size,
        };
        let set = PatchSet { entries: vec![patch], seed: 0 };
        let base = eg_ssi_loss(&pred, &gt, &mask, &set, &cfg, false).map_err(|e| e.to_string())?;
        let (a, b) = (r.random_range(0.01..100.0), r.random_range(-10.0..10.0));
        let (x0, y0) = patch.origin();
        let mut moved = pred.clone();
        for y in y0..y0 + size {
            for x in x0..x0 + size {
                moved[(x, y)] = a * pred[(x, y)] + b;
            }
        }
        let after = eg_ssi_loss(&moved, &gt, &mask, &set, &cfg, false).map_err(|e| e.to_string())?;
        worst = worst.max((after.value - base.value).abs());

        let same = eg_ssi_loss(&gt, &gt, &mask, &set, &cfg, false).map_err(|e| e.to_string())?;
        ensure!(same.value == 0.0, "identical maps give {}", same.value);
    }
    ensure!(worst <= 1e-9, "affine invariance off by {worst:e}");

    let camera = Intrinsics::new(180.0, 180.0, 80.0, 60.0, 160, 120).unwrap();
    let mut survived_total = 0;
    for _ in 0..5 {
        let spec = tilted_plane(&mut r, camera, Texture::Checker { period: 0.25 });
        let view = render(&spec).map_err(|e| e.to_string())?;
        let patches = select_patches(&view.rgb, r.random(), &PatchSelection::default());
        ensure!(!patches.is_empty(), "checker texture produced no patches");
        let gt = view.depth.inverse();
        let plan = PatchWorkPlan::new(&patches, 160, 120).map_err(|e| e.to_string())?;
        let out = run_patch_loss(&plan, &gt, &gt, &view.depth.mask, &cfg, 1, true).map_err(|e| e.to_string())?;
        let survived = out.per_patch.iter().flatten().count();
        ensure!(survived > 0, "every checker patch was skipped");
        ensure!(out.value == 0.0, "checkerboard plane gives EG-SSI {}", out.value);
        ensure!(out.grad.unwrap().as_slice().iter().all(|g| *g == 0.0), "nonzero gradient at the optimum");
        survived_total += survived;
    }
    pass(format!(
        "affine drift {worst:.1e} (tol 1e-9) over 100 patches; identical maps 0; checker planes 0 over {survived_total} patches"
    ))
}

// ---------------------------------------------------------------------------
// Consistency oracle

fn consistency_oracle() -> Check {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    let mut trials = 0;
    while trials < 100 {
        let (w, h) = (r.random_range(24..64usize), r.random_range(24..64usize));
        let f = r.random_range(0.6..1.5) * w as f64;
        let camera = Intrinsics::new(f, f, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap();
        let spec = tilted_plane(&mut r, camera, Texture::Gradient);
        let target = (r.random_range(12..=w), r.random_range(12..=h));
        let a1 = sample_augmentation(&mut r, (w, h), target);
        let a2 = sample_augmentation(&mut r, (w, h), target);
        let (v1, v2) = render_pair(&spec, &a1, &a2).map_err(|e| e.to_string())?;
        let warp = compose_warp(&a1, &a2).map_err(|e| e.to_string())?;
        let l = match consistency_loss(&v1.depth, &v2.depth, &warp, true) {
            Ok(l) => l,
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e.to_string()),
        };
        ensure!(
            l.grad(Wrt::Depth2).unwrap().as_slice().iter().all(|g| *g == 0.0),
            "gradient reaches the detached view"
        );
        worst = worst.max(l.value);
        trials += 1;
    }
    ensure!(worst <= 1e-9, "consistency loss {worst:e} with prediction = ground truth");
    pass(format!("100 augmented plane pairs, max loss {worst:.1e} (tol 1e-9); detached gradient identically 0"))
}

// ---------------------------------------------------------------------------
// Metric oracles

fn brute_sparsify(good: &[bool], key: &[f64]) -> Vec<f64> {
    let n = good.len();
    (0..SPARSIFICATION_STEPS)
        .map(|k| {
            let removed = k * n / SPARSIFICATION_STEPS;
            let mut gone = vec![false; n];
            for _ in 0..removed {
                let mut pick = None;
                for i in 0..n {
                    if gone[i] {
                        continue;
                    }
                    pick = match pick {
                        Some(j) if key[j] >= key[i] => Some(j),
                        _ => Some(i),
                    };
                }
                gone[pick.unwrap()] = true;
            }
            let hits = (0..n).filter(|&i| !gone[i] && good[i]).count();
            100.0 * hits as f64 / (n - removed) as f64
        })
        .collect()
}

fn brute_area(upper: &[f64], lower: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..upper.len() {
        s += (upper[i] - lower[i]) / 100.0;
    }
    s / upper.len() as f64
}

fn quantized(r: &mut ChaCha8Rng, levels: u32) -> f64 {
    r.random_range(0..levels) as f64 / levels as f64
}

fn ause_oracle(r: &mut ChaCha8Rng) -> std::result::Result<(), String> {
    let (w, h) = (16, 16);
    let gt = DepthMap::from_values(Grid::from_fn(w, h, |_, _| {
        if r.random_bool(0.15) { f64::NAN } else { 1.0 + 4.0 * quantized(r, 50) }
    }));
    let pred = DepthMap::from_values(Grid::from_fn(w, h, |x, y| {
        if r.random_bool(0.1) { f64::NAN } else { gt.values[(x, y)].max(1.0) * (0.6 + quantized(r, 40)) }
    }));
    let sigma = Grid::from_fn(w, h, |_, _| quantized(r, 20));
    let res = match ause(&pred, &gt, &sigma) {
        Ok(v) => v,
        Err(Error::Degenerate(_)) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    let (mut good, mut err, mut sig) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..w * h {
        let (p, g) = (pred.values.as_slice()[i], gt.values.as_slice()[i]);
        if pred.mask.as_slice()[i] && gt.mask.as_slice()[i] {
            good.push((p / g).max(g / p) < 1.25);
            err.push((p.ln() - g.ln()).abs());
            sig.push(sigma.as_slice()[i]);
        }
    }
    let method = brute_sparsify(&good, &sig);
    let oracle = brute_sparsify(&good, &err);
    let random = vec![method[0]; SPARSIFICATION_STEPS];
    let expect = brute_area(&oracle, &method);
    let random_area = brute_area(&oracle, &random);
    let expect_n = if random_area == 0.0 { f64::NAN } else { expect / random_area };
    ensure!(res.curve.method_delta1 == method && res.curve.oracle_delta1 == oracle, "sparsification curves differ");
    ensure!(res.ause.to_bits() == expect.to_bits(), "AUSE {} vs {}", res.ause, expect);
    ensure!(res.nause.to_bits() == expect_n.to_bits(), "nAUSE {} vs {}", res.nause, expect_n);
    Ok(())
}

fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count();
            let equal = v.iter().filter(|y| *y == x).count();
            below as f64 + (equal as f64 + 1.0) / 2.0
        })
        .collect()
}

fn spearman_oracle(r: &mut ChaCha8Rng) -> std::result::Result<(), String> {
    let n = r.random_range(3..=256usize);
    let a: Vec<f64> = (0..n).map(|_| quantized(r, 30)).collect();
    let b: Vec<f64> = a.iter().map(|x| x + 0.5 * quantized(r, 30)).collect();
    let (ra, rb) = (brute_ranks(&a), brute_ranks(&b));
    let nf = n as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / nf, rb.iter().sum::<f64>() / nf);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    match spearman(&a, &b) {
        Err(Error::Degenerate(_)) => {
            ensure!(va == 0.0 || vb == 0.0, "spurious degenerate ranks");
            Ok(())
        }
        Err(e) => Err(e.to_string()),
        Ok(rho) => {
            let expect = (cov / (va * vb).sqrt()).clamp(-1.0, 1.0);
            ensure!(rho.to_bits() == expect.to_bits(), "rho {rho} vs {expect} (n = {n})");
            Ok(())
        }
    }
}

fn boundary_oracle(r: &mut ChaCha8Rng) -> std::result::Result<(), String> {
    let (w, h) = (r.random_range(4..=16usize), r.random_range(4..=16usize));
    let levels = [1.0, 1.04, 1.12, 1.3, 2.0];
    let blob = |r: &mut ChaCha8Rng| -> DepthMap {
        let split = (r.random_range(0..w), r.random_range(0..h));
        let lv = [levels[r.random_range(0..5)], levels[r.random_range(0..5)], levels[r.random_range(0..5)]];
        DepthMap::from_values(Grid::from_fn(w, h, |x, y| {
            if r.random_bool(0.08) {
                f64::NAN
            } else if x < split.0 {
                lv[0]
            } else if y < split.1 {
                lv[1]
            } else {
                lv[2] * (1.0 + 0.01 * r.random_range(0..3) as f64)
            }
        }))
    };
    let gt = blob(r);
    let pred = blob(r).scaled(r.random_range(0.5..3.0));
    let cfg = BoundaryConfig::default();
    let got = boundary_f1(&pred, &gt, &cfg);

    let n = w * h;
    let ok: Vec<bool> = (0..n).map(|i| pred.mask.as_slice()[i] && gt.mask.as_slice()[i]).collect();
    if !ok.iter().any(|v| *v) {
        ensure!(matches!(got, Err(Error::Degenerate(_))), "empty overlap accepted");
        return Ok(());
    }
    let mut ratios: Vec<f64> = (0..n).filter(|&i| ok[i]).map(|i| gt.values.as_slice()[i] / pred.values.as_slice()[i]).collect();
    ratios.sort_by(f64::total_cmp);
    let m = ratios.len();
    let s = 0.5 * (ratios[(m - 1) / 2] + ratios[m / 2]);
    let p: Vec<f64> = pred.values.as_slice().iter().map(|v| v * s).collect();
    let g = gt.values.as_slice();
    let ratio = |a: f64, b: f64| (a / b).max(b / a);
    let mut total = 0.0;
    let mut any_gt = false;
    for t in &cfg.thresholds_pct {
        let lim = 1.0 + t / 100.0;
        let (mut tp, mut np, mut ng) = (0usize, 0usize, 0usize);
        for i in 0..n {
            for j in i + 1..n {
                let (xi, yi, xj, yj) = (i % w, i / w, j % w, j / w);
                if xi.abs_diff(xj) + yi.abs_diff(yj) != 1 || !ok[i] || !ok[j] {
                    continue;
                }
                let cp = ratio(p[i], p[j]) > lim;
                let cg = ratio(g[i], g[j]) > lim;
                np += cp as usize;
                ng += cg as usize;
                tp += (cp && cg) as usize;
            }
        }
        any_gt |= ng > 0;
        total += if np + ng == 0 { 1.0 } else { 2.0 * tp as f64 / (np + ng) as f64 };
    }
    if !any_gt {
        ensure!(matches!(got, Err(Error::Degenerate(_))), "flat ground truth accepted");
        return Ok(());
    }
    let expect = 100.0 * total / cfg.thresholds_pct.len() as f64;
    let got = got.map_err(|e| e.to_string())?;
    ensure!(got.to_bits() == expect.to_bits(), "boundary F1 {got} vs {expect}");
    Ok(())
}

fn fscore_oracle(r: &mut ChaCha8Rng) -> std::result::Result<(), String> {
    let n = r.random_range(1..=200usize);
    let m = r.random_range(1..=200usize);
    let d_max = r.random_range(1.0..40.0);
    let tau = d_max / 20.0;
    let gt: Vec<Vec3> = (0..m)
        .map(|_| [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(1.0..5.0)])
        .collect();
    let pred: Vec<Vec3> = (0..n)
        .map(|_| {
            let base = gt[r.random_range(0..m)];
            let spread = tau * r.random_range(0.0..2.0);
            base.map(|c| c + r.random_range(-spread..=spread))
        })
        .collect();
    let cfg = FScoreConfig { seed: r.random(), ..FScoreConfig::default() };
    let got = fscore_auc(&pred, &gt, d_max, &cfg).map_err(|e| e.to_string())?;
    let nearest = |q: &Vec3, set: &[Vec3]| {
        set.iter()
            .map(|p| ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let dp: Vec<f64> = pred.iter().map(|q| nearest(q, &gt)).collect();
    let dg: Vec<f64> = gt.iter().map(|q| nearest(q, &pred)).collect();
    let k = cfg.thresholds;
    let mut sum = 0.0;
    for i in 1..=k {
        let t = i as f64 * d_max / (20.0 * k as f64);
        let precision = dp.iter().filter(|d| **d < t).count() as f64 / n as f64;
        let recall = dg.iter().filter(|d| **d < t).count() as f64 / m as f64;
        sum += if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    }
    let expect = sum / k as f64;
    ensure!(got.to_bits() == expect.to_bits(), "F_A {got} vs {expect} (n = {n}, m = {m})");
    Ok(())
}

fn metric_oracles() -> Check {
    let mut r = rng(6);
    let oracles: [(&str, fn(&mut ChaCha8Rng) -> std::result::Result<(), String>); 4] = [
        ("AUSE", ause_oracle),
        ("Spearman", spearman_oracle),
        ("boundary F1", boundary_oracle),
        ("F_A", fscore_oracle),
    ];
    for (name, f) in oracles {
        for trial in 0..100 {
            f(&mut r).map_err(|e| format!("{name} trial {trial}: {e}"))?;
        }
    }

    let mut nause_sum = 0.0;
    let trials = 100;
    for _ in 0..trials {
        let (w, h) = (48, 48);
        let gt = DepthMap::from_values(Grid::from_fn(w, h, |_, _| r.random_range(1.0..20.0)));
        let noise = Grid::from_fn(w, h, |_, _| r.random_range(-0.45f64..0.45));
        let pred = DepthMap::from_values(Grid::from_fn(w, h, |x, y| gt.values[(x, y)] * noise[(x, y)].exp()));
        let oracle_sigma = noise.map(|e| e.abs());
        let zero = ause(&pred, &gt, &oracle_sigma).map_err(|e| e.to_string())?;
        ensure!(zero.ause == 0.0, "oracle sigma gives AUSE {}", zero.ause);
        let indep = Grid::from_fn(w, h, |_, _| r.random::<f64>());
        nause_sum += ause(&pred, &gt, &indep).map_err(|e| e.to_string())?.nause;
    }
    let mean = nause_sum / trials as f64;
    ensure!((mean - 1.0).abs() <= 0.15, "independent sigma gives mean nAUSE {mean}");

    let mut samples_good = Vec::new();
    for i in 0..8 {
        samples_good.push(i % 3 != 0);
    }
    let err: Vec<f64> = (0..8).map(|i| i as f64).collect();
    ensure!(ause_from_samples(&samples_good, &err, &err).unwrap().ause == 0.0, "small oracle case");
    pass(format!(
        "AUSE, Spearman, boundary F1, F_A bit-equal to brute force over 100 trials each; oracle sigma AUSE 0; independent sigma mean nAUSE {mean:.3} (tol 1 +/- 0.15)"
    ))
}

// ---------------------------------------------------------------------------
// Kernel

fn kernel() -> Check {
    let mut r = rng(7);
    let (w, h) = (1024, 1024);
    let (pred, _) = random_inv_depth(&mut r, w, h, 0.0);
    let (gt, mask) = random_inv_depth(&mut r, w, h, 0.05);
    let entries = (0..1024)
        .map(|_| Patch {
            cx: r.random_range(32..=w - 32),
            cy: r.random_range(32..=h - 32),
            size: 64,
        })
        .collect();
    let set = PatchSet { entries, seed: 0 };
    let plan = PatchWorkPlan::new(&set, w, h).map_err(|e| e.to_string())?;
    let cfg = EgSsiConfig::default();
    let reference = eg_ssi_loss(&pred, &gt, &mask, &set, &cfg, true).map_err(|e| e.to_string())?;
    let mut first = None;
    for threads in [1, 2, 8] {
        let out = run_patch_loss(&plan, &pred, &gt, &mask, &cfg, threads, true).map_err(|e| e.to_string())?;
        ensure!(out.value.to_bits() == reference.value.to_bits(), "{threads} threads differ from the serial reference");
        ensure!(out.grad.as_ref() == reference.grad(Wrt::InvDepth), "gradient differs from the serial reference");
        match &first {
            None => first = Some(out),
            Some(f) => ensure!(
                f.value.to_bits() == out.value.to_bits() && f.per_patch == out.per_patch && f.grad == out.grad,
                "{threads} threads not bit-identical to 1 thread"
            ),
        }
    }
    pass("1024 patches of 64x64 on a 1-MP grid: threads 1, 2, 8 bit-identical and equal to the serial reference")
}

fn kernel_speedup() -> Check {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if cores < 8 {
        return Ok((Status::NotApplicable, format!("needs an 8-core host, this one has {cores}")));
    }
    let mut r = rng(8);
    let (w, h) = (1024, 1024);
    let (pred, _) = random_inv_depth(&mut r, w, h, 0.0);
    let (gt, mask) = random_inv_depth(&mut r, w, h, 0.05);
    let entries = (0..1024)
        .map(|_| Patch { cx: r.random_range(32..=w - 32), cy: r.random_range(32..=h - 32), size: 64 })
        .collect();
    let plan = PatchWorkPlan::new(&PatchSet { entries, seed: 0 }, w, h).map_err(|e| e.to_string())?;
    let cfg = EgSsiConfig::default();
    let time = |threads: usize| -> Duration {
        (0..5)
            .map(|_| {
                let t0 = Instant::now();
                run_patch_loss(&plan, &pred, &gt, &mask, &cfg, threads, true).unwrap();
                t0.elapsed()
            })
            .min()
            .unwrap()
    };
    time(8);
    let speedup = time(1).as_secs_f64() / time(8).as_secs_f64();
    ensure!(speedup >= 2.0, "speedup {speedup:.2}x at 8 threads (need 2x)");
    pass(format!("{speedup:.2}x at 8 threads (need 2x)"))
}

// ---------------------------------------------------------------------------
// I/O

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

fn bits(g: &Grid<f64>) -> Vec<u64> {
    g.as_slice().iter().map(|v| v.to_bits()).collect()
}

fn io_golden() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let e = |e: Error| e.to_string();
    let le = read_grid(&corpus("le_2x2.pfm"), DepthFileFormat::Pfm).map_err(e)?;
    let be = read_grid(&corpus("be_2x2.pfm"), DepthFileFormat::Pfm).map_err(e)?;
    ensure!(bits(&le) == bits(&be), "big- and little-endian PFM disagree");
    ensure!(le[(0, 0)] == 1.5 && le[(1, 0)] == 2.25 && le[(0, 1)].is_nan() && le[(1, 1)] == 4.0, "PFM values {:?}", le.as_slice());

    for (name, f) in [
        ("le_2x2.pfm", DepthFileFormat::Pfm),
        ("be_2x2.pfm", DepthFileFormat::Pfm),
        ("grid_3x2.dkf", DepthFileFormat::RawF32),
        ("depth_3x2.png", DepthFileFormat::Png16 { scale: 0.001 }),
    ] {
        let d = read_depth(&corpus(name), f).map_err(e)?;
        let out = dir.path().join(name);
        write_depth(&d, &out, f).map_err(e)?;
        let back = read_depth(&out, f).map_err(e)?;
        ensure!(bits(&back.values) == bits(&d.values) && back.mask == d.mask, "{name}: write then read is not bit-exact");
        if name != "depth_3x2.png" && name != "be_2x2.pfm" {
            // Headers may be spelled differently; the little-endian payload may not.
            let a = std::fs::read(corpus(name)).map_err(|e| e.to_string())?;
            let b = std::fs::read(&out).map_err(|e| e.to_string())?;
            let payload = 4 * d.values.len();
            ensure!(a[a.len() - payload..] == b[b.len() - payload..], "{name}: re-encoded payload differs");
        }
    }
    let raw = read_grid(&corpus("grid_3x2.dkf"), DepthFileFormat::RawF32).map_err(e)?;
    ensure!(raw[(1, 0)].is_nan() && raw[(0, 0)] == 0.5, "RAWF32 values {:?}", raw.as_slice());

    let mut r = rng(9);
    for _ in 0..100 {
        let (w, h) = (r.random_range(1..40usize), r.random_range(1..40usize));
        let g = Grid::from_fn(w, h, |_, _| match r.random_range(0..8) {
            0 => f64::NAN,
            1 => f64::NEG_INFINITY,
            _ => r.random_range(1u32..65535) as f64 / 1024.0,
        });
        for f in [DepthFileFormat::Pfm, DepthFileFormat::RawF32, DepthFileFormat::Png16 { scale: 1.0 / 1024.0 }] {
            let (bytes, _) = encode_grid(&g, f).map_err(e)?;
            let back = decode_grid(&bytes, f).map_err(e)?;
            let same = g.as_slice().iter().zip(back.as_slice()).all(|(a, b)| {
                a.to_bits() == b.to_bits()
                    || (matches!(f, DepthFileFormat::Png16 { .. }) && !a.is_finite() && b.is_nan())
            });
            ensure!(same, "{f:?} roundtrip of a {w}x{h} grid is not bit-exact");
        }
    }
    pass("golden PFM (both endiannesses), PNG16, RAWF32 bit-exact; 100 random grids per format")
}

// ---------------------------------------------------------------------------
// End to end

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn cli(args: &[&str]) -> std::io::Result<Output> {
    Command::new(env!("CARGO_BIN_EXE_metricdepth"))
        .args(args)
        .env_remove("METRICDEPTH_JOBS")
        .output()
}

fn cli_ok(args: &[&str]) -> std::result::Result<String, String> {
    let out = cli(args).map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`metricdepth {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn eval_kv(manifest: &Path, align: &str, jobs: &str, out: &Path) -> std::result::Result<String, String> {
    cli_ok(&["eval", "--manifest", s(manifest), "--align", align, "--format", "kv", "--jobs", jobs, "--out", s(out)])?;
    std::fs::read_to_string(out.join("report.kv")).map_err(|e| e.to_string())
}

fn summary(kv: &str, metric: &str) -> std::result::Result<f64, String> {
    let key = format!("summary.{metric}.mean = ");
    let line = kv.lines().find(|l| l.starts_with(&key)).ok_or(format!("report lacks {metric}"))?;
    line[key.len()..].parse().map_err(|e| format!("{metric}: {e}"))
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let exact = d.join("exact");
    let scaled = d.join("scaled");
    cli_ok(&["synth", "--scenes", "20", "--seed", "11", "--out", s(&exact)])?;
    cli_ok(&["synth", "--scenes", "20", "--seed", "11", "--pred-scale", "1.3", "--out", s(&scaled)])?;

    let kv = eval_kv(&exact.join("manifest.tsv"), "none", "1", &d.join("o1"))?;
    let kv4 = eval_kv(&exact.join("manifest.tsv"), "none", "4", &d.join("o4"))?;
    let again = eval_kv(&exact.join("manifest.tsv"), "none", "1", &d.join("o1b"))?;
    ensure!(kv == kv4, "--jobs 1 and --jobs 4 reports differ");
    ensure!(kv == again, "repeated runs differ");
    ensure!(kv.contains("records = 20"), "report does not cover 20 scenes");
    let want = [("delta1", 100.0), ("arel", 0.0), ("fscore_auc", 1.0), ("ray_auc", 1.0), ("boundary_f1", 100.0)];
    for (metric, v) in want {
        let got = summary(&kv, metric)?;
        ensure!(got == v, "pred = GT: {metric} = {got}, expected {v}");
    }

    let med = eval_kv(&scaled.join("manifest.tsv"), "median", "4", &d.join("m"))?;
    let med_delta = summary(&med, "delta1")?;
    ensure!(med_delta == 100.0, "pred = 1.3 GT, median: delta1 = {med_delta}");
    let none = eval_kv(&scaled.join("manifest.tsv"), "none", "4", &d.join("n"))?;
    let none1 = eval_kv(&scaled.join("manifest.tsv"), "none", "1", &d.join("n1"))?;
    ensure!(none == none1, "--jobs changes the scaled report");
    let delta = summary(&none, "delta1")?;
    let arel_pct = 100.0 * summary(&none, "arel")?;
    ensure!(delta == 0.0, "pred = 1.3 GT, none: delta1 = {delta}");
    ensure!((arel_pct - 30.0).abs() <= 1e-9, "pred = 1.3 GT, none: ARel = {arel_pct}%");
    pass(format!(
        "pred = GT: delta1 100, ARel 0, F_A 1, rho_A 1, BF1 100; x1.3: median delta1 100, none delta1 0 and ARel {arel_pct:.12}% (tol 30 +/- 1e-9); jobs 1/4 and reruns byte-identical"
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Check, Duration); 11] = [
        ("constants", constants, Duration::from_secs(10)),
        ("geometry roundtrips", geometry, Duration::from_secs(30)),
        ("SI_log identity", si_log, Duration::from_secs(60)),
        ("gradient suite", gradients, Duration::from_secs(120)),
        ("EG-SSI properties", eg_ssi, Duration::from_secs(60)),
        ("consistency oracle", consistency_oracle, Duration::from_secs(60)),
        ("metric oracles", metric_oracles, Duration::from_secs(120)),
        ("kernel contracts", kernel, Duration::from_secs(120)),
        ("kernel speedup", kernel_speedup, Duration::from_secs(120)),
        ("I/O golden", io_golden, Duration::from_secs(60)),
        ("end to end", end_to_end, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = t0.elapsed();
        let (mut status, mut detail) = match result {
            Ok(v) => v,
            Err(msg) => (Status::Fail, msg),
        };
        if status == Status::Pass && took > budget {
            status = Status::Fail;
            detail = format!("over the {}s budget; {detail}", budget.as_secs());
        }
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::NotApplicable => "N/A ",
        };
        println!("{tag}  {name:<20} {:>7.2}s  {detail}", took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
