use crate::augment::{bilinear_taps, WarpField};
use crate::error::{Error, Result};
use crate::grid::{DepthMap, Grid};

use super::{LossValue, Wrt};

/// One warped sample: contributing view-1 pixels, their normalized weights, and the value.
struct Warped {
    taps: [(usize, f64); 4],
    n: usize,
    value: f64,
}

/// Perspective-correct bilinear lookup: interpolates inverse depth, then inverts.
/// Exact on planar surfaces, whose inverse depth is affine in pixel coordinates.
/// Every neighbor with positive weight must be valid; a partial stencil would lose
/// that exactness.
fn sample(z: &DepthMap, u: f64, v: f64) -> Option<Warped> {
    let (mut taps, n) = bilinear_taps(u, v, z.width(), z.height(), None);
    let m = z.mask.as_slice();
    if n == 0 || taps[..n].iter().any(|t| !m[t.0]) {
        return None;
    }
    let vals = z.values.as_slice();
    if n == 1 {
        taps[0].1 = 1.0;
        return Some(Warped {
            taps,
            n,
            value: vals[taps[0].0],
        });
    }
    let wsum: f64 = taps[..n].iter().map(|t| t.1).sum();
    let mut q = 0.0;
    for t in &mut taps[..n] {
        t.1 /= wsum;
        q += t.1 / vals[t.0];
    }
    Some(Warped {
        taps,
        n,
        value: 1.0 / q,
    })
}

fn check(z1: &DepthMap, z2: &DepthMap, warp: &WarpField) -> Result<()> {
    z2.values.ensure_shape(&warp.src_coords, "warp field")?;
    if (warp.src_width, warp.src_height) != (z1.width(), z1.height()) {
        return Err(Error::usage(format!(
            "warp points into a {}×{} view, first depth map is {}×{}",
            warp.src_width,
            warp.src_height,
            z1.width(),
            z1.height()
        )));
    }
    Ok(())
}

/// `T2 ∘ T1⁻¹ (Z1)`: the first view's depth resampled onto the second view's pixels.
pub fn warp_depth(z1: &DepthMap, warp: &WarpField) -> Result<DepthMap> {
    if (warp.src_width, warp.src_height) != (z1.width(), z1.height()) {
        return Err(Error::usage("warp field does not point into the given depth map"));
    }
    let (w, h) = warp.src_coords.shape();
    let mut values = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for ([u, v], ok) in warp.src_coords.as_slice().iter().zip(warp.valid.as_slice()) {
        match ok.then(|| sample(z1, *u, *v)).flatten() {
            Some(s) => {
                values.push(s.value);
                mask.push(true);
            }
            None => {
                values.push(f64::NAN);
                mask.push(false);
            }
        }
    }
    DepthMap::new(Grid::from_vec(w, h, values)?, Grid::from_vec(w, h, mask)?)
}

/// `mean |warp(Z1) − sg(Z2)|` over view-2 pixels where both are valid.
///
/// `warp` maps view-2 pixels into view 1. Only `Z1` receives gradient; the gradient
/// with respect to `Z2` is reported and identically zero.
pub fn consistency_loss(
    z1: &DepthMap,
    z2: &DepthMap,
    warp: &WarpField,
    with_grad: bool,
) -> Result<LossValue> {
    check(z1, z2, warp)?;
    let z2v = z2.values.as_slice();
    let mut terms = Vec::new();
    let mut sum = 0.0;
    for (i, ([u, v], ok)) in warp
        .src_coords
        .as_slice()
        .iter()
        .zip(warp.valid.as_slice())
        .enumerate()
    {
        if !*ok || !z2.mask.as_slice()[i] {
            continue;
        }
        if let Some(s) = sample(z1, *u, *v) {
            let r = s.value - z2v[i];
            sum += r.abs();
            terms.push((s, r));
        }
    }
    if terms.is_empty() {
        return Err(Error::degenerate("views share no valid pixels"));
    }
    let n = terms.len() as f64;
    let mut out = LossValue::scalar(sum / n);
    if with_grad {
        let mut g1 = Grid::filled(z1.width(), z1.height(), 0.0);
        let z1v = z1.values.as_slice();
        let g = g1.as_mut_slice();
        for (s, r) in &terms {
            let sign = if *r > 0.0 {
                1.0
            } else if *r < 0.0 {
                -1.0
            } else {
                0.0
            };
            let w2 = s.value * s.value;
            for &(j, a) in &s.taps[..s.n] {
                g[j] += sign / n * a * w2 / (z1v[j] * z1v[j]);
            }
        }
        out.grads.insert(Wrt::Depth1, g1);
        out.grads
            .insert(Wrt::Depth2, Grid::filled(z2.width(), z2.height(), 0.0));
    }
    Ok(out)
}

/// `½·(L(Z1, Z2) + L(Z2, Z1))`. `warp_21` maps view-2 pixels into view 1 and
/// `warp_12` the reverse. Each view receives gradient only from the term in which
/// it is the warped (non-detached) side.
pub fn consistency_loss_bidirectional(
    z1: &DepthMap,
    z2: &DepthMap,
    warp_21: &WarpField,
    warp_12: &WarpField,
    with_grad: bool,
) -> Result<LossValue> {
    let a = consistency_loss(z1, z2, warp_21, with_grad)?;
    let b = consistency_loss(z2, z1, warp_12, with_grad)?;
    let mut out = LossValue::scalar(0.5 * (a.value + b.value));
    if with_grad {
        let half = |g: Option<&Grid<f64>>| g.expect("requested").map(|v| 0.5 * v);
        out.grads.insert(Wrt::Depth1, half(a.grad(Wrt::Depth1)));
        out.grads.insert(Wrt::Depth2, half(b.grad(Wrt::Depth1)));
    }
    Ok(out)
}
