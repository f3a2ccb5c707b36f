use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, RgbImage};
use crate::patchkernel::{Patch, PatchSet};

/// Parameters of edge-guided patch selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchSelection {
    pub count: usize,
    /// Patch side range as a fraction of the image's smaller side.
    pub min_frac: f64,
    pub max_frac: f64,
    /// Gradient-magnitude quantile a center must reach.
    pub quantile: f64,
}

impl Default for PatchSelection {
    fn default() -> Self {
        Self {
            count: 64,
            min_frac: 0.04,
            max_frac: 0.08,
            quantile: 0.95,
        }
    }
}

pub fn luma(rgb: &RgbImage) -> Grid<f64> {
    rgb.map(|[r, g, b]| 0.299 * r + 0.587 * g + 0.114 * b)
}

/// L2 norm of the Sobel response. The one-pixel border is left at zero.
pub fn gradient_magnitude(img: &Grid<f64>) -> Grid<f64> {
    let (w, h) = img.shape();
    let mut out = Grid::filled(w, h, 0.0);
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dx: isize, dy: isize| img[((x as isize + dx) as usize, (y as isize + dy) as usize)];
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            out[(x, y)] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Draws patch centers uniformly among pixels whose RGB gradient magnitude reaches the
/// configured quantile, with sides uniform in `[min_frac, max_frac]·min(H, W)`.
///
/// A constant image has no candidate and yields an empty set.
pub fn select_patches(rgb: &RgbImage, seed: u64, cfg: &PatchSelection) -> PatchSet {
    let (w, h) = rgb.shape();
    let mut set = PatchSet {
        entries: Vec::new(),
        seed,
    };
    if cfg.count == 0 || w < 4 || h < 4 {
        return set;
    }
    let mag = gradient_magnitude(&luma(rgb));
    let mut sorted: Vec<f64> = mag.as_slice().to_vec();
    let rank = ((cfg.quantile * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    let (_, threshold, _) = sorted.select_nth_unstable_by(rank, f64::total_cmp);
    let threshold = *threshold;
    let candidates: Vec<usize> = mag
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0 && **m >= threshold)
        .map(|(i, _)| i)
        .collect();
    if candidates.is_empty() {
        return set;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_side = w.min(h);
    for _ in 0..cfg.count {
        let idx = candidates[rng.random_range(0..candidates.len())];
        let frac: f64 = rng.random_range(cfg.min_frac..=cfg.max_frac);
        let size = ((frac * min_side as f64).round() as usize).clamp(4, min_side);
        let half = size / 2;
        let x0 = (idx % w).saturating_sub(half).min(w - size);
        let y0 = (idx / w).saturating_sub(half).min(h - size);
        set.entries.push(Patch {
            cx: x0 + half,
            cy: y0 + half,
            size,
        });
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_patches() {
        let img = Grid::filled(50, 40, [0.3, 0.3, 0.3]);
        assert!(select_patches(&img, 1, &PatchSelection::default()).is_empty());
    }

    #[test]
    fn step_edge_centers_hug_the_edge() {
        let edge = 60;
        let img = Grid::from_fn(120, 100, |x, _| if x < edge { [0.0; 3] } else { [1.0; 3] });
        let set = select_patches(&img, 42, &PatchSelection::default());
        assert_eq!(set.len(), 64);
        for p in &set.entries {
            // Sobel fires on the two columns straddling the step.
            let d = p.cx as f64 - (edge as f64 - 0.5);
            assert!(d.abs() <= 1.5, "center column {}", p.cx);
        }
    }

    #[test]
    fn sizes_in_range_and_inside_image() {
        let img = Grid::from_fn(173, 131, |x, y| {
            let v = ((x / 9 + y / 7) % 2) as f64;
            [v, 0.5 * v, 0.2]
        });
        let set = select_patches(&img, 9, &PatchSelection { count: 500, ..Default::default() });
        let m = 131.0f64;
        for p in &set.entries {
            assert!(p.size >= (0.04 * m).floor() as usize && p.size <= (0.08 * m).ceil() as usize);
            let (x0, y0) = p.origin();
            assert!(x0 + p.size <= 173 && y0 + p.size <= 131);
        }
        let again = select_patches(&img, 9, &PatchSelection { count: 500, ..Default::default() });
        assert_eq!(set, again);
    }
}
