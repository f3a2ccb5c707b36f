//! Geometric augmentations: rescale, translate, crop.
//!
//! An augmentation maps continuous output coordinates `U` (pixel centers at
//! `i + 0.5`) to source coordinates `S = (U + crop_origin) / scale`. The same
//! map applied to intrinsics gives `f' = f·scale`, `c' = c·scale − crop_origin`,
//! so every output pixel sees the same 3D ray as its source pre-image.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Intrinsics;
use crate::grid::{DepthMap, Grid, RgbImage, ValidityMask};

/// Crop window in rescaled pixel coordinates. May extend past the rescaled image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRect {
    pub x0: i64,
    pub y0: i64,
    pub width: usize,
    pub height: usize,
}

/// A sampled similarity transform of a source image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeomAugmentation {
    pub scale: f64,
    /// Relative translation of the crop center, as a fraction of the source width.
    pub tx: f64,
    /// Relative translation of the crop center, as a fraction of the source height.
    pub ty: f64,
    pub crop: CropRect,
    pub src_width: usize,
    pub src_height: usize,
}

impl GeomAugmentation {
    pub fn identity(width: usize, height: usize) -> Self {
        Self {
            scale: 1.0,
            tx: 0.0,
            ty: 0.0,
            crop: CropRect {
                x0: 0,
                y0: 0,
                width,
                height,
            },
            src_width: width,
            src_height: height,
        }
    }

    /// Same-size view shifted so that output pixel `(x, y)` reads source `(x + dx, y + dy)`.
    pub fn translation(width: usize, height: usize, dx: i64, dy: i64) -> Self {
        let mut a = Self::identity(width, height);
        a.crop.x0 = dx;
        a.crop.y0 = dy;
        a
    }

    /// Pure rescale of the whole image by `scale`, output sized to fit.
    pub fn rescale(width: usize, height: usize, scale: f64) -> Self {
        let mut a = Self::identity(width, height);
        a.scale = scale;
        a.crop.width = (width as f64 * scale).round().max(1.0) as usize;
        a.crop.height = (height as f64 * scale).round().max(1.0) as usize;
        a
    }

    #[inline]
    pub fn out_width(&self) -> usize {
        self.crop.width
    }

    #[inline]
    pub fn out_height(&self) -> usize {
        self.crop.height
    }

    fn check(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::domain(format!("scale must be positive, got {}", self.scale)));
        }
        if self.crop.width == 0 || self.crop.height == 0 {
            return Err(Error::domain("crop has zero area"));
        }
        if self.src_width == 0 || self.src_height == 0 {
            return Err(Error::domain("source has zero area"));
        }
        Ok(())
    }

    /// Continuous output coordinates to continuous source coordinates.
    #[inline]
    pub fn to_source(&self, u: f64, v: f64) -> (f64, f64) {
        (
            (u + self.crop.x0 as f64) / self.scale,
            (v + self.crop.y0 as f64) / self.scale,
        )
    }

    /// Continuous source coordinates to continuous output coordinates.
    #[inline]
    pub fn from_source(&self, u: f64, v: f64) -> (f64, f64) {
        (
            u * self.scale - self.crop.x0 as f64,
            v * self.scale - self.crop.y0 as f64,
        )
    }
}

/// Rescale by `2^U[-2,2]`, translate by `U[-0.1,0.1]` of the source size, crop to `target`.
pub fn sample_augmentation<R: Rng + ?Sized>(
    rng: &mut R,
    source: (usize, usize),
    target: (usize, usize),
) -> GeomAugmentation {
    let log_scale: f64 = rng.random_range(-2.0..=2.0);
    let scale = log_scale.exp2();
    let tx: f64 = rng.random_range(-0.1..=0.1);
    let ty: f64 = rng.random_range(-0.1..=0.1);
    let (sw, sh) = (source.0 as f64, source.1 as f64);
    let center_x = scale * (sw * (0.5 + tx));
    let center_y = scale * (sh * (0.5 + ty));
    GeomAugmentation {
        scale,
        tx,
        ty,
        crop: CropRect {
            x0: (center_x - target.0 as f64 / 2.0).round() as i64,
            y0: (center_y - target.1 as f64 / 2.0).round() as i64,
            width: target.0,
            height: target.1,
        },
        src_width: source.0,
        src_height: source.1,
    }
}

/// Intrinsics of the apparent camera that produced the augmented view.
pub fn apply_to_intrinsics(aug: &GeomAugmentation, k: &Intrinsics) -> Intrinsics {
    Intrinsics {
        fx: k.fx * aug.scale,
        fy: k.fy * aug.scale,
        cx: k.cx * aug.scale - aug.crop.x0 as f64,
        cy: k.cy * aug.scale - aug.crop.y0 as f64,
        width: aug.out_width(),
        height: aug.out_height(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Filter {
    Nearest,
    Bilinear,
}

/// Values that can be blended by bilinear resampling.
pub trait Resample: Copy {
    fn zero() -> Self;
    fn invalid() -> Self;
    fn add_scaled(self, other: Self, w: f64) -> Self;
    fn div(self, w: f64) -> Self;
}

impl Resample for f64 {
    fn zero() -> Self {
        0.0
    }
    fn invalid() -> Self {
        f64::NAN
    }
    fn add_scaled(self, other: Self, w: f64) -> Self {
        self + w * other
    }
    fn div(self, w: f64) -> Self {
        self / w
    }
}

impl Resample for [f64; 3] {
    fn zero() -> Self {
        [0.0; 3]
    }
    fn invalid() -> Self {
        [0.0; 3]
    }
    fn add_scaled(self, o: Self, w: f64) -> Self {
        [self[0] + w * o[0], self[1] + w * o[1], self[2] + w * o[2]]
    }
    fn div(self, w: f64) -> Self {
        [self[0] / w, self[1] / w, self[2] / w]
    }
}

/// Bilinear neighbors of index-space point `(px, py)` with positive weight and a valid sample.
///
/// Weights are not renormalized. Neighbors outside the grid or masked out are dropped.
pub(crate) fn bilinear_taps(
    px: f64,
    py: f64,
    width: usize,
    height: usize,
    mask: Option<&ValidityMask>,
) -> ([(usize, f64); 4], usize) {
    let x0 = px.floor();
    let y0 = py.floor();
    let fx = px - x0;
    let fy = py - y0;
    let mut taps = [(0usize, 0.0f64); 4];
    let mut n = 0;
    for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
            let w = wx * wy;
            if w <= 0.0 {
                continue;
            }
            let xi = x0 as i64 + dx;
            let yi = y0 as i64 + dy;
            if xi < 0 || yi < 0 || xi >= width as i64 || yi >= height as i64 {
                continue;
            }
            let idx = yi as usize * width + xi as usize;
            if let Some(m) = mask {
                if !m.as_slice()[idx] {
                    continue;
                }
            }
            taps[n] = (idx, w);
            n += 1;
        }
    }
    (taps, n)
}

/// Inverse-warps `grid` into the augmented view.
///
/// Values are resampled, never rescaled. Output pixels whose pre-image falls outside
/// the source, or whose contributing samples are all invalid, are marked invalid.
pub fn apply_to_grid<T: Resample>(
    aug: &GeomAugmentation,
    grid: &Grid<T>,
    mask: Option<&ValidityMask>,
    filter: Filter,
) -> Result<(Grid<T>, ValidityMask)> {
    aug.check()?;
    if grid.shape() != (aug.src_width, aug.src_height) {
        return Err(Error::usage(format!(
            "grid is {}×{}, augmentation expects {}×{}",
            grid.width(),
            grid.height(),
            aug.src_width,
            aug.src_height
        )));
    }
    if let Some(m) = mask {
        grid.ensure_shape(m, "source mask")?;
    }
    let (w, h) = grid.shape();
    let (ow, oh) = (aug.out_width(), aug.out_height());
    let mut out = Vec::with_capacity(ow * oh);
    let mut valid = Vec::with_capacity(ow * oh);
    let src = grid.as_slice();
    for y in 0..oh {
        for x in 0..ow {
            let (su, sv) = aug.to_source(x as f64 + 0.5, y as f64 + 0.5);
            let sample = match filter {
                Filter::Nearest => {
                    let (xi, yi) = (su.floor(), sv.floor());
                    if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
                        None
                    } else {
                        let idx = yi as usize * w + xi as usize;
                        match mask {
                            Some(m) if !m.as_slice()[idx] => None,
                            _ => Some(src[idx]),
                        }
                    }
                }
                Filter::Bilinear => {
                    let (px, py) = (su - 0.5, sv - 0.5);
                    if px < -0.5 || py < -0.5 || px > w as f64 - 0.5 || py > h as f64 - 0.5 {
                        None
                    } else {
                        let (taps, n) = bilinear_taps(px, py, w, h, mask);
                        if n == 0 {
                            None
                        } else {
                            let mut acc = T::zero();
                            let mut wsum = 0.0;
                            for &(idx, wt) in &taps[..n] {
                                acc = acc.add_scaled(src[idx], wt);
                                wsum += wt;
                            }
                            Some(acc.div(wsum))
                        }
                    }
                }
            };
            match sample {
                Some(v) => {
                    out.push(v);
                    valid.push(true);
                }
                None => {
                    out.push(T::invalid());
                    valid.push(false);
                }
            }
        }
    }
    Ok((Grid::from_vec(ow, oh, out)?, Grid::from_vec(ow, oh, valid)?))
}

pub fn apply_to_depth(aug: &GeomAugmentation, depth: &DepthMap, filter: Filter) -> Result<DepthMap> {
    let (values, mask) = apply_to_grid(aug, &depth.values, Some(&depth.mask), filter)?;
    DepthMap::new(values, mask)
}

pub fn apply_to_image(
    aug: &GeomAugmentation,
    rgb: &RgbImage,
    filter: Filter,
) -> Result<(RgbImage, ValidityMask)> {
    apply_to_grid(aug, rgb, None, filter)
}

/// Affine map between index-space pixel coordinates of two views.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap2 {
    pub sx: f64,
    pub ox: f64,
    pub sy: f64,
    pub oy: f64,
}

impl AffineMap2 {
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.sx * x + self.ox, self.sy * y + self.oy)
    }
}

/// `T1 ∘ T2⁻¹` in index space: view-2 pixel index to view-1 pixel index.
pub fn compose_affine(a1: &GeomAugmentation, a2: &GeomAugmentation) -> Result<AffineMap2> {
    a1.check()?;
    a2.check()?;
    let s = a1.scale / a2.scale;
    Ok(AffineMap2 {
        sx: s,
        ox: s * (0.5 + a2.crop.x0 as f64) - a1.crop.x0 as f64 - 0.5,
        sy: s,
        oy: s * (0.5 + a2.crop.y0 as f64) - a1.crop.y0 as f64 - 0.5,
    })
}

/// For every pixel of view 2, where it lands in view 1 (index space).
#[derive(Clone, Debug, PartialEq)]
pub struct WarpField {
    pub src_coords: Grid<[f64; 2]>,
    pub valid: ValidityMask,
    /// Size of the view the coordinates point into.
    pub src_width: usize,
    pub src_height: usize,
}

/// Dense warp from view 2 into view 1. Valid where the landing point lies inside
/// view 1 so that bilinear sampling never extrapolates.
pub fn compose_warp(a1: &GeomAugmentation, a2: &GeomAugmentation) -> Result<WarpField> {
    let map = compose_affine(a1, a2)?;
    let (w1, h1) = (a1.out_width() as f64, a1.out_height() as f64);
    let (w2, h2) = (a2.out_width(), a2.out_height());
    let mut coords = Vec::with_capacity(w2 * h2);
    let mut valid = Vec::with_capacity(w2 * h2);
    for y in 0..h2 {
        for x in 0..w2 {
            let (u, v) = map.apply(x as f64, y as f64);
            coords.push([u, v]);
            valid.push(u >= 0.0 && v >= 0.0 && u <= w1 - 1.0 && v <= h1 - 1.0);
        }
    }
    Ok(WarpField {
        src_coords: Grid::from_vec(w2, h2, coords)?,
        valid: Grid::from_vec(w2, h2, valid)?,
        src_width: a1.out_width(),
        src_height: a1.out_height(),
    })
}

/// Training input shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShapeSample {
    pub width: usize,
    pub height: usize,
}

pub const SHAPE_STEP: usize = 14;
pub const MIN_PIXELS: f64 = 0.2e6;
pub const MAX_PIXELS: f64 = 0.6e6;

fn round_to_step(v: f64) -> usize {
    ((v / SHAPE_STEP as f64).round() as usize).max(1) * SHAPE_STEP
}

impl ShapeSample {
    pub fn within_bounds(&self) -> bool {
        let area = (self.width * self.height) as f64;
        let ratio = self.width as f64 / self.height as f64;
        (MIN_PIXELS..=MAX_PIXELS).contains(&area) && (0.5..=2.0).contains(&ratio)
    }
}

/// Area uniform in [0.2, 0.6] MP, aspect ratio log-uniform in [1/2, 2], sides
/// multiples of 14. Draws whose rounded shape leaves the bounds are redrawn.
pub fn sample_training_shape<R: Rng + ?Sized>(rng: &mut R) -> ShapeSample {
    loop {
        let area: f64 = rng.random_range(MIN_PIXELS..=MAX_PIXELS);
        let log_ratio: f64 = rng.random_range(-1.0..=1.0);
        let ratio = log_ratio.exp2();
        let shape = ShapeSample {
            width: round_to_step((area * ratio).sqrt()),
            height: round_to_step((area / ratio).sqrt()),
        };
        if shape.within_bounds() {
            return shape;
        }
    }
}
