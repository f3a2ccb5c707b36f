//! Pinhole camera algebra and the pseudo-spherical (azimuth, elevation, log-depth)
//! output representation.
//!
//! Camera frame: x right, y down, z forward. Pixel `(u, v)` has its center at
//! `(u + 0.5, v + 0.5)` in continuous image coordinates. Azimuth is
//! `θ = atan2(x, z)` and elevation is `φ = atan2(y, √(x² + z²))`, so a unit ray is
//! `(sinθ·cosφ, sinφ, cosθ·cosφ)`.

use std::f64::consts::{FRAC_PI_2, PI};

use log::warn;

use crate::error::{Error, Result};
use crate::grid::{DepthMap, Grid};

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn norm3(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[inline]
pub(crate) fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn normalize3(v: Vec3) -> Vec3 {
    let n = norm3(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Angle between two directions, accurate near zero.
#[inline]
pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    norm3(cross3(a, b)).atan2(dot3(a, b))
}

/// Pinhole calibration `K` plus the image size it applies to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fx > 0.0) {
            return Err(Error::domain(format!("fx must be positive, got {}", self.fx)));
        }
        if !(self.fy.is_finite() && self.fy > 0.0) {
            return Err(Error::domain(format!("fy must be positive, got {}", self.fy)));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::domain("principal point must be finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::domain("image size must be at least 1×1"));
        }
        if self.cx < 0.0
            || self.cx > self.width as f64
            || self.cy < 0.0
            || self.cy > self.height as f64
        {
            warn!(
                "principal point ({}, {}) lies outside the {}×{} image",
                self.cx, self.cy, self.width, self.height
            );
        }
        Ok(())
    }

    /// Homogeneous ray `(rx, ry)` through continuous image coordinates `(u, v)`.
    #[inline]
    pub fn homogeneous_at(&self, u: f64, v: f64) -> [f64; 2] {
        [(u - self.cx) / self.fx, (v - self.cy) / self.fy]
    }

    /// Unit ray through continuous image coordinates `(u, v)`.
    #[inline]
    pub fn ray_at(&self, u: f64, v: f64) -> Vec3 {
        let [rx, ry] = self.homogeneous_at(u, v);
        normalize3([rx, ry, 1.0])
    }

    /// Unit ray through the center of pixel `(x, y)`.
    #[inline]
    pub fn pixel_ray(&self, x: usize, y: usize) -> Vec3 {
        self.ray_at(x as f64 + 0.5, y as f64 + 0.5)
    }
}

/// Multiplicative residuals on the half-size pinhole initialization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntrinsicsResiduals {
    pub dfx: f64,
    pub dfy: f64,
    pub dcx: f64,
    pub dcy: f64,
}

impl IntrinsicsResiduals {
    pub fn identity() -> Self {
        Self {
            dfx: 1.0,
            dfy: 1.0,
            dcx: 1.0,
            dcy: 1.0,
        }
    }
}

/// `fx = Δfx·W/2`, `fy = Δfy·H/2`, `cx = Δcx·W/2`, `cy = Δcy·H/2`.
pub fn intrinsics_from_residuals(
    res: IntrinsicsResiduals,
    width: usize,
    height: usize,
) -> Result<Intrinsics> {
    if !(res.dfx > 0.0 && res.dfy > 0.0) {
        return Err(Error::domain(format!(
            "focal residuals must be positive, got dfx={} dfy={}",
            res.dfx, res.dfy
        )));
    }
    let half_w = width as f64 / 2.0;
    let half_h = height as f64 / 2.0;
    Intrinsics::new(
        res.dfx * half_w,
        res.dfy * half_h,
        res.dcx * half_w,
        res.dcy * half_h,
        width,
        height,
    )
}

/// Dense unit rays, one per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct RayGrid {
    pub dirs: Grid<Vec3>,
}

/// Dense azimuth/elevation camera representation.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleMap {
    pub theta: Grid<f64>,
    pub phi: Grid<f64>,
}

impl AngleMap {
    pub fn new(theta: Grid<f64>, phi: Grid<f64>) -> Result<Self> {
        theta.ensure_shape(&phi, "elevation grid")?;
        Ok(Self { theta, phi })
    }

    pub fn width(&self) -> usize {
        self.theta.width()
    }

    pub fn height(&self) -> usize {
        self.theta.height()
    }

    /// Angles of every pixel ray of `k`.
    pub fn from_intrinsics(k: &Intrinsics) -> Self {
        rays_to_angles(&unproject_rays(k)).expect("pinhole rays are never zero")
    }

    #[inline]
    pub fn ray(&self, x: usize, y: usize) -> Vec3 {
        angles_to_ray(self.theta[(x, y)], self.phi[(x, y)])
    }
}

/// Whether depth values are measured along the optical axis or along the ray.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DepthSemantics {
    #[default]
    ZDepth,
    Radial,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Row-major source pixel index of each point, when known.
    pub pixels: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::domain(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self {
            points,
            pixels: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Sine/cosine embedding of homogeneous rays: 64 channels per ray dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct RayEncoding {
    pub width: usize,
    pub height: usize,
    /// `height × width × CHANNELS`, channel-last.
    pub channels: Vec<f64>,
}

impl RayEncoding {
    pub const BANDS: usize = 32;
    pub const CHANNELS: usize = 4 * Self::BANDS;

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * Self::CHANNELS;
        &self.channels[start..start + Self::CHANNELS]
    }
}

pub fn unproject_rays(k: &Intrinsics) -> RayGrid {
    RayGrid {
        dirs: Grid::from_fn(k.width, k.height, |x, y| k.pixel_ray(x, y)),
    }
}

/// `(θ, φ)` of a single ray. The ray need not be normalized but must be nonzero.
pub fn ray_to_angles(d: Vec3) -> Result<(f64, f64)> {
    if !(norm3(d) > 0.0) {
        return Err(Error::domain("zero-norm ray has no direction"));
    }
    let theta = d[0].atan2(d[2]);
    let phi = d[1].atan2((d[0] * d[0] + d[2] * d[2]).sqrt());
    Ok((theta, phi))
}

#[inline]
pub fn angles_to_ray(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, sp, ct * cp]
}

pub fn rays_to_angles(rays: &RayGrid) -> Result<AngleMap> {
    let mut theta = Vec::with_capacity(rays.dirs.len());
    let mut phi = Vec::with_capacity(rays.dirs.len());
    for d in rays.dirs.as_slice() {
        let (t, p) = ray_to_angles(*d)?;
        theta.push(t);
        phi.push(p);
    }
    let (w, h) = rays.dirs.shape();
    AngleMap::new(Grid::from_vec(w, h, theta)?, Grid::from_vec(w, h, phi)?)
}

pub fn angles_to_rays(angles: &AngleMap) -> RayGrid {
    let dirs = angles
        .theta
        .as_slice()
        .iter()
        .zip(angles.phi.as_slice())
        .map(|(t, p)| angles_to_ray(*t, *p))
        .collect();
    RayGrid {
        dirs: Grid::from_vec(angles.width(), angles.height(), dirs).expect("shape preserved"),
    }
}

/// 3D point of one pixel from its angles and z-depth.
#[inline]
pub fn point_from_angles(theta: f64, phi: f64, z: f64) -> Result<Vec3> {
    if theta.abs() >= FRAC_PI_2 {
        return Err(Error::domain(format!(
            "azimuth {theta} points behind the camera plane"
        )));
    }
    let ct = theta.cos();
    Ok([theta.tan() * z, phi.tan() / ct * z, z])
}

/// Valid pixels of `depth` lifted to 3D using z-depth semantics.
pub fn backproject(angles: &AngleMap, depth: &DepthMap) -> Result<PointCloud> {
    backproject_with(angles, depth, DepthSemantics::ZDepth)
}

pub fn backproject_with(
    angles: &AngleMap,
    depth: &DepthMap,
    semantics: DepthSemantics,
) -> Result<PointCloud> {
    angles.theta.ensure_shape(&depth.values, "depth map")?;
    let mut points = Vec::with_capacity(depth.valid_count());
    let mut pixels = Vec::with_capacity(depth.valid_count());
    for (i, ((t, p), (z, m))) in angles
        .theta
        .as_slice()
        .iter()
        .zip(angles.phi.as_slice())
        .zip(depth.values.as_slice().iter().zip(depth.mask.as_slice()))
        .enumerate()
    {
        if !*m {
            continue;
        }
        let point = match semantics {
            DepthSemantics::ZDepth => point_from_angles(*t, *p, *z)?,
            DepthSemantics::Radial => {
                let r = angles_to_ray(*t, *p);
                [r[0] * z, r[1] * z, r[2] * z]
            }
        };
        points.push(point);
        pixels.push(i);
    }
    Ok(PointCloud {
        points,
        pixels: Some(pixels),
    })
}

/// Inverse of [`backproject`]: per-point `(θ, φ)` and z-depth.
pub fn project_to_angles_depth(cloud: &PointCloud) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    let mut angles = Vec::with_capacity(cloud.len());
    let mut depths = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.points.iter().enumerate() {
        if !(p[2] > 0.0) {
            return Err(Error::domain(format!(
                "point {i} has z = {} (must be in front of the camera)",
                p[2]
            )));
        }
        angles.push(ray_to_angles(*p)?);
        depths.push(p[2]);
    }
    Ok((angles, depths))
}

pub fn homogeneous_rays(k: &Intrinsics) -> Grid<[f64; 2]> {
    Grid::from_fn(k.width, k.height, |x, y| {
        k.homogeneous_at(x as f64 + 0.5, y as f64 + 0.5)
    })
}

/// Angular frequencies of the sine encoding, log-spaced over `[π, 64π]`.
pub fn encoding_frequencies() -> [f64; RayEncoding::BANDS] {
    let mut out = [0.0; RayEncoding::BANDS];
    let last = (RayEncoding::BANDS - 1) as f64;
    for (k, w) in out.iter_mut().enumerate() {
        *w = PI * 64f64.powf(k as f64 / last);
    }
    out
}

/// Per pixel: `[sin(ω·rx)…, cos(ω·rx)…, sin(ω·ry)…, cos(ω·ry)…]`.
pub fn sine_encode(hrays: &Grid<[f64; 2]>) -> RayEncoding {
    let freqs = encoding_frequencies();
    let bands = RayEncoding::BANDS;
    let mut channels = Vec::with_capacity(hrays.len() * RayEncoding::CHANNELS);
    for r in hrays.as_slice() {
        for v in r {
            let start = channels.len();
            channels.resize(start + 2 * bands, 0.0);
            for (k, w) in freqs.iter().enumerate() {
                let (s, c) = (w * v).sin_cos();
                channels[start + k] = s;
                channels[start + bands + k] = c;
            }
        }
    }
    RayEncoding {
        width: hrays.width(),
        height: hrays.height(),
        channels,
    }
}

/// Maximum azimuth/elevation difference between `k1` and a resolution-scaled `k2`
/// at aligned pixel centers.
///
/// `k2` must have dimensions that are the same integer multiple of `k1`'s. Pixel
/// `(u, v)` of `k1` is compared with continuous coordinate `k·(u + 0.5, v + 0.5)`
/// of `k2`, which is the center of the same image region.
pub fn angles_fov_check(k1: &Intrinsics, k2: &Intrinsics) -> Result<f64> {
    if !k2.width.is_multiple_of(k1.width) || !k2.height.is_multiple_of(k1.height) {
        return Err(Error::usage(format!(
            "{}×{} is not an integer multiple of {}×{}",
            k2.width, k2.height, k1.width, k1.height
        )));
    }
    let k = k2.width / k1.width;
    if k2.height / k1.height != k {
        return Err(Error::usage("width and height are scaled by different factors"));
    }
    let kf = k as f64;
    let mut worst = 0.0f64;
    for y in 0..k1.height {
        for x in 0..k1.width {
            let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
            let (t1, p1) = ray_to_angles(k1.ray_at(u, v))?;
            let (t2, p2) = ray_to_angles(k2.ray_at(kf * u, kf * v))?;
            worst = worst.max((t1 - t2).abs()).max((p1 - p2).abs());
        }
    }
    Ok(worst)
}
