//! Analytic scenes of planes and spheres rendered through a pinhole camera, giving
//! exact depth, rays and textured RGB.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{apply_to_intrinsics, GeomAugmentation};
use crate::error::{Error, Result};
use crate::geometry::{backproject, dot3, ray_to_angles, AngleMap, Intrinsics, PointCloud, Vec3};
use crate::grid::{DepthMap, Grid, RgbImage};
use crate::io::{self, DatasetManifest, DepthFileFormat, ManifestRecord};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    /// Points with `normal · p = offset`.
    Plane { normal: Vec3, offset: f64 },
    Sphere { center: Vec3, radius: f64 },
}

impl Primitive {
    /// Smallest positive `t` with `t·dir` on the surface.
    pub fn intersect(&self, dir: Vec3) -> Option<f64> {
        match *self {
            Primitive::Plane { normal, offset } => {
                let d = dot3(normal, dir);
                let t = offset / d;
                (d != 0.0 && t > 0.0 && t.is_finite()).then_some(t)
            }
            Primitive::Sphere { center, radius } => {
                let a = dot3(dir, dir);
                let b = dot3(dir, center);
                let c = dot3(center, center) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [(b - s) / a, (b + s) / a].into_iter().find(|t| *t > 0.0)
            }
        }
    }

    /// Signed distance-like residual: zero on the surface.
    pub fn residual(&self, p: Vec3) -> f64 {
        match *self {
            Primitive::Plane { normal, offset } => dot3(normal, p) - offset,
            Primitive::Sphere { center, radius } => {
                let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                dot3(d, d).sqrt() - radius
            }
        }
    }
}

/// Surface coloring, evaluated at the 3D hit point so every view agrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Texture {
    /// 3D checkerboard with cells of side `period` meters.
    Checker { period: f64 },
    Gradient,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    pub camera: Intrinsics,
    pub texture: Texture,
    /// Drives the per-primitive palette.
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::usage("scene has no primitives"));
        }
        for p in &self.primitives {
            match p {
                Primitive::Plane { normal, offset } => {
                    if dot3(*normal, *normal) == 0.0 || !offset.is_finite() {
                        return Err(Error::domain("plane needs a nonzero normal and finite offset"));
                    }
                }
                Primitive::Sphere { radius, .. } => {
                    if !(radius.is_finite() && *radius > 0.0) {
                        return Err(Error::domain(format!("sphere radius must be positive, got {radius}")));
                    }
                }
            }
        }
        if let Texture::Checker { period } = self.texture {
            if !(period.is_finite() && period > 0.0) {
                return Err(Error::domain("checker period must be positive"));
            }
        }
        self.camera.validate()
    }

    fn palette(&self) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.primitives.len())
            .map(|_| std::array::from_fn(|_| rng.random_range(0.3..0.95)))
            .collect()
    }
}

/// One rendered view. Angles cover every pixel; depth, RGB and the cloud only hits.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub camera: Intrinsics,
    pub rgb: RgbImage,
    pub depth: DepthMap,
    pub angles: AngleMap,
    pub cloud: PointCloud,
    /// Index of the primitive seen at each pixel.
    pub hit: Grid<Option<usize>>,
}

fn shade(texture: Texture, base: [f64; 3], p: Vec3) -> [f64; 3] {
    let k = match texture {
        Texture::Constant => 1.0,
        Texture::Checker { period } => {
            let parity = p.iter().map(|c| (c / period).floor() as i64).sum::<i64>();
            if parity.rem_euclid(2) == 0 { 1.0 } else { 0.35 }
        }
        Texture::Gradient => 0.55 + 0.45 * (0.9 * p[0] + 0.6 * p[1] + 0.3 * p[2]).sin(),
    };
    base.map(|c| c * k)
}

/// Renders `out` pixels; `to_base` maps output pixel centers into `spec.camera` coordinates,
/// returning `None` outside the base image.
fn render_mapped(
    spec: &SceneSpec,
    camera: Intrinsics,
    to_base: impl Fn(f64, f64) -> Option<(f64, f64)>,
) -> Result<RenderedView> {
    spec.validate()?;
    let (w, h) = (camera.width, camera.height);
    let palette = spec.palette();
    let mut depth = Vec::with_capacity(w * h);
    let mut rgb = Vec::with_capacity(w * h);
    let mut hit = Vec::with_capacity(w * h);
    let mut theta = Vec::with_capacity(w * h);
    let mut phi = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
            let inside = to_base(u, v);
            let (bu, bv) = inside.unwrap_or((u, v));
            let [rx, ry] = spec.camera.homogeneous_at(bu, bv);
            let dir = [rx, ry, 1.0];
            let (t, p) = ray_to_angles(dir)?;
            theta.push(t);
            phi.push(p);
            let nearest = inside.and_then(|_| {
                spec.primitives
                    .iter()
                    .enumerate()
                    .filter_map(|(i, prim)| prim.intersect(dir).map(|t| (i, t)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
            });
            match nearest {
                Some((i, t)) => {
                    let point = [t * dir[0], t * dir[1], t];
                    depth.push(t);
                    rgb.push(shade(spec.texture, palette[i], point));
                    hit.push(Some(i));
                }
                None => {
                    depth.push(f64::NAN);
                    rgb.push([0.0; 3]);
                    hit.push(None);
                }
            }
        }
    }
    let depth = DepthMap::from_values(Grid::from_vec(w, h, depth)?);
    let angles = AngleMap::new(Grid::from_vec(w, h, theta)?, Grid::from_vec(w, h, phi)?)?;
    let cloud = backproject(&angles, &depth)?;
    Ok(RenderedView {
        camera,
        rgb: Grid::from_vec(w, h, rgb)?,
        depth,
        angles,
        cloud,
        hit: Grid::from_vec(w, h, hit)?,
    })
}

pub fn render(spec: &SceneSpec) -> Result<RenderedView> {
    render_mapped(spec, spec.camera, |u, v| Some((u, v)))
}

/// One augmented view of the scene. Rays are evaluated at the source pre-image of
/// each pixel, which is the same ray as through `apply_to_intrinsics(aug, camera)`.
/// Pixels whose pre-image leaves the source image are invalid.
pub fn render_view(spec: &SceneSpec, aug: &GeomAugmentation) -> Result<RenderedView> {
    if (aug.src_width, aug.src_height) != (spec.camera.width, spec.camera.height) {
        return Err(Error::usage("augmentation source size differs from the scene camera"));
    }
    let (sw, sh) = (aug.src_width as f64, aug.src_height as f64);
    render_mapped(spec, apply_to_intrinsics(aug, &spec.camera), |u, v| {
        let (su, sv) = aug.to_source(u, v);
        (su >= 0.0 && sv >= 0.0 && su <= sw && sv <= sh).then_some((su, sv))
    })
}

/// Two views of one scene through different apparent cameras.
pub fn render_pair(
    spec: &SceneSpec,
    aug1: &GeomAugmentation,
    aug2: &GeomAugmentation,
) -> Result<(RenderedView, RenderedView)> {
    Ok((render_view(spec, aug1)?, render_view(spec, aug2)?))
}

/// A back wall plus one to three spheres, with checker cells sized to the patch range.
pub fn random_scene(seed: u64, camera: Intrinsics) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wall: f64 = rng.random_range(8.0..15.0);
    let mut primitives = vec![Primitive::Plane {
        normal: [0.0, 0.0, 1.0],
        offset: wall,
    }];
    let spheres = rng.random_range(1..=3);
    for _ in 0..spheres {
        let z: f64 = rng.random_range(3.0..wall - 2.0);
        let radius: f64 = rng.random_range(0.4..1.2);
        let half_w = 0.6 * z * camera.width as f64 / (2.0 * camera.fx);
        let half_h = 0.6 * z * camera.height as f64 / (2.0 * camera.fy);
        primitives.push(Primitive::Sphere {
            center: [
                rng.random_range(-half_w..=half_w),
                rng.random_range(-half_h..=half_h),
                z,
            ],
            radius,
        });
    }
    // About 6% of the short image side per cell on the wall.
    let side = camera.width.min(camera.height) as f64;
    let period = 0.06 * side * wall / camera.fx;
    SceneSpec {
        primitives,
        camera,
        texture: Texture::Checker { period },
        seed,
    }
}

/// Options for [`generate_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetOptions {
    pub scenes: usize,
    pub seed: u64,
    pub camera: Intrinsics,
    /// Predictions are ground truth times this factor.
    pub pred_scale: f64,
    /// Log-space standard deviation of multiplicative prediction noise. When positive,
    /// uncertainty files holding the true absolute log error are written too.
    pub pred_noise: f64,
    /// Recorded as the manifest's maximum depth.
    pub max_depth: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            scenes: 20,
            seed: 0,
            camera: Intrinsics {
                fx: 260.0,
                fy: 260.0,
                cx: 160.0,
                cy: 120.0,
                width: 320,
                height: 240,
            },
            pred_scale: 1.0,
            pred_noise: 0.0,
            max_depth: 20.0,
        }
    }
}

/// Written depths lie on this grid (about 19 µm). A grid value times a one-decimal
/// factor such as 1.3 is exactly representable in f32, so scaled predictions carry
/// no storage rounding.
pub const DEPTH_QUANTUM: f64 = 10.0 / (1u64 << 19) as f64;

/// Renders scenes into `dir` as raw f32 depth, PNG RGB and camera files, plus `manifest.tsv`.
pub fn generate_dataset(dir: &Path, opts: &DatasetOptions) -> Result<DatasetManifest> {
    if !(opts.pred_scale.is_finite() && opts.pred_scale > 0.0) {
        return Err(Error::usage("prediction scale must be positive"));
    }
    if !(opts.pred_noise.is_finite() && opts.pred_noise >= 0.0) {
        return Err(Error::usage("prediction noise must be non-negative"));
    }
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut manifest = DatasetManifest {
        name: "synth".into(),
        max_depth: Some(opts.max_depth),
        ..Default::default()
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let normal = |rng: &mut ChaCha8Rng| {
        // Box-Muller.
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    for i in 0..opts.scenes {
        let spec = random_scene(opts.seed.wrapping_add(i as u64), opts.camera);
        let mut view = render(&spec)?;
        for v in view.depth.values.as_mut_slice() {
            *v = (*v / DEPTH_QUANTUM).round() * DEPTH_QUANTUM;
        }
        let name = format!("scene_{i:04}");
        let path = |suffix: &str| dir.join(format!("{name}{suffix}"));
        io::write_rgb(&view.rgb, &path("_rgb.png"))?;
        io::write_depth(&view.depth, &path("_gt.dkf"), DepthFileFormat::RawF32)?;
        io::write_camera(&view.camera, &path("_camera.toml"))?;
        let mut pred = view.depth.scaled(opts.pred_scale);
        let mut record = ManifestRecord::new(path("_rgb.png"), path("_pred.dkf"), path("_gt.dkf"));
        record.camera = Some(path("_camera.toml"));
        record.pred_camera = Some(path("_camera.toml"));
        if opts.pred_noise > 0.0 {
            let mut sigma = Grid::filled(pred.width(), pred.height(), f64::NAN);
            for (k, (v, m)) in pred
                .values
                .as_mut_slice()
                .iter_mut()
                .zip(pred.mask.as_slice())
                .enumerate()
            {
                if *m {
                    let n = opts.pred_noise * normal(&mut noise_rng);
                    // Round through f32 so the stored σ matches the stored depth exactly.
                    *v = (*v * n.exp()) as f32 as f64;
                    sigma.as_mut_slice()[k] = n.abs();
                }
            }
            io::write_grid(&sigma, &path("_sigma.dkf"), DepthFileFormat::RawF32)?;
            record.uncertainty = Some(path("_sigma.dkf"));
        }
        io::write_depth(&pred, &path("_pred.dkf"), DepthFileFormat::RawF32)?;
        manifest.records.push(record);
    }
    io::write_manifest(&manifest, &dir.join("manifest.tsv"))?;
    Ok(manifest)
}
