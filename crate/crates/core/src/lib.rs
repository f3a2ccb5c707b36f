//! Geometry, losses, patch kernel and evaluation metrics for monocular metric depth
//! in the pseudo-spherical (azimuth, elevation, log-depth) output space.

pub mod augment;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod gradcheck;
pub mod grid;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod patchkernel;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{AngleMap, Intrinsics, IntrinsicsResiduals, PointCloud, RayGrid, Vec3};
pub use grid::{DepthMap, Grid, RgbImage, UncertaintyMap, ValidityMask};
