//! Depth grids (PFM, 16-bit PNG, raw f32), camera files, dataset manifests and RGB images.

mod camera;
mod depth;
mod image;
mod manifest;

pub use camera::{parse_camera, read_camera, write_camera, camera_to_string};
pub use depth::{
    decode_depth, decode_grid, encode_depth, encode_grid, read_depth, read_grid, write_depth,
    write_grid, DepthFileFormat, MAX_DIM, RAWF32_MAGIC,
};
pub use image::{read_rgb, write_rgb};
pub use manifest::{
    manifest_to_string, parse_manifest, read_manifest, write_manifest, DatasetManifest,
    ManifestRecord,
};
