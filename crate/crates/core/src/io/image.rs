use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, RgbImage};

use super::MAX_DIM;

/// Reads an 8- or 16-bit grayscale/RGB PNG (alpha dropped) into `[0, 1]` channels.
pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let png_err = |e: png::DecodingError| Error::Png(format!("{}: {e}", path.display()));
    let mut dec = png::Decoder::new(BufReader::new(File::open(path).map_err(Error::io(path))?));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(png_err)?;
    let (w, h) = (reader.info().width as usize, reader.info().height as usize);
    if w > MAX_DIM || h > MAX_DIM {
        return Err(Error::Png(format!("{w}×{h} image is too large")));
    }
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| Error::Png("image too large".into()))?];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let buf = &buf[..frame.buffer_size()];
    let channels = frame.color_type.samples();
    let sixteen = frame.bit_depth == png::BitDepth::Sixteen;
    let sample = |i: usize| {
        if sixteen {
            u16::from_be_bytes([buf[2 * i], buf[2 * i + 1]]) as f64 / 65535.0
        } else {
            buf[i] as f64 / 255.0
        }
    };
    Ok(Grid::from_fn(w, h, |x, y| {
        let base = (y * w + x) * channels;
        if channels < 3 {
            let v = sample(base);
            [v, v, v]
        } else {
            [sample(base), sample(base + 1), sample(base + 2)]
        }
    }))
}

/// Writes 8-bit RGB, clamping channels to `[0, 1]`.
pub fn write_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    let png_err = |e: png::EncodingError| Error::Png(e.to_string());
    let mut enc = png::Encoder::new(
        BufWriter::new(File::create(path).map_err(Error::io(path))?),
        img.width() as u32,
        img.height() as u32,
    );
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let data: Vec<u8> = img
        .as_slice()
        .iter()
        .flat_map(|px| px.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    let mut wr = enc.write_header().map_err(png_err)?;
    wr.write_image_data(&data).map_err(png_err)?;
    wr.finish().map_err(png_err)
}
