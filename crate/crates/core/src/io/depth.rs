use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{DepthMap, Grid};

/// Readers reject larger widths or heights before allocating.
pub const MAX_DIM: usize = 1 << 16;

pub const RAWF32_MAGIC: &[u8; 4] = b"DKF1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DepthFileFormat {
    /// Single-channel portable float map.
    Pfm,
    /// 16-bit grayscale PNG; stored units times `scale` meters, 0 is invalid.
    Png16 { scale: f64 },
    /// `DKF1`, little-endian u32 width and height, row-major little-endian f32.
    RawF32,
}

impl DepthFileFormat {
    /// Guesses from the extension: `.pfm`, `.png`, `.dkf`/`.f32`/`.raw`.
    pub fn from_path(path: &Path, png_scale: f64) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "pfm" => Ok(Self::Pfm),
            "png" => Ok(Self::Png16 { scale: png_scale }),
            "dkf" | "f32" | "raw" => Ok(Self::RawF32),
            _ => Err(Error::usage(format!(
                "cannot infer depth format from `{}`",
                path.display()
            ))),
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            Self::Png16 { scale } if !(scale.is_finite() && *scale > 0.0) => Err(Error::usage(
                format!("PNG depth scale must be positive, got {scale}"),
            )),
            _ => Ok(()),
        }
    }
}

impl FromStr for DepthFileFormat {
    type Err = Error;

    /// `pfm`, `raw`, `png` (millimeters) or `png:<meters per unit>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pfm" => Ok(Self::Pfm),
            "raw" | "rawf32" | "dkf" => Ok(Self::RawF32),
            "png" | "png16" => Ok(Self::Png16 { scale: 0.001 }),
            _ => match s.split_once(':') {
                Some(("png" | "png16", v)) => {
                    let scale: f64 = v
                        .parse()
                        .map_err(|_| Error::usage(format!("bad PNG scale `{v}`")))?;
                    let f = Self::Png16 { scale };
                    f.check()?;
                    Ok(f)
                }
                _ => Err(Error::usage(format!("unknown depth format `{s}`"))),
            },
        }
    }
}

fn check_dims(w: usize, h: usize, offset: usize) -> Result<()> {
    if w == 0 || h == 0 || w > MAX_DIM || h > MAX_DIM {
        return Err(Error::parse(
            offset,
            format!("dimensions {w}×{h} outside 1..={MAX_DIM}"),
        ));
    }
    Ok(())
}

/// Reads the next whitespace-delimited header token, returning it and its start offset.
fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<(&'a str, usize)> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(start, "truncated header"));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .map(|t| (t, start))
        .map_err(|_| Error::parse(start, "header is not ASCII"))
}

fn decode_pfm(bytes: &[u8]) -> Result<Grid<f64>> {
    let mut pos = 0;
    let (magic, at) = token(bytes, &mut pos)?;
    match magic {
        "Pf" => {}
        "PF" => return Err(Error::parse(at, "three-channel PFM is not a depth map")),
        _ => return Err(Error::parse(at, "missing `Pf` magic")),
    }
    let mut dim = |name: &str| -> Result<(usize, usize)> {
        let (t, at) = token(bytes, &mut pos)?;
        t.parse::<usize>()
            .map(|v| (v, at))
            .map_err(|_| Error::parse(at, format!("bad {name} `{t}`")))
    };
    let (w, at_w) = dim("width")?;
    let (h, _) = dim("height")?;
    check_dims(w, h, at_w)?;
    let (t, at) = token(bytes, &mut pos)?;
    let scale: f64 = t
        .parse()
        .map_err(|_| Error::parse(at, format!("bad scale `{t}`")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(at, "scale must be nonzero"));
    }
    // Exactly one whitespace byte separates the header from the data.
    if pos >= bytes.len() {
        return Err(Error::parse(pos, "truncated header"));
    }
    pos += 1;
    let need = w * h * 4;
    if bytes.len() - pos < need {
        return Err(Error::parse(
            bytes.len(),
            format!("expected {need} data bytes, found {}", bytes.len() - pos),
        ));
    }
    let little = scale < 0.0;
    let data = &bytes[pos..pos + need];
    let mut out = vec![0.0; w * h];
    for (k, c) in data.chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (x, row) = (k % w, k / w);
        out[(h - 1 - row) * w + x] = v as f64;
    }
    Grid::from_vec(w, h, out)
}

fn encode_pfm(g: &Grid<f64>) -> Vec<u8> {
    let (w, h) = g.shape();
    let mut out = format!("Pf\n{w} {h}\n-1\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(g[(x, y)] as f32).to_le_bytes());
        }
    }
    out
}

fn decode_raw(bytes: &[u8]) -> Result<Grid<f64>> {
    if bytes.len() < 4 || &bytes[..4] != RAWF32_MAGIC {
        return Err(Error::parse(0, "missing `DKF1` magic"));
    }
    if bytes.len() < 12 {
        return Err(Error::parse(bytes.len(), "truncated header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (w, h) = (u32_at(4), u32_at(8));
    check_dims(w, h, 4)?;
    let need = w * h * 4;
    if bytes.len() - 12 != need {
        return Err(Error::parse(
            bytes.len().min(12 + need),
            format!("expected {need} data bytes, found {}", bytes.len() - 12),
        ));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Grid::from_vec(w, h, data)
}

fn encode_raw(g: &Grid<f64>) -> Vec<u8> {
    let (w, h) = g.shape();
    let mut out = Vec::with_capacity(12 + w * h * 4);
    out.extend_from_slice(RAWF32_MAGIC);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    for v in g.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

fn decode_png16(bytes: &[u8], scale: f64) -> Result<Grid<f64>> {
    let png_err = |e: png::DecodingError| Error::Png(e.to_string());
    let mut reader = png::Decoder::new(Cursor::new(bytes)).read_info().map_err(png_err)?;
    let info = reader.info();
    let (w, h) = (info.width as usize, info.height as usize);
    check_dims(w, h, 16)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::Png(format!(
            "expected 16-bit grayscale, found {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| Error::Png("image too large".into()))?];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let data = buf[..frame.buffer_size()]
        .chunks_exact(2)
        .map(|c| match u16::from_be_bytes([c[0], c[1]]) {
            0 => f64::NAN,
            u => u as f64 * scale,
        })
        .collect();
    Grid::from_vec(w, h, data)
}

/// Returns the encoded bytes and the number of valid values clamped into `[1, 65535]`.
fn encode_png16(g: &Grid<f64>, scale: f64) -> Result<(Vec<u8>, usize)> {
    let (w, h) = g.shape();
    let mut clipped = 0;
    let mut raw = Vec::with_capacity(w * h * 2);
    for v in g.as_slice() {
        let u = if v.is_finite() && *v > 0.0 {
            let r = (v / scale).round();
            if !(1.0..=65535.0).contains(&r) {
                clipped += 1;
            }
            r.clamp(1.0, 65535.0) as u16
        } else {
            0
        };
        raw.extend_from_slice(&u.to_be_bytes());
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let png_err = |e: png::EncodingError| Error::Png(e.to_string());
        let mut wr = enc.write_header().map_err(png_err)?;
        wr.write_image_data(&raw).map_err(png_err)?;
        wr.finish().map_err(png_err)?;
    }
    if clipped > 0 {
        log::warn!("{clipped} depth values clipped to the 16-bit PNG range at scale {scale}");
    }
    Ok((out, clipped))
}

/// Decodes stored values; invalid PNG pixels become NaN, other formats keep their raw values.
pub fn decode_grid(bytes: &[u8], format: DepthFileFormat) -> Result<Grid<f64>> {
    format.check()?;
    match format {
        DepthFileFormat::Pfm => decode_pfm(bytes),
        DepthFileFormat::RawF32 => decode_raw(bytes),
        DepthFileFormat::Png16 { scale } => decode_png16(bytes, scale),
    }
}

/// Returns the encoded bytes and the PNG clipping count (0 for float formats).
pub fn encode_grid(g: &Grid<f64>, format: DepthFileFormat) -> Result<(Vec<u8>, usize)> {
    format.check()?;
    if g.width() > MAX_DIM || g.height() > MAX_DIM {
        return Err(Error::usage(format!("grid wider than {MAX_DIM} cannot be stored")));
    }
    match format {
        DepthFileFormat::Pfm => Ok((encode_pfm(g), 0)),
        DepthFileFormat::RawF32 => Ok((encode_raw(g), 0)),
        DepthFileFormat::Png16 { scale } => encode_png16(g, scale),
    }
}

pub fn decode_depth(bytes: &[u8], format: DepthFileFormat) -> Result<DepthMap> {
    decode_grid(bytes, format).map(DepthMap::from_values)
}

/// Invalid pixels keep their stored value when it already reads back as invalid,
/// and are written as NaN otherwise.
pub fn encode_depth(map: &DepthMap, format: DepthFileFormat) -> Result<(Vec<u8>, usize)> {
    let data = map
        .values
        .as_slice()
        .iter()
        .zip(map.mask.as_slice())
        .map(|(v, m)| if *m || !(v.is_finite() && *v > 0.0) { *v } else { f64::NAN })
        .collect();
    encode_grid(&Grid::from_vec(map.width(), map.height(), data)?, format)
}

pub fn read_grid(path: &Path, format: DepthFileFormat) -> Result<Grid<f64>> {
    decode_grid(&fs::read(path).map_err(Error::io(path))?, format)
}

pub fn write_grid(g: &Grid<f64>, path: &Path, format: DepthFileFormat) -> Result<usize> {
    let (bytes, clipped) = encode_grid(g, format)?;
    fs::write(path, bytes).map_err(Error::io(path))?;
    Ok(clipped)
}

pub fn read_depth(path: &Path, format: DepthFileFormat) -> Result<DepthMap> {
    decode_depth(&fs::read(path).map_err(Error::io(path))?, format)
}

/// Returns the number of clipped values (PNG only).
pub fn write_depth(map: &DepthMap, path: &Path, format: DepthFileFormat) -> Result<usize> {
    let (bytes, clipped) = encode_depth(map, format)?;
    fs::write(path, bytes).map_err(Error::io(path))?;
    Ok(clipped)
}
