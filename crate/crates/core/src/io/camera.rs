use std::fs;
use std::path::Path;

use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::geometry::Intrinsics;

const FIELDS: [&str; 7] = ["fx", "fy", "cx", "cy", "width", "height", "K"];

fn number(t: &Table, key: &str) -> Result<Option<f64>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Float(v)) => Ok(Some(*v)),
        Some(Value::Integer(v)) => Ok(Some(*v as f64)),
        Some(other) => Err(Error::field(key, format!("expected a number, found {}", other.type_str()))),
    }
}

fn required(t: &Table, key: &str) -> Result<f64> {
    number(t, key)?.ok_or_else(|| Error::field(key, "missing"))
}

fn dimension(t: &Table, key: &str) -> Result<usize> {
    match t.get(key) {
        None => Err(Error::field(key, "missing")),
        Some(Value::Integer(v)) if *v > 0 && *v <= super::MAX_DIM as i64 => Ok(*v as usize),
        Some(v) => Err(Error::field(key, format!("expected a positive integer, found {v}"))),
    }
}

/// Reads `K = [[fx, 0, cx], [0, fy, cy], [0, 0, 1]]`.
fn k_matrix(v: &Value) -> Result<[f64; 4]> {
    let bad = |msg: &str| Error::field("K", msg.to_string());
    let rows = v.as_array().filter(|r| r.len() == 3).ok_or_else(|| bad("expected 3 rows"))?;
    let mut m = [[0.0; 3]; 3];
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().filter(|r| r.len() == 3).ok_or_else(|| bad("expected 3 columns per row"))?;
        for (j, e) in row.iter().enumerate() {
            m[i][j] = match e {
                Value::Float(f) => *f,
                Value::Integer(n) => *n as f64,
                _ => return Err(bad("entries must be numbers")),
            };
        }
    }
    if m[0][1] != 0.0 || m[1][0] != 0.0 || m[2] != [0.0, 0.0, 1.0] {
        return Err(bad("must be an upper-triangular pinhole matrix without skew and with last row [0, 0, 1]"));
    }
    Ok([m[0][0], m[1][1], m[0][2], m[1][2]])
}

/// Parses a camera given either as `fx fy cx cy` fields or as a `K` matrix, plus `width` and `height`.
pub fn parse_camera(text: &str) -> Result<Intrinsics> {
    let t: Table = text.parse().map_err(|e: toml::de::Error| {
        Error::parse(e.span().map_or(0, |s| s.start), e.message().to_string())
    })?;
    for key in t.keys().filter(|k| !FIELDS.contains(&k.as_str())) {
        log::warn!("ignoring unknown camera field `{key}`");
    }
    let [fx, fy, cx, cy] = match t.get("K") {
        Some(k) => {
            if let Some(dup) = ["fx", "fy", "cx", "cy"].into_iter().find(|f| t.contains_key(*f)) {
                return Err(Error::field(dup, "given together with `K`"));
            }
            k_matrix(k)?
        }
        None => [
            required(&t, "fx")?,
            required(&t, "fy")?,
            required(&t, "cx")?,
            required(&t, "cy")?,
        ],
    };
    let (width, height) = (dimension(&t, "width")?, dimension(&t, "height")?);
    for (name, v) in [("fx", fx), ("fy", fy)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::field(name, format!("focal length must be positive, got {v}")));
        }
    }
    for (name, v) in [("cx", cx), ("cy", cy)] {
        if !v.is_finite() {
            return Err(Error::field(name, "must be finite"));
        }
    }
    Intrinsics::new(fx, fy, cx, cy, width, height)
}

pub fn read_camera(path: &Path) -> Result<Intrinsics> {
    parse_camera(&fs::read_to_string(path).map_err(Error::io(path))?)
}

#[derive(Serialize)]
struct CameraFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u64,
    height: u64,
}

/// Field form; floats round-trip exactly.
pub fn camera_to_string(k: &Intrinsics) -> String {
    toml::to_string(&CameraFile {
        fx: k.fx,
        fy: k.fy,
        cx: k.cx,
        cy: k.cy,
        width: k.width as u64,
        height: k.height as u64,
    })
    .expect("plain table serializes")
}

pub fn write_camera(k: &Intrinsics, path: &Path) -> Result<()> {
    fs::write(path, camera_to_string(k)).map_err(Error::io(path))?;
    Ok(())
}
