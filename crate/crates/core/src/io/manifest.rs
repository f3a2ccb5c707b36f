use std::collections::HashSet;
use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One evaluation sample. Optional paths are written as `-`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub rgb: PathBuf,
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub camera: Option<PathBuf>,
    pub uncertainty: Option<PathBuf>,
    pub pred_camera: Option<PathBuf>,
    /// 1-based source line, 0 for records built in memory.
    pub line: usize,
}

impl ManifestRecord {
    pub fn new(rgb: impl Into<PathBuf>, pred: impl Into<PathBuf>, gt: impl Into<PathBuf>) -> Self {
        Self {
            rgb: rgb.into(),
            pred: pred.into(),
            gt: gt.into(),
            camera: None,
            uncertainty: None,
            pred_camera: None,
            line: 0,
        }
    }

    /// Short identifier for reports: the prediction's file stem.
    pub fn id(&self) -> String {
        self.pred
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.pred.display().to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    /// Maximum scene depth in meters; caps the F-score thresholds.
    pub max_depth: Option<f64>,
    /// Meters per unit for 16-bit PNG depth files.
    pub png_scale: f64,
    pub records: Vec<ManifestRecord>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            name: "dataset".into(),
            max_depth: None,
            png_scale: 0.001,
            records: Vec::new(),
        }
    }
}

fn positive(line: usize, key: &str, v: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
        _ => Err(Error::field(key, format!("line {line}: expected a positive number, got `{v}`"))),
    }
}

/// Parses manifest text. Lines are tab-separated
/// `rgb pred gt [camera] [uncertainty] [pred_camera]`; `#` starts a comment;
/// `@dataset NAME`, `@max_depth METERS` and `@png_scale METERS` set dataset properties.
/// Relative paths are resolved against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<DatasetManifest> {
    let mut m = DatasetManifest::default();
    let mut seen = HashSet::new();
    let mut offset = 0;
    for (n, raw) in text.split('\n').enumerate() {
        let line_no = n + 1;
        let start = offset;
        offset += raw.len() + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        if line.trim().is_empty() {
            continue;
        }
        if let Some(d) = line.trim().strip_prefix('@') {
            let (key, val) = d.split_once(char::is_whitespace).unwrap_or((d, ""));
            let val = val.trim();
            match key {
                "dataset" if !val.is_empty() => m.name = val.to_string(),
                "max_depth" => m.max_depth = Some(positive(line_no, key, val)?),
                "png_scale" => m.png_scale = positive(line_no, key, val)?,
                _ => return Err(Error::parse(start, format!("line {line_no}: bad directive `@{d}`"))),
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() < 3 || cols.len() > 6 {
            return Err(Error::parse(
                start,
                format!("line {line_no}: expected 3 to 6 tab-separated columns, found {}", cols.len()),
            ));
        }
        let opt = |i: usize| {
            cols.get(i)
                .filter(|c| !c.is_empty() && **c != "-")
                .map(|c| base.join(c))
        };
        for (i, name) in ["rgb", "pred", "gt"].iter().enumerate() {
            if opt(i).is_none() {
                return Err(Error::parse(start, format!("line {line_no}: `{name}` path is empty")));
            }
        }
        let rec = ManifestRecord {
            rgb: opt(0).unwrap(),
            pred: opt(1).unwrap(),
            gt: opt(2).unwrap(),
            camera: opt(3),
            uncertainty: opt(4),
            pred_camera: opt(5),
            line: line_no,
        };
        if !seen.insert(rec.pred.clone()) {
            log::warn!("line {line_no}: duplicate prediction path {}", rec.pred.display());
        }
        m.records.push(rec);
    }
    Ok(m)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")))
}

fn rel(p: &Path, base: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

/// Serializes with paths relative to `base` where possible.
pub fn manifest_to_string(m: &DatasetManifest, base: &Path) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "@dataset {}", m.name);
    if let Some(d) = m.max_depth {
        let _ = writeln!(out, "@max_depth {d}");
    }
    let _ = writeln!(out, "@png_scale {}", m.png_scale);
    out.push_str("# rgb\tpred\tgt\tcamera\tuncertainty\tpred_camera\n");
    for r in &m.records {
        let opt = |p: &Option<PathBuf>| p.as_deref().map_or("-".to_string(), |p| rel(p, base));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            rel(&r.rgb, base),
            rel(&r.pred, base),
            rel(&r.gt, base),
            opt(&r.camera),
            opt(&r.uncertainty),
            opt(&r.pred_camera)
        );
    }
    out
}

pub fn write_manifest(m: &DatasetManifest, path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    fs::write(path, manifest_to_string(m, base)).map_err(Error::io(path))?;
    Ok(())
}
