use std::fmt::Write;

/// Named metric values for one image, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricRecord {
    pub id: String,
    pub values: Vec<(String, f64)>,
}

impl MetricRecord {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.values.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSummary {
    pub name: String,
    /// NaN when no record defines the metric.
    pub mean: f64,
    pub used: usize,
    /// Records that carry the metric as NaN or omit it.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub dataset: String,
    pub records: Vec<MetricRecord>,
    pub summary: Vec<MetricSummary>,
}

/// Metric names in first-appearance order across records.
fn metric_names(records: &[MetricRecord]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        for (n, _) in &r.values {
            if !names.contains(n) {
                names.push(n.clone());
            }
        }
    }
    names
}

/// Unweighted per-metric mean over records, skipping undefined (non-finite) entries.
pub fn aggregate(dataset: impl Into<String>, records: Vec<MetricRecord>) -> MetricReport {
    let summary = metric_names(&records)
        .into_iter()
        .map(|name| {
            let vals: Vec<f64> = records
                .iter()
                .filter_map(|r| r.get(&name))
                .filter(|v| v.is_finite())
                .collect();
            let mean = if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            MetricSummary {
                mean,
                used: vals.len(),
                excluded: records.len() - vals.len(),
                name,
            }
        })
        .collect();
    MetricReport {
        dataset: dataset.into(),
        records,
        summary,
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl MetricReport {
    /// `key = value` lines: dataset header, summary, then per-image values.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset = {}", self.dataset);
        let _ = writeln!(out, "records = {}", self.records.len());
        for s in &self.summary {
            let _ = writeln!(out, "summary.{}.mean = {}", s.name, num(s.mean));
            let _ = writeln!(out, "summary.{}.used = {}", s.name, s.used);
            let _ = writeln!(out, "summary.{}.excluded = {}", s.name, s.excluded);
        }
        for r in &self.records {
            for (n, v) in &r.values {
                let _ = writeln!(out, "image.{}.{} = {}", r.id, n, num(*v));
            }
        }
        out
    }

    /// One row per image; missing metrics are empty cells.
    pub fn per_image_csv(&self) -> String {
        let names = metric_names(&self.records);
        let mut out = String::from("id");
        for n in &names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&csv_field(&r.id));
            for n in &names {
                out.push(',');
                if let Some(v) = r.get(n) {
                    out.push_str(&num(v));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("metric,mean,used,excluded\n");
        for s in &self.summary {
            let _ = writeln!(out, "{},{},{},{}", s.name, num(s.mean), s.used, s.excluded);
        }
        out
    }

    /// Human-readable summary table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset: {} ({} images)", self.dataset, self.records.len());
        let width = self.summary.iter().map(|s| s.name.len()).max().unwrap_or(6).max(6);
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>6}  {:>8}", "metric", "mean", "used", "excluded");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:<width$}  {:>12.6}  {:>6}  {:>8}",
                s.name, s.mean, s.used, s.excluded
            );
        }
        out
    }
}
