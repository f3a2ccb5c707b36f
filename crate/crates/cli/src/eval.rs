use std::fs;
use std::path::Path;

use metricdepth_core::evaluate::{evaluate_manifest, EvalOptions};
use metricdepth_core::io::read_manifest;
use metricdepth_core::metrics::{AlignmentMode, FScoreConfig};
use metricdepth_core::Error;

use crate::{Align, EvalArgs, Format, EXIT_DATA};

pub fn run(a: EvalArgs) -> Result<u8, Error> {
    let manifest = read_manifest(&a.manifest)?;
    let opts = EvalOptions {
        align: match a.align {
            Align::None => AlignmentMode::None,
            Align::Median => AlignmentMode::MedianScale,
            Align::Ssi => AlignmentMode::SsiInverseDepth,
        },
        fscore: FScoreConfig {
            seed: a.seed,
            ..Default::default()
        },
        ..Default::default()
    };
    let outcome = evaluate_manifest(&manifest, &opts, a.jobs.get())?;
    let report = &outcome.report;
    let mut failures = String::new();
    for f in &outcome.failures {
        failures.push_str(&format!("line {}\t{}\t{}\n", f.line, f.id, f.message));
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
        match a.format {
            Format::Txt => {
                let mut text = report.to_text();
                if !failures.is_empty() {
                    text.push_str(&format!("failed records: {}\n{failures}", outcome.failures.len()));
                }
                write(&dir.join("report.txt"), text)?;
            }
            Format::Csv => {
                write(&dir.join("per_image.csv"), report.per_image_csv())?;
                write(&dir.join("summary.csv"), report.summary_csv())?;
            }
            Format::Kv => {
                let mut kv = report.to_kv();
                kv.push_str(&format!("failed = {}\n", outcome.failures.len()));
                write(&dir.join("report.kv"), kv)?;
            }
        }
    }
    print!("{}", report.to_text());
    if outcome.failures.is_empty() {
        Ok(0)
    } else {
        eprint!("{} record(s) failed:\n{failures}", outcome.failures.len());
        Ok(EXIT_DATA)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    fs::write(path, contents).map_err(Error::io(path))
}
