use std::fs;

use metricdepth_core::patchkernel::{bench_kernel, bench_report, BenchConfig};
use metricdepth_core::Error;

use crate::BenchArgs;

pub fn run(a: BenchArgs) -> Result<u8, Error> {
    if a.threads.contains(&0) {
        return Err(Error::Usage("thread counts must be at least 1".into()));
    }
    let rows = bench_kernel(&BenchConfig {
        sizes: a.sizes,
        counts: a.counts,
        threads: a.threads,
        image_side: a.side,
        warmup: a.warmup,
        reps: a.reps,
        seed: a.seed,
    })?;
    let report = bench_report(&rows);
    print!("{report}");
    if let Some(p) = a.out {
        fs::write(&p, &report).map_err(Error::io(&p))?;
    }
    Ok(0)
}
