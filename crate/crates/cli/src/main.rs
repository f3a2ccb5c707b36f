use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use metricdepth_core::Error;

mod bench;
mod eval;
mod loss;

/// Exit codes.
const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "metricdepth", version, about = "Metric depth evaluation, losses and benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a prediction set listed in a manifest.
    Eval(EvalArgs),
    /// Compute the training loss breakdown for one prediction.
    Loss(LossArgs),
    /// Compare analytic loss gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Render synthetic scenes with exact depth and cameras.
    Synth(SynthArgs),
    /// Time the patch-loss kernel.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Jobs {
    /// Worker threads [default: all cores].
    #[arg(long, env = "METRICDEPTH_JOBS")]
    jobs: Option<NonZeroUsize>,
}

impl Jobs {
    fn get(&self) -> usize {
        self.jobs
            .or_else(|| std::thread::available_parallelism().ok())
            .map_or(1, NonZeroUsize::get)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Align {
    None,
    Median,
    Ssi,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Txt,
    Csv,
    Kv,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    align: Align,
    /// Directory for report files; the summary is always printed.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "txt")]
    format: Format,
    /// Seed for point-cloud subsampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    jobs: Jobs,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Image used to place edge-guided patches.
    #[arg(long)]
    rgb: PathBuf,
    /// Second-view prediction of the same frame; enables the consistency term.
    #[arg(long)]
    pred2: Option<PathBuf>,
    /// Predicted uncertainty; enables the uncertainty term.
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// Ground-truth camera; defaults to the pinhole with focal W/2, H/2 centered.
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Predicted camera; defaults to the ground-truth camera.
    #[arg(long)]
    pred_camera: Option<PathBuf>,
    /// TOML file with `seed`, `[weights]`, `[patches]` and `[eg_ssi]` tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Patch seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Meters per unit for 16-bit PNG depth.
    #[arg(long, default_value_t = 0.001)]
    png_scale: f64,
    /// Also report gradient norms.
    #[arg(long)]
    grad: bool,
    #[command(flatten)]
    jobs: Jobs,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, hide = true)]
    inject_sign_flip: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    scenes: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 320)]
    width: usize,
    #[arg(long, default_value_t = 240)]
    height: usize,
    /// Focal length in pixels, both axes.
    #[arg(long, default_value_t = 260.0)]
    focal: f64,
    /// Predictions are ground truth times this factor.
    #[arg(long, default_value_t = 1.0)]
    pred_scale: f64,
    /// Log-space noise on predictions; also writes oracle uncertainty files.
    #[arg(long, default_value_t = 0.0)]
    pred_noise: f64,
    #[arg(long, default_value_t = 20.0)]
    max_depth: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "64")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1024")]
    counts: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,8")]
    threads: Vec<usize>,
    /// Side of the square test image.
    #[arg(long, default_value_t = 1024)]
    side: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Parse { .. } | Error::Field { .. } | Error::Png(_) => EXIT_DATA,
        Error::Domain(_) | Error::Degenerate(_) => EXIT_NUMERIC,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.cmd {
        Command::Eval(a) => eval::run(a),
        Command::Loss(a) => loss::run(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench::run(a),
    }
}

fn gradcheck(a: GradcheckArgs) -> Result<u8, Error> {
    use metricdepth_core::gradcheck::{run_gradcheck, GradcheckConfig, GRADCHECK_HEADER};
    let rows = run_gradcheck(&GradcheckConfig {
        seed: a.seed,
        tol: a.tol,
        step: a.step,
        instances: a.instances,
        inject_sign_flip: a.inject_sign_flip,
    })?;
    println!("{GRADCHECK_HEADER}");
    for r in &rows {
        println!("{}", r.to_tsv());
    }
    Ok(if rows.iter().all(|r| r.passed) { 0 } else { EXIT_NUMERIC })
}

fn synth(a: SynthArgs) -> Result<u8, Error> {
    use metricdepth_core::synth::{generate_dataset, DatasetOptions};
    use metricdepth_core::Intrinsics;
    let camera = Intrinsics::new(
        a.focal,
        a.focal,
        a.width as f64 / 2.0,
        a.height as f64 / 2.0,
        a.width,
        a.height,
    )?;
    let m = generate_dataset(
        &a.out,
        &DatasetOptions {
            scenes: a.scenes,
            seed: a.seed,
            camera,
            pred_scale: a.pred_scale,
            pred_noise: a.pred_noise,
            max_depth: a.max_depth,
        },
    )?;
    println!(
        "wrote {} scenes and {}",
        m.records.len(),
        a.out.join("manifest.tsv").display()
    );
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}
