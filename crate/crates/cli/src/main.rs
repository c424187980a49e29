//! `hawkes`: simulate, ingest, fit, test and compare Hawkes models.
//!
//! Exit status: 0 on success, 1 on domain or I/O failures, 2 on usage
//! errors (bad flags, missing input files).

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "hawkes", version, about = "Hawkes process simulation, calibration and diagnostics")]
struct Cli {
    /// Global seed (default 0); each task derives its own sub-seed from it
    /// and a task label. For `simulate` it replaces the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to all cores).
    #[arg(long, env = "HAWKES_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a series from a JSON SimConfig and write it as CSV.
    Simulate(SimulateArgs),
    /// Turn time-sliced trade records into per-window event CSVs.
    Ingest(IngestArgs),
    /// Fit one kernel family to an event CSV.
    Fit(FitArgs),
    /// Goodness-of-fit tests on the rescaled durations of a fit.
    Gof(GofArgs),
    /// Compare kernel families across windows (AIC, Akaike weights).
    Compare(CompareArgs),
    /// Resolution-degradation study on simulated two-exponential data.
    ResolutionStudy(StudyArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// SimConfig JSON: {"kernel", "baseline", "horizon", "seed"}.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SideArg {
    #[value(name = "B")]
    Buy,
    #[value(name = "S")]
    Sell,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WindowArg {
    Hourly,
    Daily,
    TwoDay,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// CSV with columns slice_start_s,side,v_report_mm,v_total_mm.
    #[arg(long)]
    slices: PathBuf,
    #[arg(long, value_enum, default_value = "B")]
    side: SideArg,
    /// Calendar date of time zero (YYYY-MM-DD).
    #[arg(long)]
    start_date: chrono::NaiveDate,
    #[arg(long, value_enum, default_value = "hourly")]
    window: WindowArg,
    /// Windows need more than this many events.
    #[arg(long, default_value_t = 200)]
    min_events: usize,
    /// End of the observation period in seconds (default: last slice,
    /// rounded up to a whole day).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineArg {
    Constant,
    Pwl,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SharingArg {
    PerDay,
    Shared,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "constant")]
    baseline: BaselineArg,
    /// Knot sharing across days for the piecewise-linear baseline.
    #[arg(long, value_enum, default_value = "per-day")]
    knot_sharing: SharingArg,
    /// Multi-start count.
    #[arg(long, default_value_t = hawkes_core::estimator::DEFAULT_STARTS)]
    starts: usize,
    /// Minimum events required to fit.
    #[arg(long, default_value_t = hawkes_core::estimator::DEFAULT_MIN_EVENTS)]
    min_events: usize,
    /// Geometric spacing m of the power-law families.
    #[arg(long, default_value_t = hawkes_core::KernelFamily::DEFAULT_SPACING)]
    spacing: f64,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    events: PathBuf,
    /// Kernel family: expM, plM, hbbM or plxM (e.g. exp2, hbb15).
    #[arg(long)]
    family: String,
    #[command(flatten)]
    model: ModelArgs,
    /// FitResult JSON destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GofArgs {
    #[arg(long)]
    events: PathBuf,
    /// FitResult JSON produced by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Ljung-Box lag count h (lags 2..=h+1).
    #[arg(long, default_value_t = hawkes_core::gof::DEFAULT_LB_LAGS)]
    lags: usize,
    #[arg(long)]
    out: PathBuf,
    /// Optional QQ-plot CSV (theoretical,empirical).
    #[arg(long)]
    qq: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Existing grid: `<grid>/<window>/<kernel>.json` GridCell files.
    #[arg(long, conflicts_with = "windows", required_unless_present = "windows")]
    grid: Option<PathBuf>,
    /// Directory of window event CSVs to fit with every kernel.
    #[arg(long)]
    windows: Option<PathBuf>,
    /// Comparison set in tie-break order, comma separated.
    #[arg(long, value_delimiter = ',')]
    kernels: Vec<String>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = hawkes_core::gof::DEFAULT_LB_LAGS)]
    lags: usize,
    /// Table CSV destination; `.txt` and `.json` siblings are also written.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// Optional ResolutionStudyConfig JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Runs per grid point.
    #[arg(long)]
    runs: Option<usize>,
    /// Simulated tau1 values in seconds, comma separated.
    #[arg(long, value_delimiter = ',')]
    tau1: Vec<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    starts: Option<usize>,
    /// Skip the exp(3) spurious-timescale refits.
    #[arg(long)]
    no_spurious_check: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
