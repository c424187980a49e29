use std::fmt;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use hawkes_core::baseline::SECONDS_PER_DAY;
use hawkes_core::estimator::{fit, BaselineKind, FitResult, FitSpec};
use hawkes_core::experiments::{run_resolution_study, ResolutionStudyConfig};
use hawkes_core::gof::{qq_points, GofReport};
use hawkes_core::ingest::{self, Calendar, Side, WindowKind, WindowSpec, SLICE_WIDTH};
use hawkes_core::modelsel::{compare_windows, GridCell};
use hawkes_core::seeds::sub_seed;
use hawkes_core::{rescaled_durations, simulate, EventSeries, KernelFamily, KnotSharing, SimConfig};

use crate::output::{describe_run, write_atomic, write_json};
use crate::{
    BaselineArg, Cli, Command, CompareArgs, FitArgs, GofArgs, IngestArgs, ModelArgs, SharingArg, SideArg, SimulateArgs,
    StudyArgs, WindowArg,
};

/// Errors that map to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("input file not found: {}", path.display())))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    require_file(path)?;
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn read_events(path: &Path) -> Result<EventSeries> {
    require_file(path)?;
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    EventSeries::read_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn events_csv(events: &EventSeries) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    events.write_csv(&mut buf)?;
    Ok(buf)
}

fn with_extension_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(a, cli.seed),
        Command::Ingest(a) => ingest_cmd(a, seed),
        Command::Fit(a) => fit_cmd(a, seed),
        Command::Gof(a) => gof_cmd(a),
        Command::Compare(a) => compare_cmd(a, seed),
        Command::ResolutionStudy(a) => study_cmd(a, cli.seed),
    }
}

fn simulate_cmd(a: &SimulateArgs, seed: Option<u64>) -> Result<()> {
    let mut config: SimConfig = read_json(&a.config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let events = simulate(&config)?;
    write_atomic(&a.out, &events_csv(&events)?)?;
    describe_run(&a.out, "simulate", &config)?;
    println!("simulated {} events on [0, {}] -> {}", events.len(), events.horizon(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct IngestConfig<'a> {
    slices: &'a Path,
    side: Side,
    start_date: chrono::NaiveDate,
    window: WindowKind,
    min_events: usize,
    horizon: f64,
    slice_width: f64,
    seed: u64,
    randomize_seed: u64,
}

#[derive(Serialize)]
struct WindowIndex {
    label: String,
    start: f64,
    horizon: f64,
    n_events: usize,
    file: String,
}

fn ingest_cmd(a: &IngestArgs, seed: u64) -> Result<()> {
    require_file(&a.slices)?;
    let f = File::open(&a.slices).with_context(|| format!("opening {}", a.slices.display()))?;
    let records = ingest::parse_slices(BufReader::new(f))?;
    let side = match a.side {
        SideArg::Buy => Side::Buy,
        SideArg::Sell => Side::Sell,
    };
    let counts = ingest::slice_counts(&records, side)?;
    let horizon = match a.horizon {
        Some(h) => h,
        None => {
            let last = records.last().map_or(0.0, |r| r.slice_start_s + SLICE_WIDTH);
            (last / SECONDS_PER_DAY).ceil().max(1.0) * SECONDS_PER_DAY
        }
    };
    let randomize_seed = sub_seed(seed, "ingest/randomize");
    let events = ingest::randomize_timestamps(&counts, SLICE_WIDTH, horizon, randomize_seed)?;
    let kind = match a.window {
        WindowArg::Hourly => WindowKind::Hourly,
        WindowArg::Daily => WindowKind::Daily,
        WindowArg::TwoDay => WindowKind::TwoDay,
    };
    let spec = WindowSpec {
        kind,
        min_events: a.min_events,
    };
    let windows = ingest::make_windows(&events, &Calendar { start_date: a.start_date }, &spec)?;
    let mut index = Vec::with_capacity(windows.len());
    for w in &windows {
        let file = format!("{}.csv", w.label);
        write_atomic(&a.out_dir.join(&file), &events_csv(&w.events)?)?;
        index.push(WindowIndex {
            label: w.label.clone(),
            start: w.start,
            horizon: w.events.horizon(),
            n_events: w.events.len(),
            file,
        });
    }
    let index_path = a.out_dir.join("windows.json");
    write_json(&index_path, &index)?;
    describe_run(
        &index_path,
        "ingest",
        &IngestConfig {
            slices: &a.slices,
            side,
            start_date: a.start_date,
            window: kind,
            min_events: a.min_events,
            horizon,
            slice_width: SLICE_WIDTH,
            seed,
            randomize_seed,
        },
    )?;
    println!(
        "{} records -> {} events -> {} windows in {}",
        records.len(),
        events.len(),
        windows.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn fit_spec(family: &str, m: &ModelArgs) -> Result<FitSpec> {
    let fam: KernelFamily = family.parse().map_err(|e| usage(format!("bad kernel family {family:?}: {e}")))?;
    let fam = match fam {
        KernelFamily::PowerLaw { .. } => fam.with_spacing(m.spacing),
        other => other,
    };
    let baseline = match m.baseline {
        BaselineArg::Constant => BaselineKind::Constant,
        BaselineArg::Pwl => BaselineKind::Pwl {
            sharing: match m.knot_sharing {
                SharingArg::PerDay => KnotSharing::PerDay,
                SharingArg::Shared => KnotSharing::Shared,
            },
        },
    };
    Ok(FitSpec::new(fam, baseline).with_starts(m.starts).with_min_events(m.min_events))
}

#[derive(Serialize)]
struct FitConfig<'a> {
    events: &'a Path,
    spec: &'a FitSpec,
    seed: u64,
    fit_seed: u64,
}

fn fit_cmd(a: &FitArgs, seed: u64) -> Result<()> {
    let events = read_events(&a.events)?;
    let spec = fit_spec(&a.family, &a.model)?;
    let fit_seed = sub_seed(seed, &format!("fit/{}", a.family));
    let result = fit(&events, &spec, fit_seed)?;
    write_json(&a.out, &result)?;
    describe_run(
        &a.out,
        "fit",
        &FitConfig {
            events: &a.events,
            spec: &spec,
            seed,
            fit_seed,
        },
    )?;
    println!(
        "{}: logL = {:.6}, branching ratio = {:.4}, {} evaluations -> {}",
        a.family,
        result.log_lik,
        result.branching_ratio,
        result.n_function_evals,
        a.out.display()
    );
    for w in &result.warnings {
        log::warn!("{w}");
    }
    Ok(())
}

fn gof_for(events: &EventSeries, fit: &FitResult, lags: usize) -> Result<(GofReport, Vec<f64>)> {
    let thetas = rescaled_durations(events, &fit.kernel, &fit.baseline)?.into_vec();
    Ok((GofReport::run(&thetas, lags)?, thetas))
}

#[derive(Serialize)]
struct GofConfig<'a> {
    events: &'a Path,
    fit: &'a Path,
    lags: usize,
}

fn gof_cmd(a: &GofArgs) -> Result<()> {
    let events = read_events(&a.events)?;
    let fit: FitResult = read_json(&a.fit)?;
    let (report, thetas) = gof_for(&events, &fit, a.lags)?;
    write_json(&a.out, &report)?;
    if let Some(qq) = &a.qq {
        let mut text = String::from("theoretical,empirical\n");
        for (t, e) in qq_points(&thetas) {
            text.push_str(&format!("{t},{e}\n"));
        }
        write_atomic(qq, text.as_bytes())?;
    }
    describe_run(
        &a.out,
        "gof",
        &GofConfig {
            events: &a.events,
            fit: &a.fit,
            lags: a.lags,
        },
    )?;
    println!(
        "pKS = {:.4}, pLB = {:.4}, pED = {:.4} -> {}",
        report.ks.p_value,
        report.lb.p_value,
        report.ed.p_value,
        a.out.display()
    );
    Ok(())
}

fn sorted_entries(dir: &Path, want_dir: bool, ext: Option<&str>) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(usage(format!("input directory not found: {}", dir.display())));
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = entry?.path();
        let keep = if want_dir {
            p.is_dir()
        } else {
            p.is_file() && ext.is_none_or(|e| p.extension().is_some_and(|x| x == e))
        };
        if keep {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn read_grid(dir: &Path) -> Result<Vec<GridCell>> {
    let mut cells = Vec::new();
    for wdir in sorted_entries(dir, true, None)? {
        for file in sorted_entries(&wdir, false, Some("json"))? {
            let cell: GridCell = read_json(&file)?;
            if cell.window != stem(&wdir) || cell.kernel != stem(&file) {
                bail!("{} holds cell ({}, {})", file.display(), cell.window, cell.kernel);
            }
            cells.push(cell);
        }
    }
    Ok(cells)
}

/// Fits every (window, kernel) pair; windows where any kernel fails are
/// dropped from the grid with a warning.
fn fit_grid(a: &CompareArgs, dir: &Path, seed: u64) -> Result<(Vec<GridCell>, Vec<String>)> {
    let files = sorted_entries(dir, false, Some("csv"))?;
    let windows: Vec<(String, EventSeries)> = files
        .iter()
        .map(|f| Ok((stem(f), read_events(f)?)))
        .collect::<Result<_>>()?;
    let specs: Vec<FitSpec> = a.kernels.iter().map(|k| fit_spec(k, &a.model)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..windows.len())
        .flat_map(|w| (0..specs.len()).map(move |k| (w, k)))
        .collect();
    let results: Vec<Option<GridCell>> = jobs
        .par_iter()
        .map(|&(w, k)| {
            let (label, events) = &windows[w];
            let kernel = &a.kernels[k];
            let cell_seed = sub_seed(seed, &format!("fit/{label}/{kernel}"));
            let outcome = fit(events, &specs[k], cell_seed).map(|f| {
                let gof = gof_for(events, &f, a.lags).map(|g| g.0).ok();
                GridCell {
                    window: label.clone(),
                    kernel: kernel.clone(),
                    fit: f,
                    gof,
                }
            });
            match outcome {
                Ok(c) => Some(c),
                Err(e) => {
                    log::warn!("window {label}, kernel {kernel}: {e:#}");
                    None
                }
            }
        })
        .collect();
    let mut cells = Vec::new();
    let mut dropped = Vec::new();
    for (w, chunk) in results.chunks(specs.len()).enumerate() {
        if chunk.iter().all(Option::is_some) {
            cells.extend(chunk.iter().flatten().cloned());
        } else {
            dropped.push(windows[w].0.clone());
        }
    }
    Ok((cells, dropped))
}

#[derive(Serialize)]
struct CompareConfig<'a> {
    grid: Option<&'a Path>,
    windows: Option<&'a Path>,
    kernels: &'a [String],
    baseline: Option<BaselineKind>,
    starts: usize,
    lags: usize,
    seed: u64,
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    table: &'a hawkes_core::modelsel::ComparisonTable,
    dropped_windows: &'a [String],
}

fn compare_cmd(a: &CompareArgs, seed: u64) -> Result<()> {
    let (cells, kernels, dropped) = match (&a.grid, &a.windows) {
        (Some(grid), _) => {
            let cells = read_grid(grid)?;
            let kernels = if a.kernels.is_empty() {
                let mut k: Vec<String> = cells.iter().map(|c| c.kernel.clone()).collect();
                k.sort();
                k.dedup();
                k
            } else {
                a.kernels.clone()
            };
            (cells, kernels, Vec::new())
        }
        (None, Some(dir)) => {
            if a.kernels.is_empty() {
                return Err(usage("--kernels is required with --windows"));
            }
            let (cells, dropped) = fit_grid(a, dir, seed)?;
            let grid_dir = with_extension_suffix(&a.out, ".grid");
            for c in &cells {
                write_json(&grid_dir.join(&c.window).join(format!("{}.json", c.kernel)), c)?;
            }
            (cells, a.kernels.clone(), dropped)
        }
        (None, None) => return Err(usage("one of --grid or --windows is required")),
    };
    if kernels.is_empty() {
        bail!("no kernels found in the grid");
    }
    let table = compare_windows(&cells, &kernels)?;
    write_atomic(&a.out, table.to_csv().as_bytes())?;
    write_atomic(&with_extension_suffix(&a.out, ".txt"), table.to_text().as_bytes())?;
    write_json(
        &with_extension_suffix(&a.out, ".json"),
        &CompareOutput {
            table: &table,
            dropped_windows: &dropped,
        },
    )?;
    let baseline = a.windows.as_ref().map(|_| fit_spec(&kernels[0], &a.model)).transpose()?.map(|s| s.baseline);
    describe_run(
        &a.out,
        "compare",
        &CompareConfig {
            grid: a.grid.as_deref(),
            windows: a.windows.as_deref(),
            kernels: &kernels,
            baseline,
            starts: a.model.starts,
            lags: a.lags,
            seed,
        },
    )?;
    print!("{}", table.to_text());
    if !dropped.is_empty() {
        println!("dropped {} incomplete windows", dropped.len());
    }
    Ok(())
}

fn study_cmd(a: &StudyArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg: ResolutionStudyConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => ResolutionStudyConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = a.runs {
        cfg.runs_per_point = r;
    }
    if !a.tau1.is_empty() {
        cfg.tau1_grid = a.tau1.clone();
    }
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    if let Some(s) = a.starts {
        cfg.n_starts = s;
    }
    if a.no_spurious_check {
        cfg.spurious_check = false;
    }
    let report = run_resolution_study(&cfg)?;
    let csv_path = a.out_dir.join("study.csv");
    write_atomic(&csv_path, report.to_csv().as_bytes())?;
    write_json(&a.out_dir.join("study.json"), &report)?;
    describe_run(&csv_path, "resolution-study", &cfg)?;
    print!("{}", report.to_csv());
    Ok(())
}
