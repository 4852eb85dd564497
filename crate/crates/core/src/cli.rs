//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical degeneracy, 4 internal.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::{invalid, Error, Result};
use crate::inference::{bootstrap_bands, BandResult, BandSpec};
use crate::kernels::Kernel;
use crate::localreg::{
    fit_local_2d, linspace, product_grid, Dataset1D, Dataset2D, Degree, FitResult, FitSpec2D,
    DEFAULT_GRID_SIZE,
};
use crate::simlab::{
    run_experiment, run_experiment_2d, ErrorModel, Experiment2DConfig, ExperimentConfig,
    SimReport, TargetFunction,
};
use crate::tuning::{
    estimate_p_k, estimate_p_q, select_h2, tune, H2Mode, PGrid, TuneOptions, CONVERSION_P_FLOOR,
};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// Default points per axis for two-dimensional fit grids.
pub const DEFAULT_GRID_SIZE_2D: usize = 21;

#[derive(Debug, Parser)]
#[command(name = "lpsmooth", version, about = "Local Lp-norm polynomial regression")]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "LPSMOOTH_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tune and fit a curve (or surface) to `x,y` (or `x1,x2,y`) data.
    Fit(FitArgs),
    /// Estimate the error shape from pilot residuals.
    EstimateP(EstimateArgs),
    /// Select the least-squares bandwidth and its Lp conversion.
    Bandwidth(EstimateArgs),
    /// Fit with bootstrap confidence bands.
    Bands(FitArgs),
    /// Run Monte-Carlo experiments.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum H2ModeArg {
    Plugin,
    Cv,
}

impl From<H2ModeArg> for H2Mode {
    fn from(m: H2ModeArg) -> Self {
        match m {
            H2ModeArg::Plugin => H2Mode::Plugin,
            H2ModeArg::Cv => H2Mode::Cv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeArg {
    Constant,
    Linear,
}

impl From<DegreeArg> for Degree {
    fn from(d: DegreeArg) -> Self {
        match d {
            DegreeArg::Constant => Degree::Constant,
            DegreeArg::Linear => Degree::Linear,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PGridArgs {
    #[arg(long, default_value_t = 1.0)]
    pub p_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub p_max: f64,
    #[arg(long, default_value_t = 0.25)]
    pub p_step: f64,
}

impl PGridArgs {
    fn grid(&self) -> Result<PGrid> {
        PGrid::new(self.p_min, self.p_max, self.p_step)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Fit CSV; the JSON sidecar goes next to it unless `--sidecar` is given.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Use this shape instead of estimating it.
    #[arg(long)]
    pub p: Option<f64>,
    /// Use this bandwidth for the Lp fit (required for two-dimensional data).
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long, value_enum, default_value_t = DegreeArg::Linear)]
    pub degree: DegreeArg,
    #[arg(long, value_enum, default_value_t = H2ModeArg::Plugin)]
    pub h2_mode: H2ModeArg,
    #[command(flatten)]
    pub p_grid: PGridArgs,
    /// Evaluation grid size (per axis for two-dimensional data).
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Estimate the shape from residuals at interior design points only.
    #[arg(long)]
    pub interior_residuals: bool,
    #[arg(long, default_value = "gaussian")]
    pub kernel: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Add bootstrap band columns.
    #[arg(long)]
    pub bands: bool,
    #[arg(long, default_value_t = 0.025)]
    pub alpha: f64,
    #[arg(long, default_value_t = 500)]
    pub boot_reps: usize,
    /// Number of pilot bandwidths for the bias-reduced residuals.
    #[arg(long, default_value_t = 10)]
    pub band_grid: usize,
    /// Also write a long-format `series,x,value` CSV here.
    #[arg(long)]
    pub emit_plot_data: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// JSON result file.
    #[arg(long)]
    pub output: PathBuf,
    /// Shape for the bandwidth conversion instead of the estimate.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, value_enum, default_value_t = H2ModeArg::Plugin)]
    pub h2_mode: H2ModeArg,
    #[command(flatten)]
    pub p_grid: PGridArgs,
    #[arg(long)]
    pub interior_residuals: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Target function ids (1-4) for one-dimensional experiments.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub function: Vec<u8>,
    /// Error models: uniform, triangular, bimodal:<alpha>, ged:<scale>:<shape>.
    #[arg(long, value_delimiter = ',', default_value = "uniform")]
    pub errors: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = H2ModeArg::Plugin)]
    pub h2_mode: H2ModeArg,
    #[command(flatten)]
    pub p_grid: PGridArgs,
    /// Run the two-dimensional experiment instead.
    #[arg(long)]
    pub two_d: bool,
    /// GED shapes for the two-dimensional experiment.
    #[arg(long, value_delimiter = ',', default_value = "1.1,2,5,10")]
    pub shapes: Vec<f64>,
    /// GED scale for the two-dimensional experiment.
    #[arg(long, default_value_t = 0.2)]
    pub scale: f64,
    /// Bandwidth for the two-dimensional experiment.
    #[arg(long, default_value_t = 0.12)]
    pub bandwidth: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "simulation")]
    pub stem: String,
    /// Also write a long-format `function,error_model,n,metric,value` CSV here.
    #[arg(long)]
    pub emit_plot_data: Option<PathBuf>,
}

/// Maps an error to its process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Degenerate(_) | Error::ReplicateFailures { .. } => EXIT_DEGENERATE,
        _ => EXIT_INPUT,
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return EXIT_INTERNAL;
        }
    }
    match std::panic::catch_unwind(|| run(&cli.command)) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(_) => EXIT_INTERNAL,
    }
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Fit(a) => cmd_fit(a, a.bands),
        Command::Bands(a) => cmd_fit(a, true),
        Command::EstimateP(a) => cmd_estimate_p(a),
        Command::Bandwidth(a) => cmd_bandwidth(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

pub enum InputData {
    One(Dataset1D),
    Two(Dataset2D),
}

/// Reads `x,y` or `x1,x2,y` CSV. Errors name the offending line.
pub fn read_input(path: &Path) -> Result<InputData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| invalid(format!("{}: line 1: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let width = match headers.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y"] => 2,
        ["x1", "x2", "y"] => 3,
        _ => {
            return Err(invalid(format!(
                "{}: line 1: header must be 'x,y' or 'x1,x2,y', got '{}'",
                path.display(),
                headers.join(",")
            )))
        }
    };
    let mut cols = vec![Vec::new(); width];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            invalid(format!("{}: line {line}: {e}", path.display()))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != width {
            return Err(invalid(format!(
                "{}: line {line}: expected {width} fields, found {}",
                path.display(),
                record.len()
            )));
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                invalid(format!("{}: line {line}: '{field}' is not a number", path.display()))
            })?;
            if !v.is_finite() {
                return Err(invalid(format!("{}: line {line}: non-finite value", path.display())));
            }
            cols[k].push(v);
        }
    }
    let mut it = cols.into_iter();
    if width == 2 {
        let (x, y) = (it.next().unwrap(), it.next().unwrap());
        Ok(InputData::One(Dataset1D::new(x, y)?))
    } else {
        let (x1, x2, y) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
        Ok(InputData::Two(Dataset2D::new(x1, x2, y)?))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(w.flush()?)
}

fn sidecar(args: &FitArgs) -> PathBuf {
    args.sidecar
        .clone()
        .unwrap_or_else(|| args.output.with_extension("json"))
}

fn cmd_fit(args: &FitArgs, with_bands: bool) -> Result<()> {
    let kernel: Kernel = args.kernel.parse()?;
    let band_spec = if with_bands {
        Some(BandSpec::new(args.alpha, args.boot_reps, args.seed)?.with_bandwidth_grid_size(args.band_grid)?)
    } else {
        None
    };
    let config = json!({ "command": if with_bands { "bands" } else { "fit" }, "args": args });
    match read_input(&args.input)? {
        InputData::One(data) => fit_1d(&data, args, kernel, band_spec.as_ref(), config),
        InputData::Two(data) => {
            if with_bands {
                return Err(invalid("bands are only available for one-dimensional data"));
            }
            fit_2d(&data, args, kernel, config)
        }
    }
}

fn fit_1d(
    data: &Dataset1D,
    args: &FitArgs,
    kernel: Kernel,
    band: Option<&BandSpec>,
    config: serde_json::Value,
) -> Result<()> {
    let grid_size = args.grid_size.unwrap_or(DEFAULT_GRID_SIZE);
    let options = TuneOptions {
        degree: args.degree.into(),
        kernel,
        h2_mode: args.h2_mode.into(),
        p_grid: args.p_grid.grid()?,
        p_override: args.p,
        h_override: args.h,
        interior_residuals_only: args.interior_residuals,
        grid: Some(data.default_grid(grid_size)),
    };
    let tuned = tune(data, &options, None)?;
    let bands = band
        .map(|b| bootstrap_bands(data, &tuned.llp_spec, b))
        .transpose()?;
    write_fit_csv(&args.output, &tuned.llp, bands.as_ref())?;
    if let Some(path) = &args.emit_plot_data {
        write_plot_data(path, data, &tuned.llp, bands.as_ref())?;
    }
    let fit = &tuned.llp;
    let sidecar_value = json!({
        "p_hat": tuned.p_hat,
        "p_source": tuned.p_source,
        "h2": tuned.h2,
        "hp": tuned.llp_spec.bandwidth,
        "conversion_p": tuned.p_hat.max(CONVERSION_P_FLOOR),
        "kernel": kernel.name(),
        "seed": args.seed,
        "diagnostics": {
            "n": data.len(),
            "grid_points": fit.grid.len(),
            "degenerate_points": fit.degenerate_count(),
            "non_converged_points": fit.diagnostics.iter().filter(|d| !d.converged).count(),
            "dropped_bootstrap_replicates": bands.as_ref().map(|b| b.dropped_replicates),
        },
        "config": config,
    });
    write_json(&sidecar(args), &sidecar_value)
}

fn write_fit_csv(path: &Path, fit: &FitResult, bands: Option<&BandResult>) -> Result<()> {
    let mut w = create(path)?;
    write!(w, "x,m_hat")?;
    if fit.m1_hat.is_some() {
        write!(w, ",m1_hat")?;
    }
    write!(w, ",interior")?;
    if bands.is_some() {
        write!(w, ",lower,upper")?;
    }
    writeln!(w)?;
    for k in 0..fit.grid.len() {
        write!(w, "{},{}", fit.grid[k], fit.m_hat[k])?;
        if let Some(m1) = &fit.m1_hat {
            write!(w, ",{}", m1[k])?;
        }
        write!(w, ",{}", fit.interior_mask[k])?;
        if let Some(b) = bands {
            write!(w, ",{},{}", b.lower[k], b.upper[k])?;
        }
        writeln!(w)?;
    }
    Ok(w.flush()?)
}

fn write_plot_data(
    path: &Path,
    data: &Dataset1D,
    fit: &FitResult,
    bands: Option<&BandResult>,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "series,x,value")?;
    for (x, y) in data.x().iter().zip(data.y()) {
        writeln!(w, "data,{x},{y}")?;
    }
    let mut series = vec![("m_hat", &fit.m_hat)];
    if let Some(b) = bands {
        series.push(("lower", &b.lower));
        series.push(("upper", &b.upper));
    }
    for (name, values) in series {
        for (x, v) in fit.grid.iter().zip(values) {
            writeln!(w, "{name},{x},{v}")?;
        }
    }
    Ok(w.flush()?)
}

fn fit_2d(data: &Dataset2D, args: &FitArgs, kernel: Kernel, config: serde_json::Value) -> Result<()> {
    let h = args
        .h
        .ok_or_else(|| invalid("two-dimensional fits need an explicit --h"))?;
    let size = args.grid_size.unwrap_or(DEFAULT_GRID_SIZE_2D);
    let axis = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        linspace(lo, hi, size)
    };
    let grid = product_grid(&axis(data.x1()), &axis(data.x2()));
    let (p, p_source) = match args.p {
        Some(p) => (p, "override"),
        None => {
            let points: Vec<[f64; 2]> = data.x1().iter().zip(data.x2()).map(|(a, b)| [*a, *b]).collect();
            let pilot = FitSpec2D::new(2.0, h, points)?;
            let fitted = fit_local_2d(data, &pilot)?.m_hat;
            let res: Vec<f64> = data.y().iter().zip(&fitted).map(|(y, m)| y - m).collect();
            match estimate_p_q(&res, &args.p_grid.grid()?) {
                Ok(q) => (q.p_hat, "q_method"),
                Err(Error::Degenerate(_)) => (2.0, "degenerate_fallback"),
                Err(e) => return Err(e),
            }
        }
    };
    let mut spec = FitSpec2D::new(p, h, grid)?;
    spec.kernel = kernel;
    let fit = fit_local_2d(data, &spec)?;
    let mut w = create(&args.output)?;
    writeln!(w, "x1,x2,m_hat")?;
    for (g, m) in fit.grid.iter().zip(&fit.m_hat) {
        writeln!(w, "{},{},{}", g[0], g[1], m)?;
    }
    w.flush()?;
    let degenerate = fit
        .diagnostics
        .iter()
        .filter(|d| d.condition == crate::lpsolve::ConditionFlag::Degenerate)
        .count();
    write_json(
        &sidecar(args),
        &json!({
            "p_hat": p,
            "p_source": p_source,
            "h2": serde_json::Value::Null,
            "hp": h,
            "kernel": kernel.name(),
            "seed": args.seed,
            "diagnostics": { "n": data.len(), "grid_points": fit.grid.len(), "degenerate_points": degenerate },
            "config": config,
        }),
    )
}

fn read_1d(path: &Path) -> Result<Dataset1D> {
    match read_input(path)? {
        InputData::One(d) => Ok(d),
        InputData::Two(_) => Err(invalid("this command needs 'x,y' data")),
    }
}

fn cmd_estimate_p(args: &EstimateArgs) -> Result<()> {
    let data = read_1d(&args.input)?;
    let options = TuneOptions {
        h2_mode: args.h2_mode.into(),
        p_grid: args.p_grid.grid()?,
        interior_residuals_only: args.interior_residuals,
        ..TuneOptions::default()
    };
    let tuned = tune(&data, &options, None)?;
    let scores: Vec<_> = options
        .p_grid
        .candidates()
        .iter()
        .zip(tuned.q_scores.iter().flatten())
        .map(|(p, s)| json!({ "p": p, "score": s }))
        .collect();
    write_json(
        &args.output,
        &json!({
            "p_hat": tuned.p_hat,
            "p_source": tuned.p_source,
            "p_hat_kurtosis": estimate_p_k(&tuned.pilot_residuals).ok(),
            "h2": tuned.h2,
            "scores": scores,
            "config": { "command": "estimate-p", "args": args },
        }),
    )
}

fn cmd_bandwidth(args: &EstimateArgs) -> Result<()> {
    let data = read_1d(&args.input)?;
    let options = TuneOptions {
        h2_mode: args.h2_mode.into(),
        p_grid: args.p_grid.grid()?,
        p_override: args.p,
        interior_residuals_only: args.interior_residuals,
        ..TuneOptions::default()
    };
    let tuned = if args.p.is_none() && data.len() < 8 {
        let h2 = select_h2(&data, options.h2_mode)?;
        return write_json(&args.output, &json!({ "h2": h2, "config": args }));
    } else {
        tune(&data, &options, None)?
    };
    write_json(
        &args.output,
        &json!({
            "h2": tuned.h2,
            "p": tuned.p_hat,
            "p_source": tuned.p_source,
            "conversion_p": tuned.bandwidth.p_used,
            "hp": tuned.llp_spec.bandwidth,
            "moment_estimates": tuned.bandwidth.moment_estimates,
            "config": { "command": "bandwidth", "args": args },
        }),
    )
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut report = SimReport::new(
        args.seed,
        json!({ "command": "simulate", "args": args }),
    );
    if args.two_d {
        let cfg = Experiment2DConfig {
            bandwidth: args.bandwidth,
            ..Experiment2DConfig::default()
        };
        for &n in &args.n {
            report
                .rows_2d
                .extend(run_experiment_2d(args.scale, &args.shapes, n, args.reps, args.seed, &cfg)?);
        }
    } else {
        let functions = args
            .function
            .iter()
            .map(|&id| TargetFunction::from_id(id))
            .collect::<Result<Vec<_>>>()?;
        let models = args
            .errors
            .iter()
            .map(|s| s.parse::<ErrorModel>())
            .collect::<Result<Vec<_>>>()?;
        let cfg = ExperimentConfig {
            h2_mode: args.h2_mode.into(),
            p_grid: args.p_grid.grid()?,
            ..ExperimentConfig::default()
        };
        for f in &functions {
            for m in &models {
                for &n in &args.n {
                    report
                        .rows
                        .push(run_experiment(*f, m, n, args.reps, args.seed, &cfg)?);
                }
            }
        }
    }
    report.write(&args.out_dir, &args.stem)?;
    if let Some(path) = &args.emit_plot_data {
        let mut w = create(path)?;
        writeln!(w, "function,error_model,n,metric,value")?;
        for r in &report.rows {
            for (metric, v) in [
                ("p_hat", r.p_hat),
                ("h2", r.h2),
                ("mse_lls", r.mse_lls),
                ("h_p", r.h_p),
                ("mse_llp", r.mse_llp),
            ] {
                writeln!(w, "{},{},{},{metric},{v}", r.function, r.error_model, r.n)?;
            }
        }
        for r in &report.rows_2d {
            for (metric, v) in [("mse_lls", r.mse_lls), ("mse_llp", r.mse_llp)] {
                writeln!(w, "2d,ged:{}:{},{},{metric},{v}", r.scale, r.p, r.n)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}
