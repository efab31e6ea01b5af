//! Command-line front end: fitting, bandwidth selection, simulation and
//! registration as reproducible, seeded runs.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/configuration error,
//! 4 numerical failure. Progress and warnings go to stderr; machine-readable
//! output goes to the requested file, or to stdout with `--out -`.

#![forbid(unsafe_code)]

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use basecurve::{
    beta_ci, ci_bandwidth_window, cv_select, default_bandwidths, default_param_grid, ingest,
    multi_step_fit, run_mc, Bandwidths, CVConfig, Design, Error as CoreError, FitDocument,
    FitOptions, KernelFamily, LocationScale, McOptions, McResult, SimConfig, SimCurve,
    SpectraPanel,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "basecurve",
    version,
    about = "Location-scale panel fitting with a shared baseline curve",
    propagate_version = true
)]
struct Cli {
    /// Worker threads (default: all cores; RAYON_NUM_THREADS is also honored)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-individual offsets/scales and the shared curve
    Fit(Box<FitArgs>),
    /// Select the bandwidth pair by K-fold cross-validation
    Cv(Box<CvArgs>),
    /// Run the seeded Monte Carlo experiment harness
    Simulate(SimulateArgs),
    /// Interpolate ragged spectra onto a reference m/z grid
    Register(RegisterArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Epanechnikov,
    Triangular,
    Uniform,
}

impl From<KernelArg> for KernelFamily {
    fn from(value: KernelArg) -> Self {
        match value {
            KernelArg::Epanechnikov => KernelFamily::Epanechnikov,
            KernelArg::Triangular => KernelFamily::Triangular,
            KernelArg::Uniform => KernelFamily::Uniform,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Input panel CSV: wide (`mz,<id>,...`) or long (`id,mz,intensity`)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Initial-curve bandwidth
    #[arg(long)]
    h: Option<f64>,
    /// Pooled-curve bandwidth
    #[arg(long = "h-star")]
    h_star: Option<f64>,
    /// Use the rate-based default bandwidths instead of --h/--h-star
    #[arg(long, conflicts_with_all = ["h", "h_star"])]
    auto_bandwidth: bool,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    /// Baseline individual id (default: first id in the file)
    #[arg(long)]
    baseline: Option<String>,
    /// Convergence tolerance on the largest parameter change
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Stop after one parameter/curve pass
    #[arg(long)]
    single_pass: bool,
    /// Also compute per-individual scale confidence intervals at this level
    #[arg(long)]
    ci: Option<f64>,
    /// Output JSON path, or `-` for stdout [default: fit.json]
    #[arg(long)]
    out: Option<String>,
    /// Also write the fitted curve as a two-column CSV
    #[arg(long)]
    curve_csv: Option<PathBuf>,
    #[arg(long)]
    mz_min: Option<f64>,
    #[arg(long)]
    mz_max: Option<f64>,
    /// Replace intensities by ln(1 + v) while reading
    #[arg(long)]
    log_transform: bool,
    /// JSON file supplying defaults for any flag; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Number of folds K (2..=n; K = n is leave-one-out)
    #[arg(long)]
    folds: Option<usize>,
    /// Candidate h values: `lo:hi:step` or a comma list
    #[arg(long = "h-grid")]
    h_grid: Option<String>,
    /// Candidate h_star values: `lo:hi:step` or a comma list
    #[arg(long = "hstar-grid")]
    hstar_grid: Option<String>,
    /// Fold-assignment seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    /// Fit training sets with a single parameter/curve pass
    #[arg(long)]
    single_pass: bool,
    #[arg(long)]
    baseline: Option<String>,
    /// Output JSON path, or `-` for stdout [default: cv.json]
    #[arg(long)]
    out: Option<String>,
    /// Also write the prediction-error matrix (rows h_star, columns h)
    #[arg(long)]
    mspe_csv: Option<PathBuf>,
    #[arg(long)]
    mz_min: Option<f64>,
    #[arg(long)]
    mz_max: Option<f64>,
    #[arg(long)]
    log_transform: bool,
    /// JSON file supplying defaults for any flag; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment description (JSON; see README for the schema)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's replication count
    #[arg(long)]
    reps: Option<usize>,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the CSV tables and summary JSON
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegisterArgs {
    /// Input CSV (long `id,mz,intensity`; wide input passes through)
    #[arg(long)]
    input: PathBuf,
    /// Reference individual id (default: first id in the file)
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    mz_min: Option<f64>,
    #[arg(long)]
    mz_max: Option<f64>,
    #[arg(long)]
    log_transform: bool,
    /// Output panel CSV path, or `-` for stdout
    #[arg(long)]
    out: String,
}

enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidInput(_)
            | CoreError::InvalidFolds { .. }
            | CoreError::Parse { .. }
            | CoreError::NonMonotonic { .. }
            | CoreError::InsufficientOverlap { .. }
            | CoreError::MissingReference { .. }
            | CoreError::Io(_) => CliError::Data(e.to_string()),
            CoreError::EmptyWindow { .. }
            | CoreError::AllZeroWeights
            | CoreError::DegenerateCurve { .. }
            | CoreError::NonFinite { .. }
            | CoreError::OutOfRange { .. }
            | CoreError::AllCellsInvalid => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Fit(args) => run_fit(*args),
        Command::Cv(args) => run_cv(*args),
        Command::Simulate(args) => run_simulate(args),
        Command::Register(args) => run_register(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

// ---------------------------------------------------------------------------
// shared plumbing

fn write_output(path: &str, content: &str) -> Result<(), CliError> {
    if path == "-" {
        io::stdout().write_all(content.as_bytes())?;
    } else {
        fs::write(path, content)?;
    }
    Ok(())
}

fn load_panel(
    path: &Path,
    options: &ingest::IngestOptions,
    baseline: Option<&str>,
) -> Result<SpectraPanel, CliError> {
    let first_line = {
        use io::BufRead;
        let file = fs::File::open(path)?;
        io::BufReader::new(file)
            .lines()
            .next()
            .transpose()?
            .unwrap_or_default()
    };
    let head = first_line
        .split(',')
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase();
    let raw = if head == "id" {
        ingest::read_long_csv(path, options)?
    } else if head == "mz" {
        ingest::read_wide_csv(path, options)?
    } else {
        return Err(CliError::Data(format!(
            "{}: unrecognized header (expected it to start with 'id' or 'mz')",
            path.display()
        )));
    };
    if !raw.shared_grid() {
        eprintln!(
            "note: input grids are ragged; registering {} individuals onto the reference grid",
            raw.n()
        );
    }
    Ok(ingest::panel_from_raw(&raw, baseline)?)
}

fn parse_grid(spec: &str, name: &str) -> Result<Vec<f64>, CliError> {
    let bad = |m: String| CliError::Usage(format!("--{name}: {m}"));
    let values: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("expected lo:hi:step, got '{spec}'")));
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad("bad lo".into()))?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad("bad hi".into()))?;
        let step: f64 = parts[2]
            .trim()
            .parse()
            .map_err(|_| bad("bad step".into()))?;
        if !(step > 0.0 && hi >= lo) {
            return Err(bad("need hi >= lo and step > 0".into()));
        }
        let mut v = Vec::new();
        let mut k = 0usize;
        loop {
            let value = lo + step * k as f64;
            if value > hi + 1e-9 * step {
                break;
            }
            v.push(value);
            k += 1;
        }
        v
    } else {
        spec.split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad value '{p}'")))
            })
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(bad("empty grid".into()));
    }
    Ok(values)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn kernel_from(name: Option<KernelArg>, fallback: Option<&str>) -> Result<KernelFamily, CliError> {
    if let Some(k) = name {
        return Ok(k.into());
    }
    match fallback {
        Some(s) => s
            .parse::<KernelFamily>()
            .map_err(|e| CliError::Data(e.to_string())),
        None => Ok(KernelFamily::Epanechnikov),
    }
}

// ---------------------------------------------------------------------------
// fit

/// File-level defaults for `fit`; any explicit flag takes precedence.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct FitFileConfig {
    input: Option<PathBuf>,
    h: Option<f64>,
    h_star: Option<f64>,
    auto_bandwidth: Option<bool>,
    kernel: Option<String>,
    baseline: Option<String>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    single_pass: Option<bool>,
    ci: Option<f64>,
    out: Option<String>,
    curve_csv: Option<PathBuf>,
    mz_min: Option<f64>,
    mz_max: Option<f64>,
    log_transform: Option<bool>,
}

fn run_fit(args: FitArgs) -> Result<(), CliError> {
    let file: FitFileConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => FitFileConfig::default(),
    };
    let input = args
        .input
        .or(file.input)
        .ok_or_else(|| CliError::Usage("fit: --input is required".into()))?;
    let options = ingest::IngestOptions {
        mz_min: args.mz_min.or(file.mz_min),
        mz_max: args.mz_max.or(file.mz_max),
        log_transform: args.log_transform || file.log_transform.unwrap_or(false),
    };
    let baseline = args.baseline.or(file.baseline);
    let panel = load_panel(&input, &options, baseline.as_deref())?;

    let kernel = kernel_from(args.kernel, file.kernel.as_deref())?.spec();
    let auto = args.auto_bandwidth || file.auto_bandwidth.unwrap_or(false);
    let bandwidths = if auto {
        let bw = default_bandwidths(&panel);
        eprintln!(
            "note: rate-based bandwidths h = {}, h_star = {}",
            bw.h, bw.h_star
        );
        bw
    } else {
        let h = args.h.or(file.h);
        let h_star = args.h_star.or(file.h_star);
        match (h, h_star) {
            (Some(h), Some(h_star)) => Bandwidths::new(h, h_star).map_err(CliError::from)?,
            _ => {
                return Err(CliError::Usage(
                    "fit: provide both --h and --h-star, or --auto-bandwidth".into(),
                ))
            }
        }
    };
    let fit_options = FitOptions {
        tol: args.tol.or(file.tol).unwrap_or(1e-6),
        max_iterations: args.max_iter.or(file.max_iter).unwrap_or(20),
        single_pass: args.single_pass || file.single_pass.unwrap_or(false),
        eval_points: None,
    };
    let fit = multi_step_fit(&panel, &kernel, bandwidths, &fit_options)?;
    eprintln!(
        "fit: {} individuals, {} grid points, {} iteration(s), converged: {}",
        panel.n(),
        fit.curve.len(),
        fit.iterations,
        fit.converged
    );

    let mut document = FitDocument::new(&panel, &fit);
    if let Some(level) = args.ci.or(file.ci) {
        let (lo, hi) = ci_bandwidth_window(&panel);
        if bandwidths.h < lo || bandwidths.h > hi {
            eprintln!(
                "warning: h = {} lies outside [{lo:.6}, {hi:.6}]; interval coverage may \
                 suffer from smoothing bias",
                bandwidths.h
            );
        }
        let mut se = Vec::with_capacity(panel.n());
        let mut ci_lower = Vec::with_capacity(panel.n());
        let mut ci_upper = Vec::with_capacity(panel.n());
        for i in 0..panel.n() {
            if i == panel.baseline_index() {
                se.push(None);
                ci_lower.push(None);
                ci_upper.push(None);
            } else {
                let inf = beta_ci(&panel, &fit, i, level)?;
                se.push(Some(inf.se));
                ci_lower.push(Some(inf.ci_lower));
                ci_upper.push(Some(inf.ci_upper));
            }
        }
        document.ci_level = Some(level);
        document.se = Some(se);
        document.ci_lower = Some(ci_lower);
        document.ci_upper = Some(ci_upper);
    }

    let json =
        serde_json::to_string_pretty(&document).map_err(|e| CliError::Data(e.to_string()))?;
    write_output(
        args.out.or(file.out).as_deref().unwrap_or("fit.json"),
        &(json + "\n"),
    )?;

    if let Some(path) = args.curve_csv.or(file.curve_csv) {
        let mut csv = String::from("x,m_hat\n");
        for (x, v) in fit.curve.eval_points.iter().zip(&fit.curve.values) {
            csv.push_str(&format!("{x},{v}\n"));
        }
        fs::write(path, csv)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// cv

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct CvFileConfig {
    input: Option<PathBuf>,
    folds: Option<usize>,
    h_grid: Option<String>,
    hstar_grid: Option<String>,
    seed: Option<u64>,
    kernel: Option<String>,
    single_pass: Option<bool>,
    baseline: Option<String>,
    out: Option<String>,
    mspe_csv: Option<PathBuf>,
    mz_min: Option<f64>,
    mz_max: Option<f64>,
    log_transform: Option<bool>,
}

#[derive(Serialize)]
struct CvDocument<'a> {
    folds: usize,
    seed: u64,
    single_pass: bool,
    kernel: &'a str,
    h_grid: &'a [f64],
    hstar_grid: &'a [f64],
    selected_h: f64,
    selected_h_star: f64,
    /// Rows indexed by h, columns by h_star; null marks an excluded cell.
    mspe: &'a [Vec<Option<f64>>],
    fold_assignments: &'a [usize],
    failures: &'a [basecurve::bandwidth::CellFailure],
}

fn run_cv(args: CvArgs) -> Result<(), CliError> {
    let file: CvFileConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => CvFileConfig::default(),
    };
    let input = args
        .input
        .or(file.input)
        .ok_or_else(|| CliError::Usage("cv: --input is required".into()))?;
    let folds = args
        .folds
        .or(file.folds)
        .ok_or_else(|| CliError::Usage("cv: --folds is required".into()))?;
    let h_spec = args
        .h_grid
        .or(file.h_grid)
        .ok_or_else(|| CliError::Usage("cv: --h-grid is required".into()))?;
    let hstar_spec = args
        .hstar_grid
        .or(file.hstar_grid)
        .ok_or_else(|| CliError::Usage("cv: --hstar-grid is required".into()))?;

    let options = ingest::IngestOptions {
        mz_min: args.mz_min.or(file.mz_min),
        mz_max: args.mz_max.or(file.mz_max),
        log_transform: args.log_transform || file.log_transform.unwrap_or(false),
    };
    let baseline = args.baseline.or(file.baseline);
    let panel = load_panel(&input, &options, baseline.as_deref())?;
    let kernel = kernel_from(args.kernel, file.kernel.as_deref())?;
    let config = CVConfig {
        folds,
        h_grid: parse_grid(&h_spec, "h-grid")?,
        hstar_grid: parse_grid(&hstar_spec, "hstar-grid")?,
        seed: args.seed.or(file.seed).unwrap_or(42),
        single_pass: args.single_pass || file.single_pass.unwrap_or(false),
    };
    let report = cv_select(&panel, &config, &kernel.spec())?;
    eprintln!(
        "cv: selected h = {}, h_star = {} over a {}x{} grid ({} excluded cell(s))",
        report.selected.h,
        report.selected.h_star,
        config.h_grid.len(),
        config.hstar_grid.len(),
        report.failures.len()
    );

    let document = CvDocument {
        folds: config.folds,
        seed: config.seed,
        single_pass: config.single_pass,
        kernel: kernel.name(),
        h_grid: &report.h_grid,
        hstar_grid: &report.hstar_grid,
        selected_h: report.selected.h,
        selected_h_star: report.selected.h_star,
        mspe: &report.mspe,
        fold_assignments: &report.fold_assignments,
        failures: &report.failures,
    };
    let json =
        serde_json::to_string_pretty(&document).map_err(|e| CliError::Data(e.to_string()))?;
    write_output(
        args.out.or(file.out).as_deref().unwrap_or("cv.json"),
        &(json + "\n"),
    )?;

    if let Some(path) = args.mspe_csv.or(file.mspe_csv) {
        // Rows h_star, columns h.
        let mut csv = String::from("h_star");
        for h in &report.h_grid {
            csv.push_str(&format!(",{h}"));
        }
        csv.push('\n');
        for (j, h_star) in report.hstar_grid.iter().enumerate() {
            csv.push_str(&format!("{h_star}"));
            for i in 0..report.h_grid.len() {
                match report.mspe[i][j] {
                    Some(v) => csv.push_str(&format!(",{v}")),
                    None => csv.push_str(",NA"),
                }
            }
            csv.push('\n');
        }
        fs::write(path, csv)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

/// Experiment description read from `--config`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateSpec {
    n: usize,
    t: usize,
    sigma: f64,
    curve: SimCurve,
    /// True per-individual (alpha, beta); defaults to the cycling grid.
    #[serde(default)]
    params: Option<Vec<LocationScale>>,
    design: Design,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_replications")]
    replications: usize,
    h_grid: Vec<f64>,
    hstar_grid: Vec<f64>,
    /// Bandwidths at which parameter estimates are tabulated
    /// (default: first grid pair).
    #[serde(default)]
    param_h: Option<f64>,
    #[serde(default)]
    param_h_star: Option<f64>,
    #[serde(default)]
    single_pass: bool,
    #[serde(default)]
    kernel: Option<String>,
}

fn default_seed() -> u64 {
    42
}

fn default_replications() -> usize {
    100
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    config: &'a SimulateSpec,
    result: &'a McResult,
}

fn run_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut spec: SimulateSpec = read_json(&args.config)?;
    if let Some(reps) = args.reps {
        spec.replications = reps;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let config = SimConfig {
        n: spec.n,
        t: spec.t,
        sigma: spec.sigma,
        curve: spec.curve.clone(),
        params: spec
            .params
            .clone()
            .unwrap_or_else(|| default_param_grid(spec.n)),
        design: spec.design,
        seed: spec.seed,
        replications: spec.replications,
    };
    let kernel = match &spec.kernel {
        Some(name) => name
            .parse::<KernelFamily>()
            .map_err(|e| CliError::Data(e.to_string()))?,
        None => KernelFamily::Epanechnikov,
    };
    let param_bandwidths = match (spec.param_h, spec.param_h_star) {
        (Some(h), Some(h_star)) => Some(Bandwidths::new(h, h_star).map_err(CliError::from)?),
        (None, None) => None,
        _ => {
            return Err(CliError::Data(
                "config: param_h and param_h_star must be given together".into(),
            ))
        }
    };
    let mc_options = McOptions {
        fit: FitOptions {
            single_pass: spec.single_pass,
            ..FitOptions::default()
        },
        param_bandwidths,
    };
    eprintln!(
        "simulate: n = {}, t = {}, {} replications, {}x{} bandwidth grid",
        config.n,
        config.t,
        config.replications,
        spec.h_grid.len(),
        spec.hstar_grid.len()
    );
    let result = run_mc(
        &config,
        &spec.h_grid,
        &spec.hstar_grid,
        &kernel.spec(),
        &mc_options,
    )?;
    if result.failed_replications > 0 {
        eprintln!(
            "warning: {} of {} replications failed and were excluded",
            result.failed_replications, result.replications_requested
        );
    }

    fs::create_dir_all(&args.out)?;
    let dir = args.out;

    // Per-individual parameter table.
    let mut params_csv = String::from(
        "id,alpha_true,beta_true,alpha_mean,alpha_sd,alpha_rmse,beta_mean,beta_sd,beta_rmse\n",
    );
    for i in 0..config.n {
        params_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            i + 1,
            result.alpha_true[i],
            result.beta_true[i],
            result.alpha_mean[i],
            result.alpha_sd[i],
            result.alpha_rmse[i],
            result.beta_mean[i],
            result.beta_sd[i],
            result.beta_rmse[i],
        ));
    }
    fs::write(dir.join("params.csv"), params_csv)?;

    // Initial-curve error by h.
    let mut initial_csv = String::from("h,mse,se\n");
    for (i, h) in result.h_grid.iter().enumerate() {
        initial_csv.push_str(&format!(
            "{h},{},{}\n",
            result.curve_mse_initial[i], result.curve_mse_initial_se[i]
        ));
    }
    fs::write(dir.join("initial_mse.csv"), initial_csv)?;

    // Updated-curve error matrix: rows h_star, columns h.
    let mut updated_csv = String::from("h_star");
    for h in &result.h_grid {
        updated_csv.push_str(&format!(",{h}"));
    }
    updated_csv.push('\n');
    for (j, h_star) in result.hstar_grid.iter().enumerate() {
        updated_csv.push_str(&format!("{h_star}"));
        for i in 0..result.h_grid.len() {
            updated_csv.push_str(&format!(",{}", result.curve_mse_updated[i][j]));
        }
        updated_csv.push('\n');
    }
    fs::write(dir.join("updated_mse.csv"), updated_csv)?;

    // Known-parameters reference by h_star.
    let mut oracle_csv = String::from("h_star,mse,se\n");
    for (j, h_star) in result.hstar_grid.iter().enumerate() {
        oracle_csv.push_str(&format!(
            "{h_star},{},{}\n",
            result.oracle_mse[j], result.oracle_mse_se[j]
        ));
    }
    fs::write(dir.join("oracle_mse.csv"), oracle_csv)?;

    let summary = SimulateSummary {
        config: &spec,
        result: &result,
    };
    let json =
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    eprintln!(
        "simulate: wrote params.csv, initial_mse.csv, updated_mse.csv, oracle_mse.csv and \
         summary.json to {}",
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// register

fn run_register(args: RegisterArgs) -> Result<(), CliError> {
    let options = ingest::IngestOptions {
        mz_min: args.mz_min,
        mz_max: args.mz_max,
        log_transform: args.log_transform,
    };
    let panel = load_panel(&args.input, &options, args.reference.as_deref())?;
    eprintln!(
        "register: {} individuals on a {}-point grid",
        panel.n(),
        panel.x_row(0).len()
    );
    let mut buf = Vec::new();
    ingest::write_wide_csv(&mut buf, &panel)?;
    let text = String::from_utf8(buf).expect("CSV output is UTF-8");
    write_output(&args.out, &text)?;
    Ok(())
}
