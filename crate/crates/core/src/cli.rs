//! Command-line front end: `simulate`, `verify`, `analyze` and `report`.
//!
//! Settings come from flags, an optional flat `key=value` config file and
//! preset defaults, in that order of precedence. Exit codes: 0 success,
//! 1 checked failure, 2 usage or configuration error.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::datagen::{correlation_of, standardize};
use crate::efa::{fit_ml, FitOptions};
use crate::error::Error;
use crate::model::residual_from_parts;
use crate::plot::{histogram_svg, histogram_text, rmsc_svg, rmsc_text, RmscSeries};
use crate::report::{
    read_runs_csv, summary_text, write_figure2_csv, write_histogram_csv, write_runs_csv, write_table2_csv,
    write_tails_csv, HISTOGRAM_BIN_WIDTH, RMSC_BAND_Q3, RMSC_BAND_Q6,
};
use crate::residuals::{decompose_residuals, project_components, ScoringStrategy};
use crate::sim::{aggregate_rmsc, factor_counts, histogram_r, run_grid, PopulationMode, SimulationConfig, SimulationRecord};
use crate::theorems::{default_cases, verify_all, VerifyOptions};

pub const SEED_ENV: &str = "FACTOR_PARADOX_SEED";
/// Gated identity deviations at or above this fail `verify`.
pub const VERIFY_TOLERANCE: f64 = 1e-6;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config, input files or output location (exit 2).
    Usage(String),
    /// A check failed or the data are degenerate (exit 1).
    Failure(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failure(m) => write!(f, "{m}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// Numeric or data problems are checked failures; everything else is usage.
fn classify(e: Error) -> CliError {
    match e {
        Error::DegenerateData(_)
        | Error::Singular(_)
        | Error::NotPositiveDefinite(_)
        | Error::NoComponents
        | Error::Infeasible { .. }
        | Error::Asymmetric(_)
        | Error::NonZeroDiagonal(_) => CliError::Failure(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "factor-paradox", version, about = "Factor analysis residual-component study")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Flat key=value settings file (e.g. `sim.reps=300`).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory [config: output.dir].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Base seed [config: seed; env: FACTOR_PARADOX_SEED].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Progress messages on stderr; repeat for more [config: verbose].
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Monte Carlo grid and write runs and aggregate CSVs.
    Simulate(SimulateArgs),
    /// Check the cross-covariance identities on constructed populations.
    Verify(VerifyArgs),
    /// Fit a factor model to a data CSV and decompose its residuals.
    Analyze(AnalyzeArgs),
    /// Re-aggregate a runs.csv and render the charts.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// desk or full [config: sim.preset].
    #[arg(long)]
    pub preset: Option<String>,
    /// Replications per cell [config: sim.reps].
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated sample sizes [config: sim.sample_sizes].
    #[arg(long, value_delimiter = ',')]
    pub sample_sizes: Option<Vec<usize>>,
    /// Comma-separated salient loadings [config: sim.loadings].
    #[arg(long, value_delimiter = ',')]
    pub loadings: Option<Vec<f64>>,
    /// Comma-separated factor counts [config: sim.factor_counts].
    #[arg(long, value_delimiter = ',')]
    pub factor_counts: Option<Vec<usize>>,
    /// generative or fixed-population [config: sim.population_mode].
    #[arg(long)]
    pub population_mode: Option<String>,
    /// Cases in each fixed population [config: sim.fixed_population_size].
    #[arg(long)]
    pub fixed_population_size: Option<usize>,
    /// eq12-true-scores or direct-projection [config: sim.scoring_strategy].
    #[arg(long)]
    pub strategy: Option<String>,
    /// Observed variables per factor [config: sim.vars_per_factor].
    #[arg(long)]
    pub vars_per_factor: Option<usize>,
    /// Kaiser row normalization in Varimax [config: sim.kaiser_normalize].
    #[arg(long)]
    pub kaiser_normalize: Option<bool>,
    /// Worker threads; 1 runs sequentially [config: sim.threads].
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Convergence tolerance on the ML discrepancy [config: fit.tol].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Maximum ML iterations [config: fit.max_iter].
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Lower bound on uniquenesses [config: fit.psi_floor].
    #[arg(long)]
    pub psi_floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Cases per constructed population [config: verify.cases].
    #[arg(long)]
    pub cases: Option<usize>,
    /// Residual components per check [config: verify.components].
    #[arg(long)]
    pub components: Option<usize>,
    /// Corrupt one observed score in every constructed population [config: verify.perturb].
    #[arg(long)]
    pub perturb: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Data CSV with a header row [config: analyze.input].
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of common factors [config: analyze.factors].
    #[arg(long)]
    pub factors: Option<usize>,
    /// Kaiser row normalization in Varimax [config: analyze.kaiser_normalize].
    #[arg(long)]
    pub kaiser_normalize: Option<bool>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// runs.csv to aggregate; defaults to <out>/runs.csv [config: report.runs].
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Strategy for histograms, tails and the RMSC chart [config: sim.scoring_strategy].
    #[arg(long)]
    pub strategy: Option<String>,
    /// Histogram bin width [config: report.bin_width].
    #[arg(long)]
    pub bin_width: Option<f64>,
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "verbose",
    "output.dir",
    "sim.preset",
    "sim.reps",
    "sim.sample_sizes",
    "sim.loadings",
    "sim.factor_counts",
    "sim.population_mode",
    "sim.fixed_population_size",
    "sim.scoring_strategy",
    "sim.vars_per_factor",
    "sim.kaiser_normalize",
    "sim.threads",
    "fit.tol",
    "fit.max_iter",
    "fit.psi_floor",
    "verify.cases",
    "verify.components",
    "verify.perturb",
    "analyze.input",
    "analyze.factors",
    "analyze.kaiser_normalize",
    "report.runs",
    "report.bin_width",
];

/// Flat `key=value` settings; `#` starts a comment line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key=value", i + 1)))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(usage(format!("config line {}: unknown key '{key}'", i + 1)));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| usage(format!("config {key}='{v}': {e}"))))
            .transpose()
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| item.trim().parse::<T>().map_err(|e| usage(format!("config {key}='{v}': {e}"))))
                    .collect()
            })
            .transpose()
    }
}

/// Flag value if given, otherwise the config value.
fn pick<T: FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str) -> CliResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key),
    }
}

fn pick_list<T: FromStr>(flag: Option<Vec<T>>, cfg: &ConfigFile, key: &str) -> CliResult<Option<Vec<T>>>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get_list(key),
    }
}

fn parse_with<T: FromStr>(value: Option<String>, what: &str) -> CliResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .map(|v| v.parse::<T>().map_err(|e| usage(format!("{what} '{v}': {e}"))))
        .transpose()
}

/// Settings shared by every subcommand.
struct Context {
    cfg: ConfigFile,
    out: PathBuf,
    seed: Option<u64>,
    verbose: u8,
}

impl Context {
    fn new(global: &GlobalArgs) -> CliResult<Self> {
        let cfg = match &global.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let out = pick(global.out.clone(), &cfg, "output.dir")?.unwrap_or_else(|| PathBuf::from("results"));
        let seed = match pick(global.seed, &cfg, "seed")? {
            Some(s) => Some(s),
            None => match std::env::var(SEED_ENV) {
                Ok(v) => Some(v.trim().parse().map_err(|e| usage(format!("{SEED_ENV}='{v}': {e}")))?),
                Err(_) => None,
            },
        };
        let verbose = if global.verbose > 0 {
            global.verbose
        } else {
            cfg.get("verbose")?.unwrap_or(0)
        };
        Ok(Self { cfg, out, seed, verbose })
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Creates the output directory and confirms it accepts files.
    fn prepare_out(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out).map_err(|e| usage(format!("output directory {}: {e}", self.out.display())))?;
        let probe = self.out.join(".write-check");
        File::create(&probe)
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| usage(format!("output directory {} is not writable: {e}", self.out.display())))
    }

    fn write_file(&self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> crate::Result<()>) -> CliResult<()> {
        let path = self.out.join(name);
        let file = File::create(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        w.flush().map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    fn write_text(&self, name: &str, text: &str) -> CliResult<()> {
        self.write_file(name, |w| Ok(w.write_all(text.as_bytes())?))
    }

    fn fit_options(&self, args: &FitArgs) -> CliResult<FitOptions> {
        let d = FitOptions::default();
        Ok(FitOptions {
            tol: pick(args.tol, &self.cfg, "fit.tol")?.unwrap_or(d.tol),
            max_iter: pick(args.max_iter, &self.cfg, "fit.max_iter")?.unwrap_or(d.max_iter),
            psi_floor: pick(args.psi_floor, &self.cfg, "fit.psi_floor")?.unwrap_or(d.psi_floor),
        })
    }

    fn strategy(&self, flag: Option<String>) -> CliResult<ScoringStrategy> {
        let raw = pick(flag, &self.cfg, "sim.scoring_strategy")?;
        Ok(parse_with(raw, "scoring strategy")?.unwrap_or(ScoringStrategy::Eq12TrueScores))
    }
}

/// Parses arguments, runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let ctx = Context::new(&cli.global)?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&ctx, args),
        Command::Verify(args) => cmd_verify(&ctx, args),
        Command::Analyze(args) => cmd_analyze(&ctx, args),
        Command::Report(args) => cmd_report(&ctx, args),
    }
}

/// Preset defaults, then config values, then flags.
fn simulation_config(ctx: &Context, args: SimulateArgs) -> CliResult<SimulationConfig> {
    let cfg = &ctx.cfg;
    let preset: String = pick(args.preset, cfg, "sim.preset")?.unwrap_or_else(|| "desk".into());
    let mut sc = match preset.as_str() {
        "desk" => SimulationConfig::desk(),
        "full" => SimulationConfig::full(),
        other => return Err(usage(format!("unknown preset '{other}' (desk | full)"))),
    };
    if let Some(v) = pick(args.reps, cfg, "sim.reps")? {
        sc.reps = v;
    }
    if let Some(v) = pick_list(args.sample_sizes, cfg, "sim.sample_sizes")? {
        sc.sample_sizes = v;
    }
    if let Some(v) = pick_list(args.loadings, cfg, "sim.loadings")? {
        sc.loadings = v;
    }
    if let Some(v) = pick_list(args.factor_counts, cfg, "sim.factor_counts")? {
        sc.factor_counts = v;
    }
    if let Some(v) = parse_with::<PopulationMode>(pick(args.population_mode, cfg, "sim.population_mode")?, "population mode")? {
        sc.population_mode = v;
    }
    if let Some(v) = pick(args.fixed_population_size, cfg, "sim.fixed_population_size")? {
        sc.fixed_population_size = v;
    }
    sc.scoring_strategy = ctx.strategy(args.strategy)?;
    if let Some(v) = pick(args.vars_per_factor, cfg, "sim.vars_per_factor")? {
        sc.vars_per_factor = v;
    }
    if let Some(v) = pick(args.kaiser_normalize, cfg, "sim.kaiser_normalize")? {
        sc.kaiser_normalize = v;
    }
    if let Some(v) = pick(args.threads, cfg, "sim.threads")? {
        sc.threads = Some(v);
    }
    sc.fit = ctx.fit_options(&args.fit)?;
    if let Some(seed) = ctx.seed {
        sc.base_seed = seed;
    }
    sc.validate().map_err(usage)?;
    Ok(sc)
}

fn write_aggregates(ctx: &Context, records: &[SimulationRecord], strategy: ScoringStrategy, bin_width: f64) -> CliResult<()> {
    ctx.write_file("table2.csv", |w| write_table2_csv(records, w))?;
    ctx.write_file("figure2.csv", |w| write_figure2_csv(records, w))?;
    ctx.write_file("histogram.csv", |w| write_histogram_csv(records, bin_width, w))?;
    ctx.write_file("tails.csv", |w| write_tails_csv(records, w))?;
    ctx.write_text("summary.txt", &summary_text(records, strategy))
}

fn cmd_simulate(ctx: &Context, args: SimulateArgs) -> CliResult<()> {
    let sc = simulation_config(ctx, args)?;
    ctx.prepare_out()?;
    ctx.log(format!(
        "simulating {} cells x {} reps (seed {}, {})",
        sc.cells().len(),
        sc.reps,
        sc.base_seed,
        sc.population_mode
    ));
    let start = Instant::now();
    let results = run_grid(&sc).map_err(|e| CliError::Failure(e.to_string()))?;
    ctx.log(format!("finished in {:.1?}", start.elapsed()));
    ctx.write_file("runs.csv", |w| write_runs_csv(&results.records, w))?;
    write_aggregates(ctx, &results.records, sc.scoring_strategy, HISTOGRAM_BIN_WIDTH)?;
    print!("{}", summary_text(&results.records, sc.scoring_strategy));
    println!("wrote {}", ctx.out.display());
    Ok(())
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into())
}

fn cmd_verify(ctx: &Context, args: VerifyArgs) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let d = VerifyOptions::default();
    let opts = VerifyOptions {
        cases: pick(args.cases, cfg, "verify.cases")?.unwrap_or(d.cases),
        seed: ctx.seed.unwrap_or(d.seed),
        perturb: args.perturb || cfg.get("verify.perturb")?.unwrap_or(false),
    };
    let m: usize = pick(args.components, cfg, "verify.components")?.unwrap_or(1);
    if m == 0 {
        return Err(usage("verify.components must be at least 1"));
    }
    let cases = default_cases(opts.seed, m).map_err(usage)?;

    println!(
        "{:<30} {:<52} {:>10} {:>5} {:>8} {:>10} {:>10} {:>10}  status",
        "case", "identity", "max dev", "gated", "feasible", "min eig", "lsq resid", "witness"
    );
    let mut failures = 0;
    for case in &cases {
        let report = verify_all(&case.model, &case.n_loadings, &opts).map_err(classify)?;
        for c in &report.checks {
            let status = if !c.gated {
                "info"
            } else if c.passes(VERIFY_TOLERANCE) {
                "ok"
            } else {
                failures += 1;
                "FAIL"
            };
            let feasible = match c.feasible {
                Some(true) => "yes",
                Some(false) => "no",
                None => "-",
            };
            let dev = if c.max_abs_deviation.is_nan() {
                "-".to_string()
            } else {
                format!("{:.3e}", c.max_abs_deviation)
            };
            println!(
                "{:<30} {:<52} {:>10} {:>5} {:>8} {:>10} {:>10} {:>10}  {status}{}",
                case.label,
                c.name,
                dev,
                if c.gated { "yes" } else { "no" },
                feasible,
                fmt_cell(c.min_eigenvalue),
                fmt_cell(c.lsq_residual),
                fmt_cell(c.witness_norm),
                if c.note.is_empty() { String::new() } else { format!("  ({})", c.note) }
            );
        }
    }
    if failures > 0 {
        return Err(CliError::Failure(format!(
            "{failures} gated identities deviate by {VERIFY_TOLERANCE:e} or more"
        )));
    }
    println!("all gated identities within {VERIFY_TOLERANCE:e}");
    Ok(())
}

/// Reads numeric columns from a data CSV. When the header names columns
/// `x1, x2, ...` only those are used, so sample exports load directly.
pub fn read_data_csv(path: &Path) -> CliResult<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let is_x = |h: &str| h.len() > 1 && h.starts_with('x') && h[1..].chars().all(|c| c.is_ascii_digit());
    let cols: Vec<usize> = if header.iter().any(|h| is_x(h)) {
        (0..header.len()).filter(|&i| is_x(&header[i])).collect()
    } else {
        (0..header.len()).collect()
    };
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut row = Vec::with_capacity(cols.len());
        for &c in &cols {
            let raw = rec.get(c).unwrap_or("").trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| usage(format!("{} row {}: non-numeric value '{raw}' in {}", path.display(), line + 2, header[c])))?;
            if !v.is_finite() {
                return Err(usage(format!("{} row {}: non-finite value in {}", path.display(), line + 2, header[c])));
            }
            row.push(v);
        }
        rows.push(row);
    }
    let names = cols.iter().map(|&c| header[c].clone()).collect();
    let x = DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i][j]);
    Ok((names, x))
}

fn cmd_analyze(ctx: &Context, args: AnalyzeArgs) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let input: PathBuf = pick(args.input, cfg, "analyze.input")?.ok_or_else(|| usage("analyze needs --input"))?;
    let q: usize = pick(args.factors, cfg, "analyze.factors")?.ok_or_else(|| usage("analyze needs --factors"))?;
    let kaiser = pick(args.kaiser_normalize, cfg, "analyze.kaiser_normalize")?.unwrap_or(true);
    let fit_opts = ctx.fit_options(&args.fit)?;

    let (names, x) = read_data_csv(&input)?;
    let (n, p) = x.shape();
    if p < 2 {
        return Err(usage("need at least two variables"));
    }
    if q == 0 || q >= p {
        return Err(usage(format!("--factors must be in 1..{p}")));
    }
    if n < p + 1 {
        return Err(usage(format!("need at least {} rows, got {n}", p + 1)));
    }
    ctx.prepare_out()?;

    let r = correlation_of(&x).map_err(classify)?;
    let sol = fit_ml(&r, q, &fit_opts).map_err(classify)?.rotated_varimax(kaiser);
    let omega = residual_from_parts(&r, &sol.common_covariance()).map_err(classify)?;
    let decomp = decompose_residuals(&omega).map_err(classify)?;
    let z = standardize(&x).map_err(classify)?;
    let scores = if decomp.m > 0 {
        Some(
            project_components(&decomp.n_loadings, &z, &sol.lambda_hat, None, None, ScoringStrategy::DirectProjection)
                .map_err(classify)?,
        )
    } else {
        None
    };

    let matrix_rows = |w: &mut BufWriter<File>, head: &str, cols: usize, m: &DMatrix<f64>| -> crate::Result<()> {
        let mut cw = csv::Writer::from_writer(w);
        let mut h = vec!["variable".to_string()];
        h.extend((1..=cols).map(|k| format!("{head}{k}")));
        cw.write_record(&h)?;
        for (i, name) in names.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend((0..cols).map(|k| m[(i, k)].to_string()));
            cw.write_record(&row)?;
        }
        cw.flush()?;
        Ok(())
    };
    ctx.write_file("loadings.csv", |w| matrix_rows(w, "f", q, &sol.lambda_hat))?;
    ctx.write_file("residual_loadings.csv", |w| matrix_rows(w, "n", decomp.m, &decomp.n_loadings))?;
    ctx.write_file("uniquenesses.csv", |w| {
        let mut cw = csv::Writer::from_writer(w);
        cw.write_record(["variable", "uniqueness", "heywood"])?;
        for (i, name) in names.iter().enumerate() {
            cw.write_record([name.clone(), sol.psi2_hat[i].to_string(), u8::from(sol.heywood[i]).to_string()])?;
        }
        cw.flush()?;
        Ok(())
    })?;
    ctx.write_file("residual_eigenvalues.csv", |w| {
        let mut cw = csv::Writer::from_writer(w);
        cw.write_record(["index", "eigenvalue"])?;
        for (i, v) in decomp.eigenvalues.iter().enumerate() {
            cw.write_record([(i + 1).to_string(), v.to_string()])?;
        }
        cw.flush()?;
        Ok(())
    })?;
    if let Some(scores) = &scores {
        ctx.write_file("component_scores.csv", |w| {
            let mut cw = csv::Writer::from_writer(w);
            let mut h = vec!["case".to_string()];
            h.extend((1..=decomp.m).map(|k| format!("u{k}")));
            cw.write_record(&h)?;
            for i in 0..n {
                let mut row = vec![(i + 1).to_string()];
                row.extend((0..decomp.m).map(|k| scores.u[(i, k)].to_string()));
                cw.write_record(&row)?;
            }
            cw.flush()?;
            Ok(())
        })?;
    }

    println!("cases {n}, variables {p}, factors {q}");
    println!(
        "ML discrepancy {:.6e}, iterations {}, converged {}, Heywood variables {}",
        sol.fit,
        sol.iterations,
        sol.converged,
        sol.heywood_count()
    );
    println!(
        "positive residual eigenvalues {}, first residual eigenvalue {:.6}",
        decomp.m,
        decomp.first_eigenvalue()
    );
    println!("wrote {}", ctx.out.display());
    Ok(())
}

fn cmd_report(ctx: &Context, args: ReportArgs) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let runs = pick(args.runs, cfg, "report.runs")?.unwrap_or_else(|| ctx.out.join("runs.csv"));
    let strategy = ctx.strategy(args.strategy)?;
    let bin_width: f64 = pick(args.bin_width, cfg, "report.bin_width")?.unwrap_or(HISTOGRAM_BIN_WIDTH);
    if !(bin_width > 0.0 && bin_width <= 2.0) {
        return Err(usage("bin width must lie in (0, 2]"));
    }
    let file = File::open(&runs).map_err(|e| usage(format!("{}: {e}", runs.display())))?;
    let records = read_runs_csv(std::io::BufReader::new(file)).map_err(|e| usage(format!("{}: {e}", runs.display())))?;
    if records.is_empty() {
        return Err(usage(format!("{} has no records", runs.display())));
    }
    ctx.prepare_out()?;
    write_aggregates(ctx, &records, strategy, bin_width)?;

    let mut text = String::new();
    for q in factor_counts(&records) {
        let bins = histogram_r(&records, q, bin_width, strategy);
        let title = format!("r(u1, f1), {q}-factor solutions, {strategy}");
        ctx.write_text(&format!("histogram_q{q}.svg"), &histogram_svg(&bins, &title))?;
        text.push_str(&histogram_text(&bins, &title));
        text.push('\n');
    }
    ctx.write_text("histogram.txt", &text)?;

    let rmsc = aggregate_rmsc(&records, strategy);
    let series: Vec<RmscSeries> = factor_counts(&records)
        .into_iter()
        .map(|q| RmscSeries {
            label: format!("{q} factors"),
            points: rmsc.iter().filter(|(c, _)| c.q == q).copied().collect(),
        })
        .collect();
    let title = format!("RMSC of r(u1, f_k), {strategy}");
    ctx.write_text(
        "rmsc.svg",
        &rmsc_svg(&series, &[RMSC_BAND_Q3, RMSC_BAND_Q6.0, RMSC_BAND_Q6.1], &title),
    )?;
    ctx.write_text("rmsc.txt", &rmsc_text(&series, &title))?;
    print!("{}", summary_text(&records, strategy));
    println!("wrote {}", ctx.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let cfg = ConfigFile::parse("# comment\nsim.reps = 25\nsim.loadings=0.4, 0.6\n\nseed=9\n").unwrap();
        assert_eq!(cfg.get::<usize>("sim.reps").unwrap(), Some(25));
        assert_eq!(cfg.get_list::<f64>("sim.loadings").unwrap(), Some(vec![0.4, 0.6]));
        assert_eq!(cfg.get::<u64>("seed").unwrap(), Some(9));
        assert_eq!(cfg.get::<usize>("sim.threads").unwrap(), None);
        assert!(matches!(ConfigFile::parse("sim.reps"), Err(CliError::Usage(_))));
        assert!(matches!(ConfigFile::parse("sim.bogus=1"), Err(CliError::Usage(_))));
        let bad = ConfigFile::parse("sim.reps=many").unwrap();
        assert!(bad.get::<usize>("sim.reps").is_err());
    }

    #[test]
    fn flags_override_config() {
        let cfg = ConfigFile::parse("sim.reps=25").unwrap();
        assert_eq!(pick(Some(3usize), &cfg, "sim.reps").unwrap(), Some(3));
        assert_eq!(pick(None::<usize>, &cfg, "sim.reps").unwrap(), Some(25));
    }

    #[test]
    fn error_classes() {
        assert_eq!(classify(Error::DegenerateData("c".into())).code(), 1);
        assert_eq!(classify(Error::Parse("c".into())).code(), 2);
    }
}
