//! Command-line front end.
//!
//! Every command prints a JSON document `{"config": …, "result": …}` where
//! `config` is the fully resolved run configuration. Settings come from
//! flags, then from an optional TOML file (`--config`), then from defaults.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or parse failure, 3 numerical
//! failure. Errors are reported on stderr as `{"error": {"kind", "message"}}`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::read_csv;
use crate::divergence::{Divergence, GridSpec};
use crate::error::Error;
use crate::estimator::{estimate, population_estimate, EstimateOptions};
use crate::inference::{
    confidence_region, power_approx, sample_size, test_model_with, test_theta_composite_with,
    test_theta_simple, RegionGrid,
};
use crate::model::{builtin_model, ModelOptions, MomentModel, ParamBox, WeightedSample};
use crate::simulation::{power_comparison, Generator, SimulationPlan};

pub const THREADS_ENV: &str = "PHIDUAL_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "phidual",
    version,
    about = "Divergence-based estimation and tests for moment condition models"
)]
struct Cli {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    /// Also write the JSON output (or the CSV table for `simulate`) to this file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit θ and report the divergence and its variance estimates.
    Estimate(DataArgs),
    /// Model, simple θ, or ratio test.
    Test {
        #[arg(value_enum)]
        kind: TestChoice,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Approximate power at an alternative.
    Power(PlanArgs),
    /// Sample size reaching a target power.
    Samplesize(PlanArgs),
    /// Confidence region by grid scan.
    Confidence(DataArgs),
    /// Monte Carlo versus approximate power of the model test.
    Simulate(SimArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum TestChoice {
    Model,
    Theta,
    Ratio,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Built-in model: `mean` or `mean-variance`.
    #[arg(long)]
    model: Option<String>,
    /// Divergence: KLm (or el), KL, chi2m, chi2, hellinger, power:γ.
    #[arg(long)]
    family: Option<String>,
    /// CSV file, one observation per row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// The CSV file has a header line.
    #[arg(long)]
    header: bool,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated θ; entries may be fractions such as 1/3.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// Lower corner of the parameter box (comma-separated).
    #[arg(long, allow_hyphen_values = true)]
    theta_lo: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    theta_hi: Option<String>,
    /// Grid `lo:hi:points`, one per coordinate of θ.
    #[arg(long, allow_hyphen_values = true)]
    grid: Vec<String>,
    /// Seed for the multistart points.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    starts: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct PlanArgs {
    /// Target power (samplesize).
    #[arg(long)]
    beta: Option<f64>,
    /// Sample size (power).
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    df: Option<usize>,
    /// Divergence between the alternative and the model.
    #[arg(long = "D", alias = "divergence")]
    divergence: Option<f64>,
    /// Standard deviation of m at the alternative.
    #[arg(long)]
    sigma: Option<f64>,
    /// Take D and σ from a population fit of this law
    /// (`uniform:lo:hi` or `normal:mean:sd`).
    #[arg(long, allow_hyphen_values = true)]
    generator: Option<String>,
    /// Take D and σ from a fit of this CSV sample (plug-in).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    atoms: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct SimArgs {
    /// Power-curve study on U[−1, 1+ε] with the mean-variance model and
    /// defaults n ∈ {50, 100, 200, 500}, ε ∈ {0.1, …, 1}, 1000 runs.
    #[arg(long)]
    figure1: bool,
    /// Sweep every named family; adds a `family` column.
    #[arg(long)]
    all_families: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    n_list: Option<String>,
    /// Comma-separated ε values.
    #[arg(long)]
    eps_grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    generator: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    atoms: Option<usize>,
    #[arg(long)]
    starts: Option<usize>,
}

/// Settings accepted in the `--config` file. Keys mirror the long flags
/// with `_` for `-`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    threads: Option<usize>,
    out: Option<PathBuf>,
    verbose: Option<bool>,
    model: Option<String>,
    family: Option<String>,
    data: Option<PathBuf>,
    header: Option<bool>,
    alpha: Option<f64>,
    theta: Option<String>,
    theta_lo: Option<String>,
    theta_hi: Option<String>,
    grid: Option<Vec<String>>,
    seed: Option<u64>,
    starts: Option<usize>,
    beta: Option<f64>,
    n: Option<u64>,
    df: Option<usize>,
    #[serde(rename = "D")]
    divergence: Option<f64>,
    sigma: Option<f64>,
    generator: Option<String>,
    atoms: Option<usize>,
    runs: Option<usize>,
    n_list: Option<String>,
    eps_grid: Option<String>,
    all_families: Option<bool>,
}

/// Fully resolved configuration, echoed into every output.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub threads: usize,
    pub out: Option<PathBuf>,
    pub verbose: bool,
    pub model: Option<String>,
    pub family: Option<String>,
    pub data: Option<PathBuf>,
    pub header: bool,
    pub alpha: Option<f64>,
    pub theta: Option<Vec<f64>>,
    pub theta_lo: Option<Vec<f64>>,
    pub theta_hi: Option<Vec<f64>>,
    pub grid: Vec<GridSpec>,
    pub seed: Option<u64>,
    pub starts: Option<usize>,
    pub beta: Option<f64>,
    pub n: Option<u64>,
    pub df: Option<usize>,
    #[serde(rename = "D")]
    pub divergence: Option<f64>,
    pub sigma: Option<f64>,
    pub generator: Option<Generator>,
    pub atoms: Option<usize>,
    pub runs: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub eps_grid: Option<Vec<f64>>,
    pub all_families: bool,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            kind: "usage",
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            kind: "io",
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidArgument(_)
            | Error::UnknownModel(_)
            | Error::UnknownFamily(_)
            | Error::ParameterSpace { .. }
            | Error::Dimension(_) => (1, "usage"),
            Error::Io(_) => (2, "io"),
            Error::Parse { .. } | Error::EmptySample => (2, "parse"),
            Error::NotApplicable(_) => (3, "not-applicable"),
            Error::Domain { .. }
            | Error::RankDeficient(_)
            | Error::InnerNotConverged { .. }
            | Error::EstimationFailed { .. } => (3, "numeric"),
        };
        CliError {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

/// Runs the command line given by `args` (program name first) and returns
/// the exit code.
pub fn run<I, T>(args: I, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = write!(stderr, "{}", e.render());
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let doc = json!({"error": {"kind": e.kind, "message": e.message}});
            let _ = writeln!(
                stderr,
                "{}",
                serde_json::to_string_pretty(&doc).unwrap_or_default()
            );
            e.code
        }
    }
}

fn execute(
    cli: Cli,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => load_config(path)?,
        None => FileConfig::default(),
    };
    let threads = cli
        .threads
        .or(file.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let mut base = RunConfig {
        threads,
        out: cli.out.clone().or(file.out.clone()),
        verbose: cli.verbose || file.verbose.unwrap_or(false),
        ..RunConfig::default()
    };
    pool.install(|| match cli.command {
        Command::Estimate(args) => {
            base.command = "estimate".into();
            cmd_estimate(resolve_data(base, &args, &file)?, stdout, stderr)
        }
        Command::Test { kind, data } => {
            base.command = format!("test {}", serde_plain(kind));
            cmd_test(kind, resolve_data(base, &data, &file)?, stdout, stderr)
        }
        Command::Confidence(args) => {
            base.command = "confidence".into();
            cmd_confidence(resolve_data(base, &args, &file)?, stdout, stderr)
        }
        Command::Power(args) => {
            base.command = "power".into();
            cmd_power(resolve_plan(base, &args, &file)?, stdout, stderr)
        }
        Command::Samplesize(args) => {
            base.command = "samplesize".into();
            cmd_samplesize(resolve_plan(base, &args, &file)?, stdout, stderr)
        }
        Command::Simulate(args) => {
            base.command = "simulate".into();
            cmd_simulate(resolve_sim(base, &args, &file)?, stdout, stderr)
        }
    })
}

fn serde_plain(kind: TestChoice) -> &'static str {
    match kind {
        TestChoice::Model => "model",
        TestChoice::Theta => "theta",
        TestChoice::Ratio => "ratio",
    }
}

fn load_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError {
        code: 2,
        kind: "parse",
        message: format!("{}: {e}", path.display()),
    })
}

/// Parses a real, accepting `a/b` fractions.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a
                .trim()
                .parse()
                .map_err(|_| format!("`{s}` is not a number"))?;
            let b: f64 = b
                .trim()
                .parse()
                .map_err(|_| format!("`{s}` is not a number"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("`{s}` is not a number"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not a finite number"))
    }
}

fn parse_list<T>(
    s: &str,
    what: &str,
    f: impl Fn(&str) -> Result<T, String>,
) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|p| f(p).map_err(|m| CliError::usage(format!("--{what}: {m}"))))
        .collect()
}

fn parse_reals(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    parse_list(s, what, parse_real)
}

/// `uniform:lo:hi` or `normal:mean:sd`.
pub fn parse_generator(s: &str) -> Result<Generator, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || format!("generator `{s}` is not uniform:lo:hi or normal:mean:sd");
    if parts.len() != 3 {
        return Err(bad());
    }
    let a = parse_real(parts[1]).map_err(|_| bad())?;
    let b = parse_real(parts[2]).map_err(|_| bad())?;
    let g = match parts[0].trim().to_ascii_lowercase().as_str() {
        "uniform" => Generator::Uniform { lo: a, hi: b },
        "normal" => Generator::Normal { mean: a, sd: b },
        _ => return Err(bad()),
    };
    g.validate().map_err(|e| e.to_string())?;
    Ok(g)
}

fn parse_family(s: &str) -> Result<Divergence, CliError> {
    s.parse::<Divergence>().map_err(CliError::from)
}

fn resolve_data(mut cfg: RunConfig, a: &DataArgs, f: &FileConfig) -> Result<RunConfig, CliError> {
    cfg.model = Some(
        a.model
            .clone()
            .or(f.model.clone())
            .unwrap_or_else(|| "mean-variance".into()),
    );
    cfg.family = Some(
        a.family
            .clone()
            .or(f.family.clone())
            .unwrap_or_else(|| "KLm".into()),
    );
    cfg.data = a.data.clone().or(f.data.clone());
    cfg.header = a.header || f.header.unwrap_or(false);
    cfg.alpha = Some(a.alpha.or(f.alpha).unwrap_or(0.05));
    cfg.seed = Some(a.seed.or(f.seed).unwrap_or(EstimateOptions::default().seed));
    cfg.starts = Some(
        a.starts
            .or(f.starts)
            .unwrap_or(EstimateOptions::default().starts),
    );
    if let Some(s) = a.theta.as_ref().or(f.theta.as_ref()) {
        cfg.theta = Some(parse_reals(s, "theta")?);
    }
    if let Some(s) = a.theta_lo.as_ref().or(f.theta_lo.as_ref()) {
        cfg.theta_lo = Some(parse_reals(s, "theta-lo")?);
    }
    if let Some(s) = a.theta_hi.as_ref().or(f.theta_hi.as_ref()) {
        cfg.theta_hi = Some(parse_reals(s, "theta-hi")?);
    }
    let grid = if a.grid.is_empty() {
        f.grid.clone().unwrap_or_default()
    } else {
        a.grid.clone()
    };
    cfg.grid = grid
        .iter()
        .map(|g| g.parse::<GridSpec>().map_err(CliError::from))
        .collect::<Result<_, _>>()?;
    if cfg.data.is_none() {
        return Err(CliError::usage(format!("{} needs --data", cfg.command)));
    }
    parse_family(cfg.family.as_deref().unwrap_or_default())?;
    Ok(cfg)
}

fn resolve_plan(mut cfg: RunConfig, a: &PlanArgs, f: &FileConfig) -> Result<RunConfig, CliError> {
    cfg.beta = a.beta.or(f.beta);
    cfg.n = a.n.or(f.n);
    cfg.alpha = Some(a.alpha.or(f.alpha).unwrap_or(0.05));
    cfg.divergence = a.divergence.or(f.divergence);
    cfg.sigma = a.sigma.or(f.sigma);
    cfg.data = a.data.clone().or(f.data.clone());
    cfg.header = a.header || f.header.unwrap_or(false);
    if let Some(s) = a.generator.as_ref().or(f.generator.as_ref()) {
        cfg.generator = Some(parse_generator(s).map_err(CliError::usage)?);
    }
    let sources = [
        cfg.divergence.is_some() || cfg.sigma.is_some(),
        cfg.data.is_some(),
        cfg.generator.is_some(),
    ];
    match sources.iter().filter(|b| **b).count() {
        0 => {
            return Err(CliError::usage(
                "give --D and --sigma, or --data, or --generator",
            ))
        }
        1 => {}
        _ => {
            return Err(CliError::usage(
                "--D/--sigma, --data and --generator are exclusive",
            ))
        }
    }
    if sources[0] {
        if cfg.divergence.is_none() || cfg.sigma.is_none() {
            return Err(CliError::usage("--D and --sigma go together"));
        }
        cfg.df = Some(
            a.df.or(f.df)
                .ok_or_else(|| CliError::usage("--df is required with --D"))?,
        );
    } else {
        cfg.model = Some(
            a.model
                .clone()
                .or(f.model.clone())
                .unwrap_or_else(|| "mean-variance".into()),
        );
        cfg.family = Some(
            a.family
                .clone()
                .or(f.family.clone())
                .unwrap_or_else(|| "KLm".into()),
        );
        parse_family(cfg.family.as_deref().unwrap_or_default())?;
        cfg.df = a.df.or(f.df);
        if cfg.generator.is_some() {
            cfg.atoms = Some(a.atoms.or(f.atoms).unwrap_or(10_000));
        }
    }
    let needed = if cfg.command == "power" {
        cfg.n.is_some()
    } else {
        cfg.beta.is_some()
    };
    if !needed {
        let flag = if cfg.command == "power" {
            "--n"
        } else {
            "--beta"
        };
        return Err(CliError::usage(format!("{} needs {flag}", cfg.command)));
    }
    Ok(cfg)
}

fn resolve_sim(mut cfg: RunConfig, a: &SimArgs, f: &FileConfig) -> Result<RunConfig, CliError> {
    let d = SimulationPlan::default();
    cfg.seed = Some(a.seed.or(f.seed).unwrap_or(d.seed));
    cfg.runs = Some(a.runs.or(f.runs).unwrap_or(d.runs));
    cfg.alpha = Some(a.alpha.or(f.alpha).unwrap_or(d.alpha));
    cfg.atoms = Some(a.atoms.or(f.atoms).unwrap_or(d.atoms));
    cfg.starts = Some(a.starts.or(f.starts).unwrap_or(d.estimate.starts));
    cfg.all_families = a.all_families || f.all_families.unwrap_or(false);
    let model = a.model.clone().or(f.model.clone());
    let generator = a.generator.clone().or(f.generator.clone());
    if a.figure1 && (model.is_some() || generator.is_some()) {
        return Err(CliError::usage(
            "--figure1 fixes the model and the generator",
        ));
    }
    cfg.model = Some(model.unwrap_or(d.model.clone()));
    cfg.generator = Some(match generator {
        Some(s) => parse_generator(&s).map_err(CliError::usage)?,
        None => d.generator.clone(),
    });
    cfg.family = Some(
        a.family
            .clone()
            .or(f.family.clone())
            .unwrap_or_else(|| d.family.to_string()),
    );
    parse_family(cfg.family.as_deref().unwrap_or_default())?;
    cfg.n_list = Some(match a.n_list.as_ref().or(f.n_list.as_ref()) {
        Some(s) => parse_list(s, "n-list", |p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("`{p}` is not a sample size"))
        })?,
        None => d.n_list.clone(),
    });
    cfg.eps_grid = Some(match a.eps_grid.as_ref().or(f.eps_grid.as_ref()) {
        Some(s) => parse_reals(s, "eps-grid")?,
        None => d.epsilon_grid.clone(),
    });
    Ok(cfg)
}

fn estimate_options(cfg: &RunConfig) -> EstimateOptions {
    let d = EstimateOptions::default();
    EstimateOptions {
        seed: cfg.seed.unwrap_or(d.seed),
        starts: cfg.starts.unwrap_or(d.starts),
        ..d
    }
}

fn load_problem(cfg: &RunConfig) -> Result<(Divergence, MomentModel, WeightedSample), CliError> {
    let family = parse_family(cfg.family.as_deref().unwrap_or("KLm"))?;
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::usage("--data is required"))?;
    let sample = read_csv(path, cfg.header).map_err(|e| match e {
        Error::Io(io) => CliError::io(format!("{}: {io}", path.display())),
        other => CliError::from(other),
    })?;
    let model = build_model(cfg, sample.dim())?;
    Ok((family, model, sample))
}

fn build_model(cfg: &RunConfig, data_dim: usize) -> Result<MomentModel, CliError> {
    let name = cfg.model.as_deref().unwrap_or("mean-variance");
    let mut model = builtin_model(
        name,
        &ModelOptions {
            data_dim: Some(data_dim),
            theta_space: None,
        },
    )?;
    if cfg.theta_lo.is_some() || cfg.theta_hi.is_some() {
        let space = model.theta_space();
        let lo = cfg.theta_lo.clone().unwrap_or_else(|| space.lo.clone());
        let hi = cfg.theta_hi.clone().unwrap_or_else(|| space.hi.clone());
        model = model.with_theta_space(ParamBox::new(lo, hi)?)?;
    }
    Ok(model)
}

fn emit(
    cfg: &RunConfig,
    result: serde_json::Value,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<(), CliError> {
    let doc = json!({"config": cfg, "result": result});
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::io(e.to_string()))?;
    writeln!(stdout, "{text}").map_err(|e| CliError::io(e.to_string()))?;
    if let Some(path) = &cfg.out {
        write_file(path, &format!("{text}\n"))?;
        if cfg.verbose {
            let _ = writeln!(stderr, "wrote {}", path.display());
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::io(e.to_string()))
}

fn warn(cfg: &RunConfig, stderr: &mut (dyn Write + Send), warnings: &[String]) {
    if cfg.verbose {
        for w in warnings {
            let _ = writeln!(stderr, "warning: {w}");
        }
    }
}

fn cmd_estimate(
    cfg: RunConfig,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<(), CliError> {
    let (family, model, sample) = load_problem(&cfg)?;
    let result = estimate(family, &model, &sample, &estimate_options(&cfg))?;
    warn(&cfg, stderr, &result.warnings);
    emit(&cfg, to_value(&result)?, stdout, stderr)
}

fn cmd_test(
    kind: TestChoice,
    cfg: RunConfig,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<(), CliError> {
    let (family, model, sample) = load_problem(&cfg)?;
    let alpha = cfg.alpha.unwrap_or(0.05);
    let opts = estimate_options(&cfg);
    let theta = || {
        cfg.theta
            .clone()
            .ok_or_else(|| CliError::usage(format!("test {} needs --theta", serde_plain(kind))))
    };
    let report = match kind {
        TestChoice::Model => test_model_with(family, &model, &sample, alpha, &opts)?,
        TestChoice::Theta => test_theta_simple(family, &model, &sample, &theta()?, alpha)?,
        TestChoice::Ratio => {
            test_theta_composite_with(family, &model, &sample, &theta()?, alpha, &opts)?
        }
    };
    warn(&cfg, stderr, &report.notes);
    emit(&cfg, to_value(&report)?, stdout, stderr)
}

fn cmd_confidence(
    cfg: RunConfig,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<(), CliError> {
    let (family, model, sample) = load_problem(&cfg)?;
    if cfg.grid.is_empty() {
        return Err(CliError::usage(
            "confidence needs --grid lo:hi:points for each coordinate",
        ));
    }
    let grid = RegionGrid::new(cfg.grid.clone())?;
    let region = confidence_region(
        family,
        &model,
        &sample,
        cfg.alpha.unwrap_or(0.05),
        &grid,
        &estimate_options(&cfg),
    )?;
    warn(&cfg, stderr, &region.warnings);
    emit(&cfg, to_value(&region)?, stdout, stderr)
}

/// `(D, σ, df)` from the flags, a plug-in fit, or a population fit.
fn alternative(cfg: &mut RunConfig) -> Result<(f64, f64, usize, serde_json::Value), CliError> {
    if let (Some(d), Some(s)) = (cfg.divergence, cfg.sigma) {
        return Ok((d, s, cfg.df.unwrap_or(1), serde_json::Value::Null));
    }
    let opts = estimate_options(cfg);
    let (fit, model) = if let Some(g) = cfg.generator.clone() {
        let family = parse_family(cfg.family.as_deref().unwrap_or("KLm"))?;
        let model = build_model(cfg, 1)?;
        let p0 = g.discretize(cfg.atoms.unwrap_or(10_000))?;
        (population_estimate(family, &model, &p0, &opts)?, model)
    } else {
        let (family, model, sample) = load_problem(cfg)?;
        (estimate(family, &model, &sample, &opts)?, model)
    };
    let dims = model.dims();
    let df = match cfg.df {
        Some(df) => df,
        None if dims.moments > dims.params => dims.moments - dims.params,
        None => {
            return Err(CliError::from(Error::NotApplicable(
                "the model test needs more moment conditions than parameters".into(),
            )))
        }
    };
    cfg.df = Some(df);
    let sigma = fit.sigma2_hat.sqrt();
    let info = json!({
        "theta": fit.theta_hat,
        "divergence": fit.divergence_hat,
        "sigma": sigma,
    });
    Ok((fit.divergence_hat.max(0.0), sigma, df, info))
}

fn cmd_power(
    mut cfg: RunConfig,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<(), CliError> {
    let (d, sigma, df, fit) = alternative(&mut cfg)?;
    let n = cfg.n.ok_or_else(|| CliError::usage("power needs --n"))?;
    let alpha = cfg.alpha.unwrap_or(0.05);
    let power = power_approx(n, alpha, df, d, sigma)?;
    let result = json!({"power": power, "n": n, "alpha": alpha, "df": df, "D": d, "sigma": sigma, "fit": fit});
    emit(&cfg, result, stdout, stderr)
}

fn cmd_samplesize(
    mut cfg: RunConfig,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<(), CliError> {
    let (d, sigma, df, fit) = alternative(&mut cfg)?;
    let beta = cfg
        .beta
        .ok_or_else(|| CliError::usage("samplesize needs --beta"))?;
    let alpha = cfg.alpha.unwrap_or(0.05);
    let n = sample_size(beta, alpha, df, d, sigma)?;
    let achieved = power_approx(n, alpha, df, d, sigma)?;
    let result = json!({
        "n": n, "beta": beta, "alpha": alpha, "df": df, "D": d, "sigma": sigma,
        "approx_power_at_n": achieved, "fit": fit,
    });
    emit(&cfg, result, stdout, stderr)
}

fn cmd_simulate(
    cfg: RunConfig,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<(), CliError> {
    let base = SimulationPlan {
        generator: cfg
            .generator
            .clone()
            .unwrap_or(SimulationPlan::default().generator),
        model: cfg.model.clone().unwrap_or_default(),
        family: parse_family(cfg.family.as_deref().unwrap_or("KLm"))?,
        n_list: cfg.n_list.clone().unwrap_or_default(),
        runs: cfg.runs.unwrap_or(1000),
        alpha: cfg.alpha.unwrap_or(0.05),
        epsilon_grid: cfg.eps_grid.clone().unwrap_or_default(),
        seed: cfg.seed.unwrap_or(42),
        atoms: cfg.atoms.unwrap_or(10_000),
        estimate: EstimateOptions {
            starts: cfg.starts.unwrap_or(5),
            ..EstimateOptions::default()
        },
    };
    base.validate()?;
    let families: Vec<Divergence> = if cfg.all_families {
        Divergence::NAMED.to_vec()
    } else {
        vec![base.family]
    };
    let mut csv = String::new();
    let mut summaries = Vec::new();
    for (i, family) in families.iter().enumerate() {
        let plan = SimulationPlan {
            family: *family,
            ..base.clone()
        };
        if cfg.verbose {
            let _ = writeln!(
                stderr,
                "simulating {family}: {} cells x {} runs",
                plan.cells(),
                plan.runs
            );
        }
        let cmp = power_comparison(&plan)?;
        let table = cmp.to_csv();
        if cfg.all_families {
            for (j, line) in table.lines().enumerate() {
                if j == 0 {
                    if i == 0 {
                        csv.push_str("family,");
                        csv.push_str(line);
                        csv.push('\n');
                    }
                } else {
                    csv.push_str(&format!("{family},{line}\n"));
                }
            }
        } else {
            csv = table;
        }
        let unreliable: Vec<_> = cmp
            .mc
            .iter()
            .filter(|c| c.unreliable)
            .map(|c| (c.epsilon, c.n))
            .collect();
        summaries.push(json!({
            "family": family,
            "plan": cmp.plan,
            "mc": cmp.mc,
            "approx": cmp.approx,
            "unreliable_cells": unreliable,
        }));
    }
    match &cfg.out {
        Some(path) => {
            write_file(path, &csv)?;
            let doc = json!({"config": cfg, "result": {"csv": path, "studies": summaries}});
            let text =
                serde_json::to_string_pretty(&doc).map_err(|e| CliError::io(e.to_string()))?;
            writeln!(stdout, "{text}").map_err(|e| CliError::io(e.to_string()))?;
        }
        None => {
            write!(stdout, "{csv}").map_err(|e| CliError::io(e.to_string()))?;
        }
    }
    Ok(())
}
