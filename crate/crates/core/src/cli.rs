//! Config-driven experiment runner behind the `optcv` binary.
//!
//! Settings are flat `key=value` pairs resolved in increasing precedence:
//! built-in defaults, `--preset`, the `--config` file, the `OPTCV_SEED`
//! environment variable (seed only) and finally command-line flags. The
//! resolved configuration is validated completely before any computation
//! starts or any file is written.
//!
//! Exit codes: 0 on success, 1 on a numeric or I/O failure, 2 on an invalid
//! configuration.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use crate::covariance::CovarianceSpec;
use crate::designs::{equally_spaced, orthogonal_polynomial_features, DesignMatrix};
use crate::error::Error;
use crate::evaluation::{
    compare_schemes, mcnemar_test, meng_decomposition, Dgp, EstimatorKind, McNemarMode, Scheme,
};
use crate::optimism::{analytic_decomposition, closed_form_equicorrelated_ols, monte_carlo_errors, ErrorDecomposition};
use crate::sampling::{SeededStream, DEFAULT_SEED};
use crate::smoothers::{knn_smoother, ols_smoother, LinearSmoother};
use crate::splitters::{
    kfold, leave_one_group_out, leave_one_out, network_neighborhood_split, non_dependent_cv, temporal_block,
    write_plans_csv, Adjacency, SplitPlan,
};
use crate::stats::variance;
use crate::svg;

/// Environment variable consulted for the seed when `--seed` is absent.
pub const SEED_ENV: &str = "OPTCV_SEED";

/// Failure of a command, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Numeric(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(_) | Self::Io(_) => 1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Library errors raised while checking a configuration are configuration errors.
fn invalid(e: Error) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "optcv", version, about = "Optimism of cross-validation under dependent data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo training, test-set and out-of-sample errors of the paired model.
    Simulate(RunArgs),
    /// Analytic error decomposition (closed form and explicit matrices).
    Analytic(RunArgs),
    /// Materialise a train/test split as CSV.
    Split(RunArgs),
    /// Compare cross-validation schemes against true out-of-sample error.
    Compare(RunArgs),
    /// Auxiliary statistical procedures.
    Stats {
        #[command(subcommand)]
        which: StatsCommand,
    },
}

#[derive(Debug, Subcommand)]
enum StatsCommand {
    /// McNemar's test from the discordant counts b and c.
    Mcnemar {
        #[arg(long)]
        b: u64,
        #[arg(long)]
        c: u64,
        /// `corrected` (continuity-corrected χ²) or `exact` (binomial).
        #[arg(long, default_value = "corrected")]
        mode: String,
    },
    /// Meng's data quality × quantity × difficulty decomposition.
    Meng {
        /// Comma-separated population values.
        #[arg(long)]
        population: String,
        /// Comma-separated response indicators (1/0 or true/false).
        #[arg(long)]
        responded: String,
    },
}

/// Flags shared by the experiment commands; each maps onto a config key.
#[derive(Debug, Default, Args)]
struct RunArgs {
    /// paper-fig-mse, ar1-bergmeir, equicorrelated-cv or network-group.
    #[arg(long)]
    preset: Option<String>,
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    sigma2: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    degree: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    gap: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long = "test-fraction")]
    test_fraction: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Also write histogram.svg (simulate).
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    dgp: Option<String>,
    #[arg(long)]
    estimator: Option<String>,
    /// Comma-separated scheme tags for compare, e.g. `kfold:5,loo,temporal:0.2`.
    #[arg(long)]
    schemes: Option<String>,
    /// Covariance string such as `equicorrelated(sigma2=1, rho=0.5)` (analytic).
    #[arg(long)]
    cov: Option<String>,
    #[arg(long = "cross-rho")]
    cross_rho: Option<String>,
    /// Split scheme: kfold, loo, temporal, nondep, logo or network.
    #[arg(long)]
    scheme: Option<String>,
    /// Which plan of a multi-plan scheme goes to split.csv.
    #[arg(long)]
    fold: Option<String>,
    /// CSV with optional `time` and `group` columns (split).
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    buffer: Option<String>,
    #[arg(long = "group-size")]
    group_size: Option<String>,
}

impl RunArgs {
    fn flag_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |key: &'static str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((key, v.clone()));
            }
        };
        push("seed", &self.seed);
        push("reps", &self.reps);
        push("rho", &self.rho);
        push("phi", &self.phi);
        push("sigma2", &self.sigma2);
        push("n", &self.n);
        push("degree", &self.degree);
        push("beta", &self.beta);
        push("gap", &self.gap);
        push("k", &self.k);
        push("test_fraction", &self.test_fraction);
        push("threads", &self.threads);
        push("out", &self.out);
        push("dgp", &self.dgp);
        push("estimator", &self.estimator);
        push("schemes", &self.schemes);
        push("cov", &self.cov);
        push("cross_rho", &self.cross_rho);
        push("scheme", &self.scheme);
        push("fold", &self.fold);
        push("data", &self.data);
        push("buffer", &self.buffer);
        push("group_size", &self.group_size);
        if self.svg {
            out.push(("svg", "true".into()));
        }
        out
    }
}

const KEYS: &[&str] = &[
    "preset", "dgp", "estimator", "schemes", "n", "degree", "beta", "rho", "phi", "sigma2", "cross_rho",
    "reps", "seed", "gap", "k", "test_fraction", "threads", "out", "svg", "cov", "scheme", "fold", "data",
    "buffer", "group_size", "p_in", "p_out",
];

fn defaults() -> Vec<(&'static str, String)> {
    [
        ("dgp", "equicorrelated"),
        ("estimator", "ols"),
        ("schemes", "kfold:5,loo,temporal:0.2,nondep:5"),
        ("n", "100"),
        ("degree", "20"),
        ("beta", "10"),
        ("rho", "0.5"),
        ("phi", "0.5"),
        ("sigma2", "1"),
        ("reps", "10000"),
        ("gap", "0"),
        ("k", "5"),
        ("test_fraction", "0.2"),
        ("threads", "0"),
        ("out", "."),
        ("svg", "false"),
        ("scheme", "kfold"),
        ("fold", "0"),
        ("buffer", "true"),
        ("group_size", "10"),
        ("p_in", "0.3"),
        ("p_out", "0.02"),
    ]
    .into_iter()
    .map(|(k, v)| (k, v.to_string()))
    .chain(std::iter::once(("seed", DEFAULT_SEED.to_string())))
    .collect()
}

/// Key/value overrides for a named preset.
pub fn preset(name: &str) -> Option<Vec<(&'static str, &'static str)>> {
    let pairs: &[(&str, &str)] = match name {
        // Paired fixed-X OLS simulation: 100 points spaced 0.01 on [0, 1),
        // degree-20 orthogonal polynomials, β = 10, ρ = 0.5, σ² = 1.
        "paper-fig-mse" => &[
            ("dgp", "equicorrelated"),
            ("estimator", "ols"),
            ("n", "100"),
            ("degree", "20"),
            ("beta", "10"),
            ("rho", "0.5"),
            ("sigma2", "1"),
            ("reps", "10000"),
        ],
        "ar1-bergmeir" => &[
            ("dgp", "ar1"),
            ("estimator", "knn:2"),
            ("n", "200"),
            ("phi", "0.8"),
            ("sigma2", "1"),
            ("schemes", "kfold:5,loo,temporal:0.2:0,nondep:5:5"),
            ("reps", "500"),
            ("scheme", "temporal"),
            ("gap", "5"),
        ],
        "equicorrelated-cv" => &[
            ("dgp", "equicorrelated"),
            ("estimator", "ols"),
            ("n", "100"),
            ("degree", "1"),
            ("beta", "10"),
            ("rho", "0.5"),
            ("sigma2", "1"),
            ("schemes", "kfold:5,loo,temporal:0.2:0,nondep:5:2"),
            ("reps", "2000"),
        ],
        "network-group" => &[
            ("n", "60"),
            ("group_size", "10"),
            ("p_in", "0.3"),
            ("p_out", "0.02"),
            ("scheme", "logo"),
            ("test_fraction", "0.2"),
            ("buffer", "true"),
        ],
        _ => return None,
    };
    Some(pairs.to_vec())
}

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected key=value, got `{line}`", lineno + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Whether a split command should use one of the named split schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitScheme {
    KFold,
    Loo,
    Temporal,
    NonDependent,
    Logo,
    Network,
}

impl SplitScheme {
    fn parse(s: &str) -> Result<Self, CliError> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "kfold" => Self::KFold,
            "loo" => Self::Loo,
            "temporal" => Self::Temporal,
            "nondep" => Self::NonDependent,
            "logo" => Self::Logo,
            "network" => Self::Network,
            other => return Err(config_err(format!("unknown split scheme `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpKind {
    Equicorrelated,
    Ar1,
}

/// A fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub dgp: DgpKind,
    pub estimator: EstimatorKind,
    pub schemes: Vec<Scheme>,
    pub n: usize,
    pub degree: usize,
    pub beta: f64,
    pub rho: f64,
    pub phi: f64,
    pub sigma2: f64,
    pub cross_rho: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    pub gap: usize,
    pub k: usize,
    pub test_fraction: f64,
    pub threads: usize,
    pub out: PathBuf,
    pub svg: bool,
    pub cov: Option<String>,
    pub scheme: SplitScheme,
    pub fold: usize,
    pub data: Option<PathBuf>,
    pub buffer: bool,
    pub group_size: usize,
    pub p_in: f64,
    pub p_out: f64,
}

fn get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str, CliError> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| config_err(format!("missing `{key}`")))
}

fn num<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, CliError> {
    let v = get(map, key)?;
    v.parse()
        .map_err(|_| config_err(format!("`{key}` has invalid value `{v}`")))
}

fn boolean(map: &BTreeMap<String, String>, key: &str) -> Result<bool, CliError> {
    match get(map, key)?.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(config_err(format!("`{key}` expects a boolean, got `{other}`"))),
    }
}

impl ExperimentConfig {
    /// Resolves layers of settings, later layers winning.
    pub fn resolve(
        preset_name: Option<&str>,
        file: &[(String, String)],
        env_seed: Option<&str>,
        flags: &[(&str, String)],
    ) -> Result<Self, CliError> {
        let mut map: BTreeMap<String, String> =
            defaults().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let file_preset = file.iter().rev().find(|(k, _)| k == "preset").map(|(_, v)| v.as_str());
        let preset_name = preset_name.or(file_preset);
        if let Some(name) = preset_name {
            let pairs = preset(name).ok_or_else(|| config_err(format!("unknown preset `{name}`")))?;
            for (k, v) in pairs {
                map.insert(k.to_string(), v.to_string());
            }
            map.insert("preset".into(), name.to_string());
        }
        for (k, v) in file {
            if k != "preset" {
                map.insert(k.clone(), v.clone());
            }
        }
        if let Some(seed) = env_seed {
            map.insert("seed".into(), seed.to_string());
        }
        for (k, v) in flags {
            map.insert(k.to_string(), v.clone());
        }
        if let Some(bad) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(config_err(format!("unknown key `{bad}`")));
        }
        Self::from_map(&map)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let dgp = match get(map, "dgp")?.to_ascii_lowercase().as_str() {
            "equicorrelated" => DgpKind::Equicorrelated,
            "ar1" => DgpKind::Ar1,
            other => return Err(config_err(format!("unknown dgp `{other}`"))),
        };
        let gap: usize = num(map, "gap")?;
        let schemes = get(map, "schemes")?
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| Scheme::parse(s, gap).map_err(invalid))
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = Self {
            preset: map.get("preset").cloned(),
            dgp,
            estimator: get(map, "estimator")?.parse().map_err(invalid)?,
            schemes,
            n: num(map, "n")?,
            degree: num(map, "degree")?,
            beta: num(map, "beta")?,
            rho: num(map, "rho")?,
            phi: num(map, "phi")?,
            sigma2: num(map, "sigma2")?,
            cross_rho: map.get("cross_rho").map(|_| num(map, "cross_rho")).transpose()?,
            reps: num(map, "reps")?,
            seed: num(map, "seed")?,
            gap,
            k: num(map, "k")?,
            test_fraction: num(map, "test_fraction")?,
            threads: num(map, "threads")?,
            out: PathBuf::from(get(map, "out")?),
            svg: boolean(map, "svg")?,
            cov: map.get("cov").cloned(),
            scheme: SplitScheme::parse(get(map, "scheme")?)?,
            fold: num(map, "fold")?,
            data: map.get("data").map(PathBuf::from),
            buffer: boolean(map, "buffer")?,
            group_size: num(map, "group_size")?,
            p_in: num(map, "p_in")?,
            p_out: num(map, "p_out")?,
        };
        for (key, v) in [("beta", cfg.beta), ("rho", cfg.rho), ("phi", cfg.phi), ("sigma2", cfg.sigma2)] {
            if !v.is_finite() {
                return Err(config_err(format!("`{key}` must be finite")));
            }
        }
        if !(0.0..=1.0).contains(&cfg.p_in) || !(0.0..=1.0).contains(&cfg.p_out) {
            return Err(config_err("edge probabilities must lie in [0, 1]"));
        }
        Ok(cfg)
    }

    fn header(&self, command: &str) -> String {
        let mut s = format!("optcv {command}\n");
        if let Some(p) = &self.preset {
            let _ = writeln!(s, "preset: {p}");
        }
        s
    }

    fn polynomial_design(&self) -> Result<DesignMatrix, CliError> {
        if self.n == 0 {
            return Err(config_err("n must be at least 1"));
        }
        orthogonal_polynomial_features(&equally_spaced(self.n, 1.0 / self.n as f64), self.degree).map_err(invalid)
    }

    fn smoother(&self, x: &DesignMatrix) -> Result<LinearSmoother, CliError> {
        match self.estimator {
            EstimatorKind::Ols => ols_smoother(x).map_err(invalid),
            EstimatorKind::Knn(k) => knn_smoother(x.nrows(), k, None).map_err(invalid),
        }
    }

    fn effective_cross_rho(&self, cov: &CovarianceSpec) -> f64 {
        self.cross_rho.unwrap_or(match cov {
            CovarianceSpec::Equicorrelated { rho, .. } | CovarianceSpec::PairedCross { rho, .. } => *rho,
            _ => 0.0,
        })
    }
}

/// Runs the CLI on explicit arguments, reading `OPTCV_SEED` from the process
/// environment, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_env(args, std::env::var(SEED_ENV).ok())
}

/// As [`run`] with the environment seed supplied by the caller.
pub fn run_with_env<I, T>(args: I, env_seed: Option<String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli, env_seed.as_deref()) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("optcv: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, env_seed: Option<&str>) -> Result<String, CliError> {
    let (command, args) = match cli.command {
        Command::Stats { which } => return cmd_stats(which),
        Command::Simulate(a) => ("simulate", a),
        Command::Analytic(a) => ("analytic", a),
        Command::Split(a) => ("split", a),
        Command::Compare(a) => ("compare", a),
    };
    let file = match &args.config {
        Some(path) => parse_config_text(
            &fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?,
        )?,
        None => Vec::new(),
    };
    let cfg = ExperimentConfig::resolve(args.preset.as_deref(), &file, env_seed, &args.flag_pairs())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| config_err(format!("cannot build thread pool: {e}")))?;
    pool.install(|| match command {
        "simulate" => cmd_simulate(&cfg),
        "analytic" => cmd_analytic(&cfg),
        "split" => cmd_split(&cfg),
        _ => cmd_compare(&cfg),
    })
}

fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), bytes)?;
    Ok(())
}

fn decomposition_table(d: &ErrorDecomposition) -> String {
    let mut s = String::new();
    for (name, v) in d.fields() {
        let _ = writeln!(s, "{name:<20} {v:.12}");
    }
    s
}

/// Monte Carlo errors of the paired model; writes `errors.csv`,
/// `summary.txt` and optionally `histogram.svg`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<String, CliError> {
    if cfg.reps == 0 {
        return Err(config_err("reps must be at least 1"));
    }
    if cfg.dgp != DgpKind::Equicorrelated {
        return Err(config_err("simulate runs the paired equicorrelated model; set dgp=equicorrelated"));
    }
    let x = cfg.polynomial_design()?;
    let beta = DVector::from_element(cfg.degree + 1, cfg.beta);
    let marginal = CovarianceSpec::Equicorrelated { sigma2: cfg.sigma2, rho: cfg.rho, n: cfg.n };
    let cross_rho = cfg.effective_cross_rho(&marginal);
    let cov = CovarianceSpec::PairedCross { sigma2: cfg.sigma2, rho: cfg.rho, n: cfg.n, cross_rho };
    cov.validate().map_err(invalid)?;
    let smoother = cfg.smoother(&x)?;

    let started = Instant::now();
    let errors = monte_carlo_errors(&x, &beta, &cov, &smoother, cfg.reps, cfg.seed)?;
    let elapsed = started.elapsed();
    let mu = x.mean_response(&beta)?;
    let cross = DMatrix::from_element(cfg.n, cfg.n, cross_rho * cfg.sigma2);
    let analytic = analytic_decomposition(&mu, &smoother, &marginal.materialize()?, Some(&cross))?;

    let mut summary = cfg.header("simulate");
    let _ = writeln!(
        summary,
        "n = {}, degree = {}, beta = {}, rho = {}, cross_rho = {}, sigma2 = {}, estimator = {}, reps = {}, seed = {}",
        cfg.n, cfg.degree, cfg.beta, cfg.rho, cross_rho, cfg.sigma2, cfg.estimator, cfg.reps, cfg.seed
    );
    let _ = writeln!(summary, "\n{:<10} {:>14} {:>12} {:>14} {:>14}", "error", "mc_mean", "mc_se", "analytic", "mc_variance");
    for (name, values, s, a) in [
        ("train", &errors.train, errors.train_summary(), analytic.expected_train),
        ("test", &errors.test, errors.test_summary(), analytic.expected_test),
        ("oos", &errors.oos, errors.oos_summary(), analytic.expected_oos),
    ] {
        let _ = writeln!(
            summary,
            "{name:<10} {:>14.6} {:>12.6} {:>14.6} {:>14.6}",
            s.mean,
            s.mc_se,
            a,
            variance(values)
        );
    }
    let _ = writeln!(summary, "\nanalytic decomposition\n{}", decomposition_table(&analytic));

    let mut csv = Vec::new();
    errors.write_csv(&mut csv)?;
    write_output(&cfg.out, "errors.csv", &csv)?;
    write_output(&cfg.out, "summary.txt", summary.as_bytes())?;
    if cfg.svg {
        let svg = svg::overlaid_histograms(
            &format!("Distribution of MSE over {} replications", cfg.reps),
            &[("train", &errors.train), ("test", &errors.test), ("out-of-sample", &errors.oos)],
        );
        write_output(&cfg.out, "histogram.svg", svg.as_bytes())?;
    }
    Ok(format!("{summary}elapsed: {:.2}s\n", elapsed.as_secs_f64()))
}

/// Analytic decomposition; writes `decomposition.txt`.
pub fn cmd_analytic(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let x = cfg.polynomial_design()?;
    let beta = DVector::from_element(cfg.degree + 1, cfg.beta);
    let cov = match &cfg.cov {
        Some(text) => CovarianceSpec::parse(text, cfg.n).map_err(invalid)?,
        None => CovarianceSpec::Equicorrelated { sigma2: cfg.sigma2, rho: cfg.rho, n: cfg.n },
    };
    let cross_rho = cfg.effective_cross_rho(&cov);
    let marginal = cov.marginal();
    let sigma = marginal.materialize().map_err(invalid)?;
    if sigma.nrows() != cfg.n {
        return Err(config_err(format!("covariance dimension {} does not match n = {}", sigma.nrows(), cfg.n)));
    }
    let smoother = cfg.smoother(&x)?;
    let closed_form = match (&marginal, cfg.estimator) {
        (CovarianceSpec::Equicorrelated { sigma2, rho, n }, EstimatorKind::Ols) if cross_rho == *rho => {
            Some(closed_form_equicorrelated_ols(*n, cfg.degree, *rho, *sigma2).map_err(invalid)?)
        }
        _ => None,
    };

    let mu = x.mean_response(&beta)?;
    let cross = DMatrix::from_element(cfg.n, cfg.n, cross_rho * marginal.sigma2());
    let matrices = analytic_decomposition(&mu, &smoother, &sigma, Some(&cross))?;

    let mut report = cfg.header("analytic");
    let _ = writeln!(
        report,
        "n = {}, degree = {}, covariance = {marginal}, cross_rho = {cross_rho}, estimator = {}\n",
        cfg.n, cfg.degree, cfg.estimator
    );
    if let Some(cf) = &closed_form {
        let _ = writeln!(report, "closed form\n{}", decomposition_table(cf));
    }
    let _ = writeln!(report, "matrix form\n{}", decomposition_table(&matrices));
    if let Some(cf) = &closed_form {
        let _ = writeln!(report, "max |closed form - matrix form| = {:e}", cf.max_abs_diff(&matrices));
    }
    write_output(&cfg.out, "decomposition.txt", report.as_bytes())?;
    Ok(report)
}

/// Optional `time` and `group` columns of a split input file.
#[derive(Debug, Default)]
struct SplitData {
    rows: usize,
    time: Option<Vec<f64>>,
    group: Option<Vec<String>>,
}

fn read_split_data(path: &Path) -> Result<SplitData, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| config_err("data file is empty"))?
        .split(',')
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let time_col = header.iter().position(|h| h == "time");
    let group_col = header.iter().position(|h| h == "group");
    let mut data = SplitData::default();
    let (mut time, mut group) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(config_err(format!("data row {} has {} fields, expected {}", i + 1, fields.len(), header.len())));
        }
        if let Some(c) = time_col {
            time.push(
                fields[c]
                    .parse::<f64>()
                    .map_err(|_| config_err(format!("data row {}: bad time `{}`", i + 1, fields[c])))?,
            );
        }
        if let Some(c) = group_col {
            group.push(fields[c].to_string());
        }
        data.rows += 1;
    }
    data.time = time_col.map(|_| time);
    data.group = group_col.map(|_| group);
    Ok(data)
}

/// Community graph: edges within consecutive groups of `group_size` with
/// probability `p_in`, across groups with `p_out`.
pub fn community_graph(n: usize, group_size: usize, p_in: f64, p_out: f64, stream: &mut SeededStream) -> Adjacency {
    let group = |i: usize| i / group_size.max(1);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if group(i) == group(j) { p_in } else { p_out };
            if stream.uniform() <= p && p > 0.0 {
                edges.push((i, j));
            }
        }
    }
    Adjacency::from_edges(n, &edges).expect("generated edges are in range")
}

/// Materialises a split; writes `split.csv` (plan `fold`) and `splits.csv`
/// (every plan), plus `network.csv` for network splits.
pub fn cmd_split(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let data = cfg.data.as_deref().map(read_split_data).transpose()?;
    let n = data.as_ref().map_or(cfg.n, |d| d.rows);
    if n < 2 {
        return Err(config_err("split needs at least 2 observations"));
    }
    let order: Option<Vec<usize>> = data.as_ref().and_then(|d| d.time.as_ref()).map(|t| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| t[a].total_cmp(&t[b]).then(a.cmp(&b)));
        idx
    });
    let in_time = |plans: Vec<SplitPlan>| -> Result<Vec<SplitPlan>, CliError> {
        match &order {
            Some(o) => plans.iter().map(|p| p.remap(o).map_err(invalid)).collect(),
            None => Ok(plans),
        }
    };

    let mut edges_csv = None;
    let plans = match cfg.scheme {
        SplitScheme::KFold => kfold(n, cfg.k, &mut SeededStream::new(cfg.seed, 0)).map_err(invalid)?,
        SplitScheme::Loo => leave_one_out(n).map_err(invalid)?,
        SplitScheme::Temporal => in_time(vec![temporal_block(n, cfg.test_fraction, cfg.gap).map_err(invalid)?])?,
        SplitScheme::NonDependent => in_time(non_dependent_cv(n, cfg.k, cfg.gap).map_err(invalid)?)?,
        SplitScheme::Logo => match data.as_ref().and_then(|d| d.group.as_ref()) {
            Some(labels) => leave_one_group_out(labels).map_err(invalid)?,
            None => {
                let labels: Vec<usize> = (0..n).map(|i| i / cfg.group_size.max(1)).collect();
                leave_one_group_out(&labels).map_err(invalid)?
            }
        },
        SplitScheme::Network => {
            let graph = community_graph(n, cfg.group_size, cfg.p_in, cfg.p_out, &mut SeededStream::new(cfg.seed, 0));
            let plan = network_neighborhood_split(&graph, cfg.test_fraction, cfg.buffer, &mut SeededStream::new(cfg.seed, 1))
                .map_err(invalid)?;
            let mut csv = String::from("source,target\n");
            for i in 0..n {
                for &j in graph.neighbours(i).iter().filter(|&&j| j > i) {
                    let _ = writeln!(csv, "{i},{j}");
                }
            }
            edges_csv = Some(csv);
            vec![plan]
        }
    };
    let chosen = plans
        .get(cfg.fold)
        .ok_or_else(|| config_err(format!("fold {} out of range: scheme has {} plans", cfg.fold, plans.len())))?;

    let mut one = Vec::new();
    chosen.write_csv(&mut one)?;
    let mut all = Vec::new();
    write_plans_csv(&plans, &mut all)?;
    write_output(&cfg.out, "split.csv", &one)?;
    write_output(&cfg.out, "splits.csv", &all)?;
    if let Some(csv) = edges_csv {
        write_output(&cfg.out, "network.csv", csv.as_bytes())?;
    }
    let mut report = cfg.header("split");
    let _ = writeln!(report, "scheme {:?}: {} plan(s) over n = {n}", cfg.scheme, plans.len());
    let _ = writeln!(
        report,
        "plan {}: train {}, test {}, discarded {}",
        cfg.fold,
        chosen.train().len(),
        chosen.test().len(),
        chosen.discarded().len()
    );
    Ok(report)
}

/// Scheme comparison; writes `comparison.csv`.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<String, CliError> {
    if cfg.reps == 0 {
        return Err(config_err("reps must be at least 1"));
    }
    if cfg.schemes.is_empty() {
        return Err(config_err("no schemes given"));
    }
    let dgp = match cfg.dgp {
        DgpKind::Ar1 => Dgp::Ar1 { n: cfg.n, phi: cfg.phi, sigma2: cfg.sigma2 },
        DgpKind::Equicorrelated => Dgp::Equicorrelated {
            n: cfg.n,
            degree: cfg.degree,
            beta: cfg.beta,
            rho: cfg.rho,
            sigma2: cfg.sigma2,
        },
    };
    // Validate the DGP and every scheme with a single replication first.
    compare_schemes(&dgp, cfg.estimator, &cfg.schemes, 1, cfg.seed).map_err(invalid)?;
    let cmp = compare_schemes(&dgp, cfg.estimator, &cfg.schemes, cfg.reps, cfg.seed)?;

    let mut csv = Vec::new();
    cmp.write_csv(&mut csv)?;
    write_output(&cfg.out, "comparison.csv", &csv)?;

    let mut report = cfg.header("compare");
    let _ = writeln!(report, "dgp = {dgp:?}, estimator = {}, reps = {}, seed = {}\n", cfg.estimator, cfg.reps, cfg.seed);
    let _ = writeln!(report, "{:<18} {:>12} {:>10} {:>14} {:>10}", "scheme", "mean", "mc_se", "minus_true", "diff_se");
    for (i, s) in cmp.schemes.iter().enumerate() {
        let sum = cmp.summary(i);
        let bias = cmp.bias_summary(i);
        let _ = writeln!(
            report,
            "{:<18} {:>12.6} {:>10.6} {:>14.6} {:>10.6}",
            s.to_string(),
            sum.mean,
            sum.mc_se,
            bias.mean,
            bias.mc_se
        );
    }
    let t = cmp.true_summary();
    let _ = writeln!(report, "{:<18} {:>12.6} {:>10.6}", "true_oos", t.mean, t.mc_se);
    Ok(report)
}

fn parse_list<T>(text: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).ok_or_else(|| config_err(format!("bad {what} value `{s}`"))))
        .collect()
}

fn cmd_stats(which: StatsCommand) -> Result<String, CliError> {
    match which {
        StatsCommand::Mcnemar { b, c, mode } => {
            let mode: McNemarMode = mode.parse().map_err(invalid)?;
            let r = mcnemar_test(b, c, mode).map_err(invalid)?;
            Ok(format!(
                "mcnemar b = {b}, c = {c}, mode = {mode:?}\nstatistic = {:.12}\np_value = {:.12}\n",
                r.statistic, r.p_value
            ))
        }
        StatsCommand::Meng { population, responded } => {
            let pop = parse_list(&population, "population", |s| s.parse::<f64>().ok())?;
            let resp = parse_list(&responded, "responded", |s| match s.to_ascii_lowercase().as_str() {
                "1" | "true" | "t" | "yes" => Some(true),
                "0" | "false" | "f" | "no" => Some(false),
                _ => None,
            })?;
            let d = meng_decomposition(&pop, &resp).map_err(invalid)?;
            let quality = d.data_quality.map_or("undefined".to_string(), |q| format!("{q:.12}"));
            Ok(format!(
                "meng N = {}, n = {}\ndata_quality = {quality}\ndata_quantity = {:.12}\ndifficulty = {:.12}\nerror = {:.12}\nidentity_residual = {:e}\n",
                pop.len(),
                resp.iter().filter(|&&r| r).count(),
                d.data_quantity,
                d.difficulty,
                d.error,
                d.identity_residual()
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_defaults_preset_file_env_flags() {
        let cfg = ExperimentConfig::resolve(None, &[], None, &[]).unwrap();
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.n, 100);

        let cfg = ExperimentConfig::resolve(Some("ar1-bergmeir"), &[], None, &[]).unwrap();
        assert_eq!((cfg.dgp, cfg.n, cfg.estimator), (DgpKind::Ar1, 200, EstimatorKind::Knn(2)));

        let file = vec![("n".to_string(), "150".to_string()), ("seed".to_string(), "3".to_string())];
        let cfg = ExperimentConfig::resolve(Some("ar1-bergmeir"), &file, None, &[]).unwrap();
        assert_eq!((cfg.n, cfg.seed), (150, 3));
        let cfg = ExperimentConfig::resolve(None, &file, Some("9"), &[]).unwrap();
        assert_eq!(cfg.seed, 9);
        let cfg = ExperimentConfig::resolve(None, &file, Some("9"), &[("seed", "11".into())]).unwrap();
        assert_eq!(cfg.seed, 11);
    }

    #[test]
    fn preset_in_config_file() {
        let file = parse_config_text("# comment\npreset = paper-fig-mse\nreps=20 # inline\n").unwrap();
        let cfg = ExperimentConfig::resolve(None, &file, None, &[]).unwrap();
        assert_eq!(cfg.preset.as_deref(), Some("paper-fig-mse"));
        assert_eq!(cfg.reps, 20);
    }

    #[test]
    fn invalid_configs_are_exit_2() {
        for (preset, flags) in [
            (Some("nope"), vec![]),
            (None, vec![("reps", "-1".to_string())]),
            (None, vec![("dgp", "garch".to_string())]),
            (None, vec![("schemes", "kfold".to_string())]),
            (None, vec![("estimator", "knn:3".to_string())]),
            (None, vec![("svg", "maybe".to_string())]),
        ] {
            let err = ExperimentConfig::resolve(preset, &[], None, &flags).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{err}");
        }
        let err = ExperimentConfig::resolve(None, &[("colour".into(), "red".into())], None, &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(parse_config_text("no equals sign").is_err());
    }

    #[test]
    fn simulate_validation_happens_before_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sim");
        let flags = vec![("reps", "0".to_string()), ("out", out.display().to_string())];
        let cfg = ExperimentConfig::resolve(Some("paper-fig-mse"), &[], None, &flags).unwrap();
        assert_eq!(cmd_simulate(&cfg).unwrap_err().exit_code(), 2);
        let flags = vec![("rho", "-0.5".to_string()), ("out", out.display().to_string())];
        let cfg = ExperimentConfig::resolve(Some("paper-fig-mse"), &[], None, &flags).unwrap();
        assert_eq!(cmd_simulate(&cfg).unwrap_err().exit_code(), 2);
        assert!(!out.exists());
    }

    #[test]
    fn community_graph_is_deterministic() {
        let a = community_graph(30, 10, 0.5, 0.0, &mut SeededStream::new(1, 0));
        let b = community_graph(30, 10, 0.5, 0.0, &mut SeededStream::new(1, 0));
        assert_eq!(a, b);
        for i in 0..30 {
            assert!(a.neighbours(i).iter().all(|&j| j / 10 == i / 10));
        }
    }

    #[test]
    fn stats_reports() {
        let r = cmd_stats(StatsCommand::Mcnemar { b: 10, c: 2, mode: "corrected".into() }).unwrap();
        assert!(r.contains("statistic = 4.083333333333"));
        let e = cmd_stats(StatsCommand::Mcnemar { b: 0, c: 0, mode: "exact".into() }).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let r = cmd_stats(StatsCommand::Meng { population: "1,2,3,4".into(), responded: "1,1,0,0".into() }).unwrap();
        assert!(r.contains("error = -1.000000000000"));
        assert!(cmd_stats(StatsCommand::Meng { population: "1,x".into(), responded: "1,0".into() }).is_err());
    }
}
