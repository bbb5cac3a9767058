//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use thiserror::Error;

use crate::delay::DelayModel;
use crate::error::SimError;
use crate::metrics::check_mutual_exclusion;
use crate::report::{emit_report, Format};
use crate::scenario::{run, Algorithm, Regime, RunResult, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_LIVENESS: i32 = 3;
pub const EXIT_SAFETY: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Central,
    Ring,
    Raymond,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Unloaded,
    Loaded,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Table,
    Json,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Table => Format::Table,
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

fn parse_seed(raw: &str) -> Result<u64, String> {
    if raw == "random" {
        return Ok(rand::random());
    }
    raw.parse()
        .map_err(|_| format!("expected an unsigned integer or `random`, got `{raw}`"))
}

fn parse_non_negative(raw: &str) -> Result<f64, String> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("expected a finite non-negative number, got `{raw}`")),
    }
}

fn parse_positive(raw: &str) -> Result<f64, String> {
    match parse_non_negative(raw)? {
        v if v > 0.0 => Ok(v),
        _ => Err("expected a positive number".into()),
    }
}

/// Simulate central-server, token-ring and Raymond mutual exclusion and report
/// client delay (unloaded) and synchronization delay (loaded).
#[derive(Debug, Parser)]
#[command(name = "mutex-sim", version)]
pub struct Cli {
    #[arg(long, value_enum, default_value = "all")]
    pub algorithm: AlgorithmArg,

    #[arg(long, value_enum, default_value = "both")]
    pub regime: RegimeArg,

    /// Number of client nodes.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(2..))]
    pub nodes: u64,

    /// Samples per metric.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,

    /// Master seed, or `random`.
    #[arg(long, default_value = "42", value_parser = parse_seed)]
    pub seed: u64,

    /// Time spent inside the critical section (ms).
    #[arg(long = "cs-ms", default_value_t = 0.0, value_parser = parse_non_negative)]
    pub cs_ms: f64,

    #[arg(long, default_value_t = 30.0, value_parser = parse_non_negative)]
    pub net_mean: f64,

    #[arg(long, default_value_t = 5.0, value_parser = parse_non_negative)]
    pub net_std: f64,

    #[arg(long, default_value_t = 15.0, value_parser = parse_non_negative)]
    pub proc_mean: f64,

    #[arg(long, default_value_t = 2.0, value_parser = parse_non_negative)]
    pub proc_std: f64,

    #[arg(long, default_value_t = 40.0, value_parser = parse_non_negative)]
    pub server_coeff: f64,

    #[arg(long = "server-div", default_value_t = 10.0, value_parser = parse_positive)]
    pub server_div: f64,

    #[arg(long, value_enum, default_value = "table")]
    pub format: FormatArg,

    /// Write output here instead of stdout. With several runs in csv format,
    /// one file per run is written as `<stem>-<algorithm>-<regime>.<ext>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub configs: Vec<ScenarioConfig<f64>>,
    pub format: Format,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("mutual exclusion violated in {algorithm}/{regime}: {detail}")]
    Safety {
        algorithm: Algorithm,
        regime: Regime,
        detail: String,
    },
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(e) if !e.use_stderr() => EXIT_OK,
            CliError::Usage(_) | CliError::BadRequest(_) => EXIT_USAGE,
            CliError::Simulation(e) if e.is_liveness() => EXIT_LIVENESS,
            CliError::Simulation(e) if e.is_safety() => EXIT_SAFETY,
            CliError::Safety { .. } => EXIT_SAFETY,
            CliError::Simulation(_) | CliError::Io { .. } => EXIT_FAILURE,
        }
    }
}

pub fn parse_args<I, S>(argv: I) -> Result<Invocation, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let algorithms: Vec<Algorithm> = match cli.algorithm {
        AlgorithmArg::Central => vec![Algorithm::Central],
        AlgorithmArg::Ring => vec![Algorithm::Ring],
        AlgorithmArg::Raymond => vec![Algorithm::Raymond],
        AlgorithmArg::All => Algorithm::ALL.to_vec(),
    };
    let regimes: Vec<Regime> = match cli.regime {
        RegimeArg::Unloaded => vec![Regime::Unloaded],
        RegimeArg::Loaded => vec![Regime::Loaded],
        RegimeArg::Both => Regime::ALL.to_vec(),
    };
    let n = usize::try_from(cli.nodes).map_err(|_| CliError::BadRequest("--nodes too large".into()))?;
    let trials = usize::try_from(cli.trials).map_err(|_| CliError::BadRequest("--trials too large".into()))?;
    let delays = DelayModel {
        net_mean: cli.net_mean,
        net_std: cli.net_std,
        proc_mean: cli.proc_mean,
        proc_std: cli.proc_std,
        server_coeff: cli.server_coeff,
        server_divisor: cli.server_div,
        n,
    };
    let mut configs = Vec::new();
    for &algorithm in &algorithms {
        for &regime in &regimes {
            configs.push(ScenarioConfig {
                algorithm,
                regime,
                n,
                trials,
                seed: cli.seed,
                cs_duration: cli.cs_ms,
                delays,
                check_invariants: false,
            });
        }
    }
    let format = cli.format.into();
    if format == Format::Csv && configs.len() > 1 && cli.out.is_none() {
        return Err(CliError::BadRequest(
            "csv output of several runs needs --out, or a single --algorithm and --regime".into(),
        ));
    }
    Ok(Invocation {
        configs,
        format,
        out: cli.out,
    })
}

/// Runs every configuration on its own thread and checks each log for safety.
pub fn execute(configs: &[ScenarioConfig<f64>]) -> Result<Vec<RunResult<f64>>, CliError> {
    let outcomes: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| scope.spawn(move || run(cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let mut results = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let result = outcome?;
        if let Err(v) = check_mutual_exclusion(&result.log) {
            return Err(CliError::Safety {
                algorithm: result.config.algorithm,
                regime: result.config.regime,
                detail: v.to_string(),
            });
        }
        results.push(result);
    }
    Ok(results)
}

fn write_to(path: &Path, results: &[RunResult<f64>], format: Format) -> Result<usize, CliError> {
    let io_err = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = File::create(path).map_err(io_err)?;
    emit_report(results, format, &mut file).map_err(io_err)
}

fn per_run_path(base: &Path, result: &RunResult<f64>) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("samples");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!(
        "{stem}-{}-{}.{ext}",
        result.config.algorithm, result.config.regime
    ))
}

/// Parses, runs and reports. Returns the process exit status.
pub fn run_cli<I, S, W>(argv: I, stdout: &mut W, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
    W: Write,
{
    match try_run(argv, stdout) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(e)) => {
            let rendered = e.render().to_string();
            let code = CliError::Usage(e).exit_code();
            if code == EXIT_OK {
                let _ = stdout.write_all(rendered.as_bytes());
            } else {
                let _ = stderr.write_all(rendered.as_bytes());
            }
            code
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn try_run<I, S, W>(argv: I, stdout: &mut W) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
    W: Write,
{
    let inv = parse_args(argv)?;
    let results = execute(&inv.configs)?;
    match &inv.out {
        None => {
            emit_report(&results, inv.format, stdout).map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            })?;
        }
        Some(path) if inv.format == Format::Csv && results.len() > 1 => {
            for r in &results {
                write_to(&per_run_path(path, r), std::slice::from_ref(r), inv.format)?;
            }
        }
        Some(path) => {
            write_to(path, &results, inv.format)?;
        }
    }
    Ok(())
}
