//! `seqdetect` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical degeneracy.

mod commands;
mod config;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{read_config_file, Settings};

/// Errors surfaced by the command-line layer.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(PathBuf, std::io::Error),
    Core(seqdetect::Error),
    Internal(String),
}

impl From<seqdetect::Error> for CliError {
    fn from(e: seqdetect::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use seqdetect::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(..) => 2,
            CliError::Internal(_) => 3,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(E::Config(_) | E::Domain(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "seqdetect", version, about = "Streaming kNN anomaly detection with a calibrated false-alarm threshold")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model on nominal feature vectors.
    Train(TrainArgs),
    /// Derive the detection threshold for a target false-alarm rate.
    Calibrate(CalibrateArgs),
    /// Run the detector over a feature stream.
    Detect(DetectArgs),
    /// Monte Carlo check of the false-alarm period bound.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<String>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<String>,
    /// Also write the training summary here instead of stdout.
    #[arg(long)]
    summary: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Share of the data held out for the distance percentile.
    #[arg(long)]
    fraction: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// power_minus or raw_distance.
    #[arg(long)]
    phi_convention: Option<String>,
    /// motion,location,appearance weights for raw feature files.
    #[arg(long)]
    weights: Option<String>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    far: Option<String>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Calibration report to take `h` from.
    #[arg(long)]
    calibration: Option<String>,
    #[arg(long)]
    far: Option<String>,
    /// Explicit threshold; overrides --calibration and --far.
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    n_end: Option<String>,
    /// skip or floor.
    #[arg(long)]
    empty_frame_policy: Option<String>,
    #[arg(long)]
    weights: Option<String>,
    /// Per-frame statistic CSV.
    #[arg(long)]
    trace: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Take dimension, d_alpha and phi from a trained model.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    d_alpha_pow: Option<String>,
    #[arg(long)]
    phi: Option<String>,
    /// Comma-separated target bound periods e^{w0 h}.
    #[arg(long)]
    periods: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    max_steps: Option<String>,
}

type Pairs = Vec<(&'static str, Option<String>)>;

fn common_pairs(c: &Common) -> Pairs {
    vec![("output", c.output.clone()), ("force", c.force.then(|| "true".to_string()))]
}

fn settings(common: &Common, mut pairs: Pairs) -> Result<Settings, CliError> {
    let file = match &common.config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    pairs.extend(common_pairs(common));
    Ok(Settings::merge(file, pairs))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => commands::train(&settings(
            &a.common,
            vec![
                ("input", a.input),
                ("summary", a.summary),
                ("k", a.k),
                ("alpha", a.alpha),
                ("fraction", a.fraction),
                ("seed", a.seed),
                ("phi_convention", a.phi_convention),
                ("weights", a.weights),
            ],
        )?),
        Command::Calibrate(a) => {
            commands::calibrate_cmd(&settings(&a.common, vec![("model", a.model), ("far", a.far)])?)
        }
        Command::Detect(a) => commands::detect(&settings(
            &a.common,
            vec![
                ("input", a.input),
                ("model", a.model),
                ("calibration", a.calibration),
                ("far", a.far),
                ("threshold", a.threshold),
                ("n_end", a.n_end),
                ("empty_frame_policy", a.empty_frame_policy),
                ("weights", a.weights),
                ("trace", a.trace),
            ],
        )?),
        Command::Simulate(a) => commands::simulate(&settings(
            &a.common,
            vec![
                ("model", a.model),
                ("seed", a.seed),
                ("dim", a.dim),
                ("d_alpha_pow", a.d_alpha_pow),
                ("phi", a.phi),
                ("periods", a.periods),
                ("runs", a.runs),
                ("max_steps", a.max_steps),
            ],
        )?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEQDETECT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("seqdetect: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
