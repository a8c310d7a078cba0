//! Command-line front end: `run`, `score` and `report`.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage or configuration
//! error, 3 device failure, 4 I/O failure. Errors are printed to stderr as a
//! single `error: kind=<kind>: <message>` line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::analysis::{feasibility_fraction, write_report, AnalysisError, Scope};
use crate::config::{AcquisitionChoice, ConfigError, ExperimentConfig};
use crate::devices::{device_from_spec, DeviceError, FileAdapterOptions};
use crate::experiment::{run_experiment, LoopError, RunOptions};
use crate::space::{ParameterDef, ParameterSpace};
use crate::state::{ExperimentState, StateError};
use crate::vision::{score, DropletImage, ScoreOpts, SegOpts, VisionError};

pub const LOG_ENV: &str = "DROPLET_BO_LOG";
pub const STATE_FILE: &str = "state.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(name = "droplet-bo", version, about = "Bayesian optimization of droplet generators scored by computer vision")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an optimization experiment against a device.
    Run(RunArgs),
    /// Score one droplet image and print its losses.
    Score(ScoreArgs),
    /// Write analysis artifacts for a saved experiment.
    Report(ReportArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// inkjet-sim, microfluidic-sim or files:<dir>.
    #[arg(long, default_value = "inkjet-sim")]
    pub device: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for the state file, report and data files.
    #[arg(long, default_value = "droplet-run")]
    pub out: PathBuf,
    /// Worker threads (default: logical CPUs).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_parser = ["ei", "mpi", "lcb"], ignore_case = true)]
    pub acquisition: Option<String>,
    /// β for LCB.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Continue from <out>/state.json if it exists.
    #[arg(long)]
    pub resume: bool,
    /// Stop after the given batch completes.
    #[arg(long, hide = true)]
    pub stop_after_batch: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct ScoreArgs {
    pub image: PathBuf,
    /// Yield normalization constant.
    #[arg(long, default_value_t = 50)]
    pub count_max: u32,
    /// Take segmentation options from this experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Settings for the `files:<dir>` device, read from a `[files]` table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesBlock {
    pub parameters: Vec<ParameterDef>,
    #[serde(default = "default_poll")]
    pub poll_interval_secs: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_poll() -> f64 {
    1.0
}

fn default_timeout() -> f64 {
    24.0 * 3600.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub files: Option<FilesBlock>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error: kind={}: {}", self.kind, self.message)
    }
}

impl CliError {
    fn new(code: i32, kind: &'static str, message: impl std::fmt::Display) -> Self {
        Self {
            code,
            kind,
            message: message.to_string().replace('\n', " "),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new(2, "config", format!("field={}: {}", e.field, e.reason))
    }
}

impl From<StateError> for CliError {
    fn from(e: StateError) -> Self {
        match e {
            StateError::Io { .. } => CliError::new(4, "io", e),
            _ => CliError::new(2, "state", e),
        }
    }
}

impl From<DeviceError> for CliError {
    fn from(e: DeviceError) -> Self {
        match e {
            DeviceError::UnknownDevice(_) | DeviceError::Space(_) => CliError::new(2, "usage", e),
            DeviceError::Io { .. } => CliError::new(4, "io", e),
            _ => CliError::new(3, "device", e),
        }
    }
}

impl From<LoopError> for CliError {
    fn from(e: LoopError) -> Self {
        match e {
            LoopError::Config(c) => c.into(),
            LoopError::State(s) => s.into(),
            LoopError::Device { .. } | LoopError::Sample { .. } | LoopError::Vision { .. } => CliError::new(3, "device", e),
            LoopError::Resume(_) | LoopError::SpaceMismatch { .. } => CliError::new(2, "state", e),
            _ => CliError::new(1, "internal", e),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Io { .. } => CliError::new(4, "io", e),
            _ => CliError::new(2, "analysis", e),
        }
    }
}

fn quoted_after<'a>(msg: &'a str, marker: &str) -> Option<&'a str> {
    let start = msg.find(marker)? + marker.len();
    let rest = &msg[start..];
    rest.find('`').map(|end| &rest[..end])
}

/// Parses a TOML config: the experiment fields at top level plus an optional
/// `[files]` table. Missing or unknown fields are reported by name.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::new("<file>", e.message()))?;
    let files = match table.remove("files") {
        Some(v) => Some(
            FilesBlock::deserialize(v).map_err(|e| ConfigError::new("files", e.to_string().trim().to_string()))?,
        ),
        None => None,
    };
    let experiment = ExperimentConfig::deserialize(toml::Value::Table(table)).map_err(|e| {
        let msg = e.to_string();
        if let Some(field) = quoted_after(&msg, "missing field `") {
            ConfigError::new(field, "missing required field")
        } else if let Some(field) = quoted_after(&msg, "unknown field `") {
            ConfigError::new(field, "unknown field")
        } else {
            ConfigError::new("<file>", msg.trim().to_string())
        }
    })?;
    experiment.validate()?;
    Ok(RunConfig { experiment, files })
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::new(4, "io", format!("{}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => RunConfig {
            experiment: ExperimentConfig::default(),
            files: None,
        },
    };
    if let Some(a) = &args.acquisition {
        cfg.experiment.acquisition = a.parse::<AcquisitionChoice>()?;
    }
    if let Some(beta) = args.beta {
        cfg.experiment.lcb_beta = beta;
    }
    cfg.experiment.validate()?;

    let (file_space, file_opts) = match &cfg.files {
        Some(f) => {
            let space = ParameterSpace::new(f.parameters.clone()).map_err(|e| ConfigError::new("files.parameters", e.to_string()))?;
            let secs = |v: f64, field: &str| {
                if v > 0.0 && v.is_finite() {
                    Ok(Duration::from_secs_f64(v))
                } else {
                    Err(ConfigError::new(field, "must be a positive number of seconds"))
                }
            };
            let opts = FileAdapterOptions {
                poll_interval: secs(f.poll_interval_secs, "files.poll_interval_secs")?,
                timeout: secs(f.timeout_secs, "files.timeout_secs")?,
            };
            (Some(space), opts)
        }
        None => (None, FileAdapterOptions::default()),
    };

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::new(4, "io", format!("{}: {e}", args.out.display())))?;
    let state_path = args.out.join(STATE_FILE);
    let resume = if args.resume && state_path.exists() {
        Some(ExperimentState::load(&state_path)?)
    } else {
        None
    };
    let mut device = device_from_spec(&args.device, file_space, file_opts)?;
    let opts = RunOptions {
        jobs: args.jobs,
        checkpoint: Some(state_path.clone()),
        out_dir: Some(args.out.clone()),
        stop_after_batch: args.stop_after_batch,
        resume,
    };
    let (state, report) = run_experiment(&cfg.experiment, device.as_mut(), args.seed, opts)?;
    state.save(&state_path)?;
    let report_path = args.out.join(REPORT_FILE);
    std::fs::write(&report_path, report.to_json())
        .map_err(|e| CliError::new(4, "io", format!("{}: {e}", report_path.display())))?;
    write_report(&state, &args.out.join("analysis"))?;
    println!("samples={}", state.samples.len());
    println!("best_loss={:?}", report.best_loss);
    println!("best_index={}", report.best_index);
    for (def, v) in state.space.dims().iter().zip(&report.best_physical) {
        println!("best_{}={v:?}", def.column_label());
    }
    if let Some(k) = report.stopped_after {
        println!("stopped_after_batch={k}");
    }
    println!("state={}", state_path.display());
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<(), CliError> {
    let segmentation = match &args.config {
        Some(p) => load_config(p)?.experiment.segmentation,
        None => SegOpts::default(),
    };
    let image = DropletImage::load(&args.image).map_err(|e| CliError::new(2, "bad_image", e))?;
    let opts = ScoreOpts {
        segmentation,
        count_max: args.count_max,
    };
    let s = score(&image, &opts).map_err(|e| match e {
        VisionError::InvalidCountMax(_) => CliError::new(2, "usage", e),
        other => CliError::new(2, "bad_image", other),
    })?;
    println!("loss={:?}", s.loss);
    println!("geom_loss={:?}", s.geom_loss);
    println!("yield_loss={:?}", s.yield_loss);
    println!("count={}", s.droplet_count());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let state = ExperimentState::load(&args.state)?;
    if state.samples.is_empty() {
        return Err(CliError::new(2, "analysis", format!("{} holds no samples", args.state.display())));
    }
    let files = write_report(&state, &args.out)?;
    let threshold = state.config.feasibility_threshold;
    for (scope, name) in [(Scope::AcquiredOnly, "acquired_only"), (Scope::All, "all")] {
        if let Ok(f) = feasibility_fraction(&state, threshold, scope) {
            println!("feasibility_{name}={f:?}");
        }
    }
    for f in files {
        println!("wrote={}", f.display());
    }
    Ok(())
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Score(a) => cmd_score(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.code
        }
    }
}
