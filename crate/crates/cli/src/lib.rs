//! `odmr` command-line front end: configuration, CSV/JSON I/O and reproducible runs.
//!
//! Every command stages its outputs in memory, adds a `manifest.json` describing the
//! run, and only then writes the files atomically into the output directory.

pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigError, RunConfig, CONFIG_ENV};
use crate::io::{sha256_hex, Staged};

/// Exit status when outputs were written but a fit did not converge or an
/// inversion was not confident.
pub const EXIT_INCOMPLETE: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("cannot write output {0}")]
    Output(String),
    #[error(transparent)]
    Core(#[from] odmr_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "odmr", version, about = "ODMR simulation and analysis for spin-1 defect ensembles")]
pub struct Cli {
    /// Config file (TOML, or JSON by extension). Defaults apply when absent.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Overrides `ensemble.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `outputs.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a spectrum for the configured ensemble and field, then fit its dominant peaks.
    Simulate,
    /// Fit peaks in a `frequency_mhz,value` or `frequency_mhz,contrast` CSV.
    Fit(FitArgs),
    /// Shot-noise-limited field sensitivity.
    Sensitivity(SensitivityArgs),
    /// Zero-field splitting shift from lattice constants.
    Thermometry(ThermometryArgs),
    /// Tabulate spectral features over the configured field grid.
    Calibrate,
    /// Estimate the field from features or a spectrum using a calibration table.
    Invert(InvertArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to `fit.n_peaks`.
    #[arg(long)]
    pub n_peaks: Option<usize>,
    /// Defaults to `fit.line_shape`.
    #[arg(long)]
    pub shape: Option<String>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long, default_value_t = 0.7)]
    pub p_f: f64,
    #[arg(long, default_value_t = 110.0)]
    pub linewidth_mhz: f64,
    #[arg(long, default_value_t = 0.019)]
    pub contrast: f64,
    /// Photon count rate, s⁻¹.
    #[arg(long, default_value_t = 516_000.0)]
    pub rate_hz: f64,
    /// Defaults to `spin.g_factor`.
    #[arg(long)]
    pub g: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ThermometryArgs {
    /// `temperature_k,a_angstrom,c_angstrom` CSV.
    #[arg(long)]
    pub lattice: PathBuf,
    #[arg(long = "temperature-k", required = true, num_args = 1.., value_delimiter = ',')]
    pub temperatures_k: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// Calibration table written by `calibrate`.
    #[arg(long)]
    pub table: PathBuf,
    /// Observed features, e.g. `3540.2,3421.7` (centers in descending order).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "spectrum", required_unless_present = "spectrum")]
    pub features: Option<Vec<f64>>,
    /// Spectrum CSV to read the features from.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit(_) => "fit",
            Command::Sensitivity(_) => "sensitivity",
            Command::Thermometry(_) => "thermometry",
            Command::Calibrate => "calibrate",
            Command::Invert(_) => "invert",
        }
    }
}

/// What a command produced before the manifest is added.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub staged: Staged,
    pub inputs: Vec<InputRef>,
    /// All fits converged and every estimate is confident.
    pub complete: bool,
    pub summary: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct FileRef {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    command: &'static str,
    seed: u64,
    config_hash: String,
    config: &'a RunConfig,
    inputs: &'a [InputRef],
    outputs: Vec<FileRef>,
    complete: bool,
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.outputs.dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

/// Runs one command and writes its outputs, returning the process exit status.
pub fn run(cli: &Cli) -> Result<u8, CliError> {
    let cfg = resolve_config(cli)?;
    let out = commands::dispatch(&cli.command, &cfg)?;
    let config_json = serde_json::to_string(&cfg).expect("config serializes");
    let manifest = Manifest {
        tool: "odmr",
        version: env!("CARGO_PKG_VERSION"),
        core_version: odmr_core::VERSION,
        command: cli.command.name(),
        seed: cfg.ensemble.seed,
        config_hash: sha256_hex(config_json.as_bytes()),
        config: &cfg,
        inputs: &out.inputs,
        outputs: out
            .staged
            .hashes()
            .into_iter()
            .map(|(file, sha256)| FileRef { file, sha256 })
            .collect(),
        complete: out.complete,
    };
    let mut staged = out.staged;
    staged.add("manifest.json", io::to_json(&manifest));
    let written = staged.commit(std::path::Path::new(&cfg.outputs.dir))?;
    print!("{}", out.summary);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(if out.complete { 0 } else { EXIT_INCOMPLETE })
}

pub fn main_with(cli: Cli) -> ExitCode {
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
