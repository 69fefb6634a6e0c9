//! `qcm`: pump / control / probe runs of the quasi-classical D2+ model.

mod commands;
mod config;
mod error;
mod output;
mod scan;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::Value;

use crate::commands::Command;
use crate::config::{ConfigBuilder, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "qcm",
    version,
    about = "Quasi-classical vibrational wavepacket control of D2+"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Ion vibrational population left by the pump.
    Populate {
        /// Add the Franck-Condon distribution as a column.
        #[arg(long)]
        fc: bool,
    },
    /// Propagate the ensemble and dump its trajectories.
    Propagate {
        /// Also write the field-free quantum density on the same time axis.
        #[arg(long)]
        oracle: bool,
    },
    /// Population-transfer matrices and phases for one or more control pulses.
    ControlScan,
    /// Fragment yield against probe delay, with its Fourier magnitude.
    Probe,
    /// Vibrational levels, starting points and periods of the ensemble.
    Spectrum,
}

/// Intensities in W cm^-2, times in fs.
#[derive(Debug, Args)]
struct Overrides {
    /// Key-value config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pump_intensity: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pump_fwhm: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    control_intensity: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    control_delay: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    control_fwhm: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    probe_delay: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    t_end: Option<f64>,
    /// Scan axis, e.g. `control.delay:24:40:4`.
    #[arg(long, global = true, value_name = "PARAM:START:STOP:STEP")]
    scan: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Any other setting, e.g. `--set propagation.integrator=verlet`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Parses a TOML scalar, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("x = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let o = &cli.overrides;
    let mut b = ConfigBuilder::default();
    if let Some(path) = &o.config {
        b.merge_file(path)?;
    }
    for kv in &o.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set {kv:?}: expected KEY=VALUE")))?;
        b.set(k.trim(), parse_value(v.trim()))?;
    }
    let floats = [
        ("pump.intensity", o.pump_intensity),
        ("pump.fwhm", o.pump_fwhm),
        ("control.intensity", o.control_intensity),
        ("control.delay", o.control_delay),
        ("control.fwhm", o.control_fwhm),
        ("probe.delay", o.probe_delay),
        ("propagation.dt", o.dt),
        ("propagation.t_end", o.t_end),
    ];
    for (key, value) in floats {
        if let Some(x) = value {
            b.set_float(key, x)?;
        }
    }
    if let Some(s) = &o.scan {
        b.set("scan", Value::String(s.clone()))?;
    }
    if let Some(d) = &o.out {
        b.set("out", Value::String(d.to_string_lossy().into_owned()))?;
    }
    if let Some(n) = o.workers {
        b.set("workers", Value::Integer(n as i64))?;
    }
    match &cli.command {
        Sub::Populate { fc: true } => {
            b.set("output.franck_condon", Value::Boolean(true))?;
        }
        Sub::Propagate { oracle: true } => {
            b.set("output.oracle", Value::Boolean(true))?;
        }
        _ => {}
    }
    b.build()
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = resolve(cli)?;
    let command = match cli.command {
        Sub::Populate { .. } => Command::Populate,
        Sub::Propagate { .. } => Command::Propagate,
        Sub::ControlScan => Command::ControlScan,
        Sub::Probe => Command::Probe,
        Sub::Spectrum => Command::Spectrum,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("workers: {e}")))?;
    pool.install(|| commands::run(command, &config))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
