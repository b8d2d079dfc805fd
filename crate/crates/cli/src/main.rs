//! `qcal`: seeded experiment runner for the calibration simulator.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use qcal_core::Stepping;
use serde_json::{json, Value};

use commands::Output;
use config::{ConfigError, ExperimentConfig, NoiseSource};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "qcal",
    version,
    about = "Continuously measured qubit: trajectories, calibration and gate fidelity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment file; the built-in reference setup when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for the measurement records.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Simulated duration for `trajectory` and `ensemble`.
    #[arg(long, global = true)]
    duration: Option<f64>,

    /// First-order coherent stepping instead of the exact rotation.
    #[arg(long, global = true)]
    euler: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Single measurement records: raw current, window averages, 0/1 bits.
    Trajectory,
    /// Averaged dynamics and the fitted relaxation rate.
    Ensemble,
    /// Repeated two-phase calibrations.
    Calibrate,
    /// Mean squared residue against noise bandwidth.
    SweepBandwidth,
    /// Gate fidelity with and without calibration.
    GateFidelity,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Trajectory => "trajectory",
            Command::Ensemble => "ensemble",
            Command::Calibrate => "calibrate",
            Command::SweepBandwidth => "sweep-bandwidth",
            Command::GateFidelity => "gate-fidelity",
        }
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::parse("ez = 7.0\n")?,
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.run.output_dir = out.clone();
    }
    if let Some(d) = cli.duration {
        cfg.run.duration = Some(d);
    }
    if cli.euler {
        cfg.protocol.stepping = Stepping::Euler;
    }
    if cfg.run.duration.is_some() && !matches!(cli.command, Command::Trajectory | Command::Ensemble)
    {
        return Err(ConfigError(format!(
            "a duration override does not apply to `{}`",
            cli.command.name()
        )));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn noise_summary(cfg: &ExperimentConfig) -> Value {
    match cfg.noise_source() {
        Ok(NoiseSource::Constant(v)) => json!({ "kind": "constant", "value": v }),
        Ok(NoiseSource::Spectrum(spec)) => json!({
            "kind": "one_over_f",
            "beta": spec.beta,
            "delta_omega": spec.delta_omega,
            "n_components": spec.n_components,
            "band_width": spec.band_width(),
            "rms": spec.ensemble_variance().sqrt(),
            "noise_seed": cfg.noise.noise_seed,
        }),
        Err(_) => Value::Null,
    }
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let mut out = Output::create(&cfg.run.output_dir)?;
    out.write("config.toml", |w| w.write_all(cfg.to_toml().as_bytes()))?;
    let results = match cli.command {
        Command::Trajectory => commands::trajectory(cfg, &mut out)?,
        Command::Ensemble => commands::ensemble(cfg, &mut out)?,
        Command::Calibrate => commands::calibrate(cfg, &mut out)?,
        Command::SweepBandwidth => commands::sweep_bandwidth(cfg, &mut out)?,
        Command::GateFidelity => commands::gate_fidelity(cfg, &mut out)?,
    };
    let dv_hint = match cfg.noise_source()? {
        NoiseSource::Constant(v) => v,
        NoiseSource::Spectrum(spec) => spec.ensemble_variance().sqrt(),
    };
    let manifest = json!({
        "command": cli.command.name(),
        "qcal_version": qcal_core::VERSION,
        "config": cfg,
        "seeds": { "seed": cfg.run.seed, "noise_seed": cfg.noise.noise_seed },
        "gamma_m": cfg.detector.gamma_m(),
        "noise": noise_summary(cfg),
        "warnings": cfg.detector.warnings(cfg.ez, dv_hint),
        "results": results,
        "files": out.files.clone(),
    });
    out.write("manifest.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w)
    })?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("qcal: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for w in cfg.detector.warnings(cfg.ez, 0.0) {
        eprintln!("qcal: warning: {w}");
    }
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("qcal: cannot size the worker pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match run(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ConfigError>() => {
            eprintln!("qcal: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("qcal: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
