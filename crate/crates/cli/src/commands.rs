//! Subcommand bodies. Each returns a JSON summary for the manifest and
//! writes its data files into the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qcal_core::calibration::{
    bandwidth_sweep, residue_knee, run_calibration, statistical_uncertainty, CalibrationResult,
};
use qcal_core::detector::{run_trajectory, RecordOptions, TrajectoryParams};
use qcal_core::ensemble::{
    fit_decay, integrate_master, integrate_master_every, relaxation_rate, DecayFit, MasterTrace,
    MAX_MASTER_STEP,
};
use qcal_core::gates::{
    alternating_schedule_sampled, build_gate, fidelity_curve, CalibrationSource,
};
use qcal_core::noise::{sample_noise_model, ConstantNoise, OffDiagonalNoise};
use qcal_core::record::{fmt_f64, TrajectoryRecord};
use qcal_core::seeding::{derive_seed, stream_rng};
use qcal_core::DensityMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, ExperimentConfig, NoiseSource};

/// Files written so far, relative to the output directory.
pub struct Output {
    dir: PathBuf,
    pub files: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<()> {
        let path = self.dir.join(name);
        let file =
            File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        body(&mut w)
            .and_then(|_| w.flush())
            .with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Noise realization for repetition `rep`.
fn noise_for(cfg: &ExperimentConfig, rep: usize) -> Result<Box<dyn OffDiagonalNoise>> {
    Ok(match cfg.noise_source()? {
        NoiseSource::Constant(v) => Box::new(ConstantNoise(v)),
        NoiseSource::Spectrum(spec) => {
            Box::new(sample_noise_model(&spec, noise_seed_for(cfg, rep))?)
        }
    })
}

fn noise_seed_for(cfg: &ExperimentConfig, rep: usize) -> u64 {
    derive_seed(&[cfg.noise.noise_seed, rep as u64])
}

fn indexed(stem: &str, rep: usize, ext: &str) -> String {
    format!("{stem}_{rep:03}.{ext}")
}

pub fn trajectory(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let setup = cfg.setup();
    let duration = cfg.run.duration.unwrap_or_else(|| setup.phase_duration());
    let params = TrajectoryParams {
        ez: cfg.ez,
        shift: cfg.trajectory.shift,
        t0: 0.0,
        stepping: setup.stepping,
    };
    let options = RecordOptions {
        keep_raw: cfg.trajectory.keep_raw,
        state_stride: cfg.trajectory.state_stride,
        hysteresis_fraction: setup.hysteresis_fraction,
    };
    let records: Vec<TrajectoryRecord> = (0..cfg.run.repetitions)
        .into_par_iter()
        .map(|rep| {
            let noise = noise_for(cfg, rep)?;
            let mut rng = stream_rng(cfg.run.seed, rep as u64);
            Ok(run_trajectory(
                DensityMatrix::ground(),
                &params,
                noise.as_ref(),
                &cfg.detector,
                duration,
                &mut rng,
                &options,
            )?)
        })
        .collect::<Result<_>>()?;

    let mut runs = Vec::new();
    for (rep, rec) in records.iter().enumerate() {
        if cfg.trajectory.keep_raw {
            out.write(&indexed("raw", rep, "csv"), |w| rec.write_raw_csv(w))?;
        }
        out.write(&indexed("windowed", rep, "csv"), |w| {
            rec.write_windowed_csv(w)
        })?;
        out.write(&indexed("switches", rep, "csv"), |w| {
            writeln!(w, "t")?;
            rec.switches
                .iter()
                .try_for_each(|t| writeln!(w, "{}", fmt_f64(*t)))
        })?;
        if cfg.trajectory.state_stride.is_some() {
            out.write(&indexed("states", rep, "csv"), |w| rec.write_states_csv(w))?;
        }
        runs.push(json!({
            "repetition": rep,
            "stream": rep,
            "noise_seed": noise_seed_for(cfg, rep),
            "steps": rec.n_steps,
            "windows": rec.windowed.len(),
            "switches": rec.switch_count(),
        }));
    }
    Ok(json!({ "duration": duration, "runs": runs }))
}

/// Master-equation substeps per record step, keeping the stiffness product
/// at half its limit.
fn master_substeps(dt: f64, ez: f64, gamma: f64) -> usize {
    let stiff = (2.0 * ez.abs()).max(gamma);
    ((dt * stiff / (0.5 * MAX_MASTER_STEP)).ceil() as usize).max(1)
}

#[derive(Serialize)]
struct RateRow {
    gamma_m: f64,
    analytic_rate: f64,
    fitted_rate: Option<f64>,
    relative_error: Option<f64>,
}

/// Master trace from `|0⟩`, its decay fit (none when `dv = 0`) and the
/// analytic rate.
fn fitted_rate(
    cfg: &ExperimentConfig,
    dv: f64,
    gamma: f64,
    duration: Option<f64>,
    dt: f64,
) -> Result<(Option<DecayFit>, MasterTrace, f64)> {
    let analytic = relaxation_rate(cfg.ez, gamma, dv)?;
    let duration = duration.unwrap_or(if analytic > 0.0 {
        8.0 / analytic
    } else {
        4.0 * cfg.setup().phase_duration()
    });
    let dt = dt.min(0.5 * MAX_MASTER_STEP / (2.0 * cfg.ez).max(gamma));
    let trace = integrate_master(DensityMatrix::ground(), cfg.ez, dv, gamma, duration, dt)?;
    let fit = match fit_decay(&trace.rho00_series()) {
        Ok(fit) => Some(fit),
        // no coupling, nothing to fit
        Err(_) if analytic == 0.0 => None,
        Err(e) => return Err(e.into()),
    };
    Ok((fit, trace, analytic))
}

pub fn ensemble(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let dv = match (cfg.ensemble.dv, cfg.noise_source()?) {
        (Some(dv), _) => dv,
        (None, NoiseSource::Constant(v)) => v,
        (None, NoiseSource::Spectrum(_)) => {
            return Err(ConfigError(
                "ensemble needs `ensemble.dv` or a constant noise value".into(),
            )
            .into())
        }
    };
    let gamma = cfg.detector.gamma_m();
    let (fit, trace, analytic) = fitted_rate(cfg, dv, gamma, cfg.run.duration, cfg.ensemble.dt)?;
    out.write("master.csv", |w| trace.write_csv(w))?;
    let relative_error = fit.map(|f| (f.rate - analytic).abs() / analytic);

    let mut mc = Value::Null;
    if cfg.run.repetitions > 1 {
        let duration = trace.times.last().copied().unwrap_or(0.0);
        let total = (duration / cfg.detector.dt).round() as usize;
        let stride = (total / 100).max(1);
        // whole strides keep the snapshots aligned with the master checkpoints
        let n_steps = total / stride * stride;
        let options = RecordOptions {
            state_stride: Some(stride),
            hysteresis_fraction: cfg.protocol.hysteresis_fraction,
            ..Default::default()
        };
        let params = TrajectoryParams {
            stepping: cfg.protocol.stepping,
            ..TrajectoryParams::new(cfg.ez)
        };
        let sums = (0..cfg.run.repetitions)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream_rng(cfg.run.seed, rep as u64);
                let rec = run_trajectory(
                    DensityMatrix::ground(),
                    &params,
                    &ConstantNoise(dv),
                    &cfg.detector,
                    n_steps as f64 * cfg.detector.dt,
                    &mut rng,
                    &options,
                )?;
                Ok(rec
                    .states
                    .iter()
                    .map(|s| (s.t, s.rho.rho00()))
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let sub = master_substeps(cfg.detector.dt, cfg.ez, gamma);
        let reference = integrate_master_every(
            DensityMatrix::ground(),
            cfg.ez,
            dv,
            gamma,
            n_steps as f64 * cfg.detector.dt,
            cfg.detector.dt / sub as f64,
            stride * sub,
        )?;
        let n = sums.len() as f64;
        let rows: Vec<(f64, f64, f64)> = (0..sums[0].len())
            .map(|k| {
                let mean = sums.iter().map(|s| s[k].1).sum::<f64>() / n;
                let master = reference.states.get(k).map_or(f64::NAN, |s| s.rho00());
                (sums[0][k].0, mean, master)
            })
            .collect();
        let worst = rows.iter().map(|r| (r.1 - r.2).abs()).fold(0.0, f64::max);
        out.write("trajectory_average.csv", |w| {
            writeln!(w, "t,rho00_trajectory_mean,rho00_master")?;
            rows.iter()
                .try_for_each(|r| writeln!(w, "{},{},{}", fmt_f64(r.0), fmt_f64(r.1), fmt_f64(r.2)))
        })?;
        mc = json!({ "trajectories": cfg.run.repetitions, "max_abs_deviation": worst });
    }

    let mut curve = Vec::new();
    for &g in &cfg.ensemble.gamma_sweep {
        let (fit, _, analytic) = fitted_rate(cfg, dv, g, None, cfg.ensemble.dt)?;
        curve.push(RateRow {
            gamma_m: g,
            analytic_rate: analytic,
            fitted_rate: fit.map(|f| f.rate),
            relative_error: fit.map(|f| (f.rate - analytic).abs() / analytic),
        });
    }
    if !curve.is_empty() {
        out.write("rate_curve.csv", |w| {
            writeln!(w, "gamma_m,analytic_rate,fitted_rate,relative_error")?;
            curve.iter().try_for_each(|r| {
                let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
                writeln!(
                    w,
                    "{},{},{},{}",
                    fmt_f64(r.gamma_m),
                    fmt_f64(r.analytic_rate),
                    opt(r.fitted_rate),
                    opt(r.relative_error)
                )
            })
        })?;
    }

    Ok(json!({
        "dv": dv,
        "analytic_rate": analytic,
        "decay_detected": fit.is_some(),
        "fit": fit,
        "relative_error": relative_error,
        "trajectory_check": mc,
        "rate_curve": curve,
    }))
}

#[derive(Serialize)]
struct CalibrationEntry {
    repetition: usize,
    seed: u64,
    stream: u64,
    noise_seed: Option<u64>,
    #[serde(flatten)]
    result: CalibrationResult,
}

pub fn calibrate(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let setup = cfg.setup();
    let spectral = matches!(cfg.noise_source()?, NoiseSource::Spectrum(_));
    let results: Vec<CalibrationResult> = (0..cfg.run.repetitions)
        .into_par_iter()
        .map(|rep| {
            let noise = noise_for(cfg, rep)?;
            Ok(run_calibration(
                &setup,
                noise.as_ref(),
                0.0,
                &mut stream_rng(cfg.run.seed, rep as u64),
            )?)
        })
        .collect::<Result<_>>()?;
    let entries: Vec<CalibrationEntry> = results
        .iter()
        .enumerate()
        .map(|(rep, r)| CalibrationEntry {
            repetition: rep,
            seed: cfg.run.seed,
            stream: rep as u64,
            noise_seed: spectral.then(|| noise_seed_for(cfg, rep)),
            result: *r,
        })
        .collect();
    out.write("calibrations.csv", |w| {
        writeln!(
            w,
            "repetition,n1,n2,dv1,dv2,dv_c,predicted_sigma,true_dv_start,true_dv_end,residue"
        )?;
        entries.iter().try_for_each(|e| {
            let r = &e.result;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                e.repetition,
                r.n1,
                r.n2,
                fmt_f64(r.dv1),
                fmt_f64(r.dv2),
                fmt_f64(r.dv_c),
                fmt_f64(r.predicted_sigma),
                fmt_f64(r.true_dv_start),
                fmt_f64(r.true_dv_end),
                fmt_f64(r.residue)
            )
        })
    })?;
    out.write("calibrations.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &entries)?;
        writeln!(w)
    })?;
    let n = results.len() as f64;
    let mean_sq_residue = results.iter().map(|r| r.residue * r.residue).sum::<f64>() / n;
    Ok(json!({
        "phase_duration": setup.phase_duration(),
        "predicted_sigma": statistical_uncertainty(setup.ez, setup.detector.gamma_m(), setup.phase_duration())?.sqrt(),
        "mean_dv_c": results.iter().map(|r| r.dv_c).sum::<f64>() / n,
        "mean_sq_residue": mean_sq_residue,
    }))
}

pub fn sweep_bandwidth(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    cfg.require_sweep_repetitions()?;
    let family = cfg.sweep_family()?;
    let setup = cfg.setup();
    let rows = bandwidth_sweep(
        &setup,
        &family,
        &cfg.sweep.bandwidths,
        cfg.run.repetitions,
        cfg.run.seed,
    )?;
    out.write("sweep.csv", |w| {
        writeln!(
            w,
            "B_w,mean_sq_residue,stderr,n_components,mean_sq_dv,mean_sq_drift,fraction_within_0.15"
        )?;
        rows.iter().try_for_each(|r| {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_f64(r.bandwidth),
                fmt_f64(r.mean_sq_residue),
                fmt_f64(r.stderr),
                r.n_components,
                fmt_f64(r.mean_sq_dv),
                fmt_f64(r.mean_sq_drift),
                fmt_f64(r.fraction_within(0.15))
            )
        })
    })?;
    out.write("residues.csv", |w| {
        writeln!(w, "B_w,repetition,residue")?;
        rows.iter().try_for_each(|r| {
            r.residues.iter().enumerate().try_for_each(|(k, x)| {
                writeln!(w, "{},{},{}", fmt_f64(r.bandwidth), k, fmt_f64(*x))
            })
        })
    })?;
    let ratio = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if a.mean_sq_residue > 0.0 => {
            Some(b.mean_sq_residue / a.mean_sq_residue)
        }
        _ => None,
    };
    Ok(json!({
        "beta": family.beta,
        "delta_omega": family.delta_omega,
        "knee": residue_knee(&rows),
        "inverse_calibration_time": setup.detector.gamma_m() / (4.0 * setup.n_p as f64),
        "residue_ratio_last_to_first": ratio,
    }))
}

pub fn gate_fidelity(cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let gate = build_gate(cfg.gates.gate, cfg.ez)?;
    let spec = match cfg.noise_source()? {
        NoiseSource::Spectrum(spec) => Some(spec),
        NoiseSource::Constant(_) => None,
    };
    let source = if cfg.gates.calibrate {
        let noise = spec.ok_or_else(|| {
            ConfigError("the calibrated gate curve needs a 1/f spectrum in [noise]".into())
        })?;
        Some(CalibrationSource {
            setup: cfg.setup(),
            noise,
            realizations: cfg.gates.realizations,
            seed: cfg.run.seed,
        })
    } else {
        None
    };
    let report = fidelity_curve(
        &gate,
        &cfg.gates.dv_values,
        &cfg.gates.initial_state.state(),
        source.as_ref(),
    )?;
    out.write("fidelity.csv", |w| report.write_csv(w))?;

    let mut schedule = Value::Null;
    if !cfg.gates.schedule.is_empty() {
        let rep = alternating_schedule_sampled(
            &cfg.gates.schedule,
            &cfg.setup(),
            spec.as_ref(),
            cfg.run.seed,
        )?;
        out.write("schedule.json", |w| {
            serde_json::to_writer_pretty(&mut *w, &rep)?;
            writeln!(w)
        })?;
        schedule = json!({
            "product_fidelity": rep.product_fidelity,
            "end_to_end_fidelity": rep.end_to_end_fidelity,
        });
    }
    Ok(json!({
        "gate": gate.kind,
        "gate_duration": gate.duration(),
        "schedule": schedule,
    }))
}
