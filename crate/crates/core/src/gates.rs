//! Single-qubit gates driven through the off-diagonal coupling, and their
//! fidelity under raw and calibrated low-frequency noise.
//!
//! With `H = -E_z σ_z + v σ_x` a segment of length `τ` gives
//! `U = cos(|h|τ) - i sin(|h|τ) H/|h|`, `|h| = √(E_z² + v²)`:
//!
//! * Hadamard: `v = E_z`, `τ = π/(2√2 E_z)`, `U = -i(σ_x - σ_z)/√2`
//! * phase: `v = 0`, `τ = π/(2E_z)`, `U = iσ_z`
//! * bit flip: Hadamard, phase, Hadamard, `U = iσ_x`
//!
//! Noise is frozen during a gate, so every segment is an exact exponential.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{run_calibration, CalibrationResult, CalibrationSetup};
use crate::error::{require_finite, require_positive, Error, Result};
use crate::noise::{sample_noise_model, ConstantNoise, NoiseSpec, OffDiagonalNoise, OffsetNoise};
use crate::qubit::PureState;
use crate::record::fmt_f64;
use crate::seeding::{derive_seed, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Hadamard,
    Phase,
    Bitflip,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::Hadamard => "hadamard",
            GateKind::Phase => "phase",
            GateKind::Bitflip => "bitflip",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hadamard" | "h" => Ok(GateKind::Hadamard),
            "phase" | "ph" => Ok(GateKind::Phase),
            "bitflip" | "flip" | "x" => Ok(GateKind::Bitflip),
            _ => Err(Error::UnknownGate(s.to_string())),
        }
    }
}

/// 2×2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Unitary2(pub [[Complex64; 2]; 2]);

impl Unitary2 {
    pub fn identity() -> Self {
        let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        Self([[o, z], [z, o]])
    }

    /// `exp(-iHτ)` for `H = -ez σ_z + v σ_x`.
    pub fn segment(ez: f64, v: f64, tau: f64) -> Self {
        let norm = ez.hypot(v);
        let i = Complex64::new(0.0, 1.0);
        if norm == 0.0 {
            return Self::identity();
        }
        let (s, c) = (norm * tau).sin_cos();
        let (hz, hx) = (-ez / norm, v / norm);
        Self([[c - i * s * hz, -i * s * hx], [-i * s * hx, c + i * s * hz]])
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        Self(out)
    }

    pub fn dagger(&self) -> Self {
        let m = &self.0;
        Self([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn apply(&self, psi: &PureState) -> PureState {
        let [a, b] = psi.amplitudes();
        let m = &self.0;
        PureState::from_raw([m[0][0] * a + m[0][1] * b, m[1][0] * a + m[1][1] * b])
    }

    /// `min_φ ‖A - e^{iφ}B‖_F`.
    pub fn distance_up_to_phase(&self, other: &Self) -> f64 {
        let t = other.dagger().mul(self);
        let overlap = (t.0[0][0] + t.0[1][1]).norm();
        (self.frobenius_sq() + other.frobenius_sq() - 2.0 * overlap)
            .max(0.0)
            .sqrt()
    }

    /// `‖U†U - 1‖_F`.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.dagger().mul(self);
        let id = Self::identity();
        let mut s = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                s += (p.0[r][c] - id.0[r][c]).norm_sqr();
            }
        }
        s.sqrt()
    }

    fn frobenius_sq(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub kind: GateKind,
    pub ez: f64,
    pub target: Unitary2,
    /// `(off-diagonal value, duration)` segments applied in order.
    pub drive: Vec<(f64, f64)>,
}

impl GateSpec {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn duration(&self) -> f64 {
        self.drive.iter().map(|s| s.1).sum()
    }

    /// Evolution operator of the drive with `dv` added to every segment.
    pub fn unitary(&self, dv: f64) -> Unitary2 {
        self.drive
            .iter()
            .fold(Unitary2::identity(), |u, &(v, tau)| {
                Unitary2::segment(self.ez, v + dv, tau).mul(&u)
            })
    }
}

pub fn build_gate(kind: GateKind, ez: f64) -> Result<GateSpec> {
    require_positive("ez", ez)?;
    let i = Complex64::new(0.0, 1.0);
    let z = Complex64::new(0.0, 0.0);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let hadamard = (
        ez,
        std::f64::consts::PI / (2.0 * std::f64::consts::SQRT_2 * ez),
    );
    let phase = (0.0, std::f64::consts::PI / (2.0 * ez));
    let (drive, target) = match kind {
        GateKind::Hadamard => (
            vec![hadamard],
            Unitary2([[i * r, -i * r], [-i * r, -i * r]]),
        ),
        GateKind::Phase => (vec![phase], Unitary2([[i, z], [z, -i]])),
        GateKind::Bitflip => (vec![hadamard, phase, hadamard], Unitary2([[z, i], [i, z]])),
    };
    Ok(GateSpec {
        kind,
        ez,
        target,
        drive,
    })
}

/// Looks a gate up by name.
pub fn build_named_gate(name: &str, ez: f64) -> Result<GateSpec> {
    build_gate(name.parse()?, ez)
}

/// Runs the drive with the extra coupling `dv_effective` on `psi_i`.
pub fn apply_gate_with_noise(gate: &GateSpec, dv_effective: f64, psi_i: &PureState) -> PureState {
    gate.unitary(dv_effective).apply(psi_i)
}

/// `|⟨ψ_t|ψ_out⟩|²`.
pub fn fidelity(psi_t: &PureState, psi_out: &PureState) -> f64 {
    psi_t.inner(psi_out).norm_sqr().min(1.0)
}

/// Fidelity of one gate on `psi_i` against its ideal output.
pub fn gate_fidelity(gate: &GateSpec, dv_effective: f64, psi_i: &PureState) -> f64 {
    fidelity(
        &gate.target.apply(psi_i),
        &apply_gate_with_noise(gate, dv_effective, psi_i),
    )
}

/// Calibrates on `noise` from `t0`, then applies `gate` at the end of the
/// calibration with the estimate subtracted.
pub fn calibrated_gate(
    gate: &GateSpec,
    setup: &CalibrationSetup,
    noise: &dyn OffDiagonalNoise,
    t0: f64,
    psi_i: &PureState,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, CalibrationResult)> {
    let cal = run_calibration(setup, noise, t0, rng)?;
    Ok((gate_fidelity(gate, cal.residue, psi_i), cal))
}

/// Noise and protocol used for the calibrated curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSource {
    pub setup: CalibrationSetup,
    /// Realizations are pinned to each swept `δV(0)`; only their drift matters.
    pub noise: NoiseSpec,
    pub realizations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub gate: GateKind,
    pub noise_values: Vec<f64>,
    pub fidelity_raw: Vec<f64>,
    pub fidelity_raw_stderr: Vec<f64>,
    pub fidelity_calibrated: Option<Vec<f64>>,
    pub fidelity_calibrated_stderr: Option<Vec<f64>>,
}

impl FidelityReport {
    /// Columns `dv0, F_raw_mean, F_raw_stderr, F_cal_mean, F_cal_stderr`;
    /// calibrated columns are empty when no calibration ran.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "dv0,F_raw_mean,F_raw_stderr,F_cal_mean,F_cal_stderr")?;
        for k in 0..self.noise_values.len() {
            write!(
                w,
                "{},{},{},",
                fmt_f64(self.noise_values[k]),
                fmt_f64(self.fidelity_raw[k]),
                fmt_f64(self.fidelity_raw_stderr[k])
            )?;
            match (&self.fidelity_calibrated, &self.fidelity_calibrated_stderr) {
                (Some(m), Some(s)) => writeln!(w, "{},{}", fmt_f64(m[k]), fmt_f64(s[k]))?,
                _ => writeln!(w, ",")?,
            }
        }
        Ok(())
    }
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Fidelity of `gate` on `psi_i` versus the starting noise value.
///
/// The raw curve applies `δV(0)` directly. The calibrated curve pins fresh
/// realizations to `δV(0)`, calibrates from `t = 0` and gates at the end of
/// the protocol with `δV(t_gate) - δV_c`.
pub fn fidelity_curve(
    gate: &GateSpec,
    dv_values: &[f64],
    psi_i: &PureState,
    calibration: Option<&CalibrationSource>,
) -> Result<FidelityReport> {
    for &d in dv_values {
        require_finite("dv", d)?;
    }
    let fidelity_raw: Vec<f64> = dv_values
        .iter()
        .map(|&d| gate_fidelity(gate, d, psi_i))
        .collect();
    let fidelity_raw_stderr = vec![0.0; dv_values.len()];
    let (mut cal_mean, mut cal_err) = (None, None);
    if let Some(src) = calibration {
        if src.realizations == 0 {
            return Err(Error::InvalidParameter {
                name: "realizations",
                reason: "must be at least 1".into(),
            });
        }
        let mut means = Vec::with_capacity(dv_values.len());
        let mut errs = Vec::with_capacity(dv_values.len());
        for (p, &d) in dv_values.iter().enumerate() {
            let point_seed = derive_seed(&[src.seed, p as u64]);
            let fids: Vec<f64> = (0..src.realizations)
                .into_par_iter()
                .map(|r| {
                    let model =
                        sample_noise_model(&src.noise, derive_seed(&[point_seed, r as u64]))?;
                    let pinned = OffsetNoise::pinned(model, d);
                    let mut rng = stream_rng(point_seed, r as u64);
                    calibrated_gate(gate, &src.setup, &pinned, 0.0, psi_i, &mut rng).map(|(f, _)| f)
                })
                .collect::<Result<_>>()?;
            let (m, e) = mean_and_stderr(&fids);
            means.push(m);
            errs.push(e);
        }
        cal_mean = Some(means);
        cal_err = Some(errs);
    }
    Ok(FidelityReport {
        gate: gate.kind,
        noise_values: dv_values.to_vec(),
        fidelity_raw,
        fidelity_raw_stderr,
        fidelity_calibrated: cal_mean,
        fidelity_calibrated_stderr: cal_err,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub t: f64,
    /// Physical qubit, 1 or 2.
    pub qubit: u8,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub events: Vec<ScheduleEvent>,
    pub calibrations: Vec<CalibrationResult>,
    pub segment_fidelities: Vec<f64>,
    pub product_fidelity: f64,
    pub end_to_end_fidelity: f64,
}

/// One logical qubit stored on two physical qubits.
///
/// Gate `k` runs on physical qubit `k mod 2` right after that qubit finishes
/// a calibration over `[k T_c, (k+1) T_c]`, `T_c = 4n_p/Γ_m`; meanwhile the
/// other qubit starts recalibrating, and the state is swapped over (ideally)
/// before the next gate. Gate `k` sees `δV_q((k+1)T_c) - δV_c`.
pub fn alternating_schedule(
    ops: &[GateKind],
    setup: &CalibrationSetup,
    noises: [&dyn OffDiagonalNoise; 2],
    seed: u64,
) -> Result<ScheduleReport> {
    if ops.is_empty() {
        return Err(Error::InvalidInput(
            "schedule needs at least one gate".into(),
        ));
    }
    setup.validate()?;
    let tc = 2.0 * setup.phase_duration();
    let mut events = Vec::new();
    let mut calibrations = Vec::with_capacity(ops.len());
    let mut segment_fidelities = Vec::with_capacity(ops.len());
    let mut actual = PureState::zero();
    let mut ideal = PureState::zero();
    let q_name = |q: usize| q as u8 + 1;

    events.push(ScheduleEvent {
        t: 0.0,
        qubit: 1,
        action: "prepare".into(),
    });
    for (k, &op) in ops.iter().enumerate() {
        let q = k % 2;
        let start = k as f64 * tc;
        let end = start + tc;
        events.push(ScheduleEvent {
            t: start,
            qubit: q_name(q),
            action: "calibrate_start".into(),
        });
        let mut rng = stream_rng(derive_seed(&[seed, q as u64]), k as u64);
        let cal = run_calibration(setup, noises[q], start, &mut rng)?;
        events.push(ScheduleEvent {
            t: end,
            qubit: q_name(q),
            action: "calibrate_end".into(),
        });
        if k > 0 {
            events.push(ScheduleEvent {
                t: end,
                qubit: q_name(q),
                action: format!("swap_from_q{}", q_name(1 - q)),
            });
        }
        let gate = build_gate(op, setup.ez)?;
        let out = apply_gate_with_noise(&gate, cal.residue, &actual);
        segment_fidelities.push(fidelity(&gate.target.apply(&actual), &out));
        events.push(ScheduleEvent {
            t: end,
            qubit: q_name(q),
            action: format!("gate:{op}"),
        });
        actual = out;
        ideal = gate.target.apply(&ideal);
        calibrations.push(cal);
    }
    Ok(ScheduleReport {
        events,
        calibrations,
        product_fidelity: segment_fidelities.iter().product(),
        segment_fidelities,
        end_to_end_fidelity: fidelity(&ideal, &actual),
    })
}

/// [`alternating_schedule`] with fresh independent realizations of `spec`
/// on each qubit, or no noise when `spec` is `None`.
pub fn alternating_schedule_sampled(
    ops: &[GateKind],
    setup: &CalibrationSetup,
    spec: Option<&NoiseSpec>,
    seed: u64,
) -> Result<ScheduleReport> {
    match spec {
        Some(spec) => {
            let q1 = sample_noise_model(spec, derive_seed(&[seed, 101]))?;
            let q2 = sample_noise_model(spec, derive_seed(&[seed, 102]))?;
            alternating_schedule(ops, setup, [&q1, &q2], seed)
        }
        None => alternating_schedule(ops, setup, [&ConstantNoise(0.0), &ConstantNoise(0.0)], seed),
    }
}
