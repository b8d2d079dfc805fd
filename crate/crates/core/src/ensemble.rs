//! Ensemble-averaged dynamics under continuous measurement.
//!
//! Averaging the selective evolution over records gives
//! `∂ρ̄/∂t = -i[H, ρ̄] - (Γ_m/4)[σ_z, [σ_z, ρ̄]]`, i.e. unitary precession
//! plus dephasing of the off-diagonal element at rate `Γ_m`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};
use crate::qubit::DensityMatrix;
use crate::record::fmt_f64;

/// Upper bound on `dt·max(2E_z, Γ_m)` for the integrator.
pub const MAX_MASTER_STEP: f64 = 0.1;

/// Checkpoints kept by [`integrate_master`].
pub const DEFAULT_CHECKPOINTS: usize = 4000;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MasterTrace {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl MasterTrace {
    pub fn rho00_series(&self) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, r)| (t, r.rho00()))
            .collect()
    }

    pub fn last(&self) -> Option<&DensityMatrix> {
        self.states.last()
    }

    /// Columns `t, rho00, rho01_re, rho01_im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,rho00,rho01_re,rho01_im")?;
        for (t, r) in self.times.iter().zip(&self.states) {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(*t),
                fmt_f64(r.rho00()),
                fmt_f64(r.rho01().re),
                fmt_f64(r.rho01().im)
            )?;
        }
        Ok(())
    }
}

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat_vec(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

/// Bloch-vector generator: `ṙ = A r`.
fn generator(ez: f64, dv: f64, gamma_m: f64) -> Mat3 {
    [
        [-gamma_m, 2.0 * ez, 0.0],
        [-2.0 * ez, -gamma_m, -2.0 * dv],
        [0.0, 2.0 * dv, 0.0],
    ]
}

/// One classical RK4 step for the linear system, as a matrix.
fn rk4_map(a: &Mat3, dt: f64) -> Mat3 {
    let ha = a.map(|row| row.map(|x| x * dt));
    let ha2 = mat_mul(&ha, &ha);
    let ha3 = mat_mul(&ha2, &ha);
    let ha4 = mat_mul(&ha3, &ha);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { 1.0 } else { 0.0 };
            m[i][j] = id + ha[i][j] + ha2[i][j] / 2.0 + ha3[i][j] / 6.0 + ha4[i][j] / 24.0;
        }
    }
    m
}

/// Integrates the averaged dynamics with fixed `δV`, keeping about
/// [`DEFAULT_CHECKPOINTS`] evenly spaced states plus the endpoints.
pub fn integrate_master(
    rho0: DensityMatrix,
    ez: f64,
    dv: f64,
    gamma_m: f64,
    duration: f64,
    dt: f64,
) -> Result<MasterTrace> {
    let n_steps = (duration / dt).round().max(0.0) as usize;
    let every = n_steps.div_ceil(DEFAULT_CHECKPOINTS).max(1);
    integrate_master_every(rho0, ez, dv, gamma_m, duration, dt, every)
}

/// As [`integrate_master`], recording every `every` steps.
pub fn integrate_master_every(
    rho0: DensityMatrix,
    ez: f64,
    dv: f64,
    gamma_m: f64,
    duration: f64,
    dt: f64,
    every: usize,
) -> Result<MasterTrace> {
    require_finite("ez", ez)?;
    require_finite("dv", dv)?;
    require_finite("gamma_m", gamma_m)?;
    require_finite("duration", duration)?;
    require_positive("dt", dt)?;
    if gamma_m < 0.0 || duration < 0.0 {
        return Err(Error::InvalidParameter {
            name: if gamma_m < 0.0 { "gamma_m" } else { "duration" },
            reason: "must be non-negative".into(),
        });
    }
    let stiff = dt * (2.0 * ez.abs()).max(gamma_m);
    if stiff > MAX_MASTER_STEP {
        return Err(Error::Configuration(format!(
            "dt*max(2ez, gamma_m) = {stiff:.4} exceeds {MAX_MASTER_STEP}"
        )));
    }
    let every = every.max(1);
    let map = rk4_map(&generator(ez, dv, gamma_m), dt);
    let n_steps = (duration / dt).round() as usize;
    let mut r = rho0.bloch();
    let mut trace = MasterTrace::default();
    trace.times.push(0.0);
    trace.states.push(rho0);
    for k in 1..=n_steps {
        r = mat_vec(&map, &r);
        if k % every == 0 || k == n_steps {
            trace.times.push(k as f64 * dt);
            trace.states.push(DensityMatrix::from_bloch(r));
        }
    }
    Ok(trace)
}

/// Second-order relaxation rate `4δV²Γ_m/(4E_z² + Γ_m²)`.
pub fn relaxation_rate(ez: f64, gamma_m: f64, dv: f64) -> Result<f64> {
    require_finite("ez", ez)?;
    require_finite("gamma_m", gamma_m)?;
    require_finite("dv", dv)?;
    let denom = 4.0 * ez * ez + gamma_m * gamma_m;
    if denom == 0.0 {
        return Err(Error::UndefinedRate);
    }
    Ok(4.0 * dv * dv * gamma_m / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub rate_stderr: f64,
    /// `ρ₀₀ - ½` at the start of the fit window.
    pub amplitude: f64,
    pub window_start: f64,
    pub points: usize,
}

/// Fits `ρ₀₀(t) = ½ + A e^{-k(t - t_s)}` over `t ≥ t_s = t₀ + 1/(10k)`.
pub fn fit_decay(series: &[(f64, f64)]) -> Result<DecayFit> {
    let fail = |reason: &str, diagnostics: String| Error::Fit {
        reason: reason.into(),
        diagnostics,
    };
    if series.len() < 5 {
        return Err(fail("too few points", format!("{} points", series.len())));
    }
    if series.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(fail("non-finite input", String::new()));
    }
    let t_first = series[0].0;
    let dev0 = series
        .iter()
        .map(|(_, y)| (y - 0.5).abs())
        .fold(0.0, f64::max);
    if dev0 < 1e-12 {
        return Err(fail(
            "series does not decay",
            format!("max |rho00 - 1/2| = {dev0:e}"),
        ));
    }

    let k0 = loglinear_rate(series, dev0)
        .ok_or_else(|| fail("no decaying segment", format!("max deviation {dev0:e}")))?;
    let mut k = k0;
    let mut fit = None;
    // the window depends on the rate; two passes settle it
    for _ in 0..2 {
        let ts = t_first + 0.1 / k;
        let window: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= ts).collect();
        let span = window.last().map_or(0.0, |w| w.0) - ts;
        if window.len() < 5 || span * k < 2.0 {
            return Err(fail(
                "series spans fewer than two decay times",
                format!(
                    "rate estimate {k:e}, window span {span:e}, {} points",
                    window.len()
                ),
            ));
        }
        let f = levenberg_marquardt(&window, ts, k).map_err(|d| fail("fit did not converge", d))?;
        k = f.rate;
        fit = Some(f);
    }
    let f = fit.expect("two passes ran");
    if f.rate.is_nan() || f.rate <= 0.0 {
        return Err(fail("non-positive rate", format!("{f:?}")));
    }
    Ok(f)
}

/// Slope of `ln|ρ₀₀ - ½|` over the leading stretch above a twentieth of the peak.
fn loglinear_rate(series: &[(f64, f64)], peak: f64) -> Option<f64> {
    let floor = 0.05 * peak;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .take_while(|(_, y)| (y - 0.5).abs() > floor)
        .map(|(t, y)| (*t, (y - 0.5).abs().ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let k = -sxy / sxx;
    (k.is_finite() && k > 0.0).then_some(k)
}

fn levenberg_marquardt(
    window: &[(f64, f64)],
    ts: f64,
    k_init: f64,
) -> std::result::Result<DecayFit, String> {
    let sse = |a: f64, k: f64| -> f64 {
        window
            .iter()
            .map(|(t, y)| (y - 0.5 - a * (-k * (t - ts)).exp()).powi(2))
            .sum()
    };
    let mut k = k_init;
    let mut a = window[0].1 - 0.5;
    let mut lambda = 1e-3;
    let mut cost = sse(a, k);
    for _ in 0..200 {
        let (mut jaa, mut jak, mut jkk, mut ga, mut gk) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, y) in window {
            let e = (-k * (t - ts)).exp();
            let r = y - 0.5 - a * e;
            let da = e;
            let dk = -a * (t - ts) * e;
            jaa += da * da;
            jak += da * dk;
            jkk += dk * dk;
            ga += da * r;
            gk += dk * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let (paa, pkk) = (jaa * (1.0 + lambda), jkk * (1.0 + lambda));
            let det = paa * pkk - jak * jak;
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let step_a = (pkk * ga - jak * gk) / det;
            let step_k = (paa * gk - jak * ga) / det;
            let (na, nk) = (a + step_a, k + step_k);
            let c = sse(na, nk);
            if c.is_finite() && c <= cost {
                let rel = (step_k / nk).abs().max((step_a / na).abs());
                a = na;
                k = nk;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-12 {
                    return Ok(finish(window, ts, a, k, cost));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step left: at the minimum to machine precision
            return Ok(finish(window, ts, a, k, cost));
        }
    }
    Err(format!(
        "no convergence after 200 iterations: A = {a:e}, k = {k:e}, sse = {cost:e}"
    ))
}

fn finish(window: &[(f64, f64)], ts: f64, a: f64, k: f64, cost: f64) -> DecayFit {
    let (mut jaa, mut jak, mut jkk) = (0.0, 0.0, 0.0);
    for (t, _) in window {
        let e = (-k * (t - ts)).exp();
        let dk = -a * (t - ts) * e;
        jaa += e * e;
        jak += e * dk;
        jkk += dk * dk;
    }
    let dof = window.len().saturating_sub(2).max(1) as f64;
    let det = jaa * jkk - jak * jak;
    let var_k = if det > 0.0 {
        cost / dof * jaa / det
    } else {
        f64::INFINITY
    };
    DecayFit {
        rate: k,
        rate_stderr: var_k.sqrt(),
        amplitude: a,
        window_start: ts,
        points: window.len(),
    }
}
