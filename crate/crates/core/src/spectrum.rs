//! Periodogram estimates and log-log slope fits for noise records.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};

/// Shortest series accepted by [`estimate_spectrum`].
pub const MIN_SPECTRUM_SAMPLES: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    /// Angular frequency `2πk/(L dt)`.
    pub omega: f64,
    pub power: f64,
}

/// Rectangular-window periodogram `|X_k|² dt / L` for `k = 0..=L/2`.
///
/// Noise lines that sit on the FFT grid (`Δω` a multiple of `2π/(L dt)`)
/// appear without leakage.
pub fn estimate_spectrum(samples: &[f64], sample_dt: f64) -> Result<Vec<SpectrumPoint>> {
    require_positive("sample_dt", sample_dt)?;
    let len = samples.len();
    if len < MIN_SPECTRUM_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "spectrum needs at least {MIN_SPECTRUM_SAMPLES} samples, got {len}"
        )));
    }
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let scale = sample_dt / len as f64;
    let base = std::f64::consts::TAU / (len as f64 * sample_dt);
    Ok(buf[..=len / 2]
        .iter()
        .enumerate()
        .map(|(k, x)| SpectrumPoint {
            omega: base * k as f64,
            power: x.norm_sqr() * scale,
        })
        .collect())
}

/// Bin-wise mean of periodograms computed on the same grid.
pub fn average_spectra(spectra: &[Vec<SpectrumPoint>]) -> Result<Vec<SpectrumPoint>> {
    let first = spectra
        .first()
        .ok_or_else(|| Error::InvalidInput("no spectra to average".into()))?;
    if spectra.iter().any(|s| s.len() != first.len()) {
        return Err(Error::InvalidInput("spectra have different lengths".into()));
    }
    let n = spectra.len() as f64;
    Ok(first
        .iter()
        .enumerate()
        .map(|(k, p)| SpectrumPoint {
            omega: p.omega,
            power: spectra.iter().map(|s| s[k].power).sum::<f64>() / n,
        })
        .collect())
}

/// Least-squares slope of `ln P` against `ln ω` over `[omega_lo, omega_hi]`,
/// skipping bins with zero power.
pub fn fit_loglog_slope(spectrum: &[SpectrumPoint], omega_lo: f64, omega_hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = spectrum
        .iter()
        .filter(|p| p.omega >= omega_lo && p.omega <= omega_hi && p.omega > 0.0 && p.power > 0.0)
        .map(|p| (p.omega.ln(), p.power.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "only {} usable bins in [{omega_lo}, {omega_hi}]",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
