//! Windowed averages, the 0/1 filter and switch counting.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::detector::DetectorConfig;
use crate::error::{require_positive, Error, Result};
use crate::qubit::DensityMatrix;

/// Fewest raw samples a window may hold.
pub const MIN_WINDOW_SAMPLES: usize = 10;

/// Default Schmitt-trigger half-width as a fraction of `ΔI`.
pub const DEFAULT_HYSTERESIS: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    /// End of the averaging window.
    pub t: f64,
    pub current: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSample {
    pub t: f64,
    pub rho: DensityMatrix,
}

/// Samples per window of length `2/Γ_m`.
pub fn samples_per_window(dt: f64, gamma_m: f64) -> Result<usize> {
    require_positive("dt", dt)?;
    require_positive("gamma_m", gamma_m)?;
    let n = (2.0 / (gamma_m * dt)).round();
    if n.is_nan() || n < MIN_WINDOW_SAMPLES as f64 {
        return Err(Error::Configuration(format!(
            "window 2/gamma_m holds {n} samples, need at least {MIN_WINDOW_SAMPLES}"
        )));
    }
    Ok(n as usize)
}

/// Streaming block mean; yields the same numbers as [`window_average`].
#[derive(Debug, Clone)]
pub struct WindowAccumulator {
    t0: f64,
    dt: f64,
    per_window: usize,
    sum: f64,
    filled: usize,
    out: Vec<WindowSample>,
}

impl WindowAccumulator {
    pub fn new(t0: f64, dt: f64, gamma_m: f64) -> Result<Self> {
        Ok(Self {
            t0,
            dt,
            per_window: samples_per_window(dt, gamma_m)?,
            sum: 0.0,
            filled: 0,
            out: Vec::new(),
        })
    }

    #[inline]
    pub fn push(&mut self, current: f64) {
        self.sum += current;
        self.filled += 1;
        if self.filled == self.per_window {
            let n = self.out.len() + 1;
            self.out.push(WindowSample {
                t: self.t0 + (n * self.per_window) as f64 * self.dt,
                current: self.sum / self.per_window as f64,
            });
            self.sum = 0.0;
            self.filled = 0;
        }
    }

    pub fn windows(&self) -> &[WindowSample] {
        &self.out
    }

    /// Completed windows; a partial trailing block is dropped.
    pub fn finish(self) -> Vec<WindowSample> {
        self.out
    }
}

/// Non-overlapping means over windows of `2/Γ_m`, stamped at each window's end.
pub fn window_average(raw: &[f64], dt: f64, gamma_m: f64) -> Result<Vec<WindowSample>> {
    let mut acc = WindowAccumulator::new(0.0, dt, gamma_m)?;
    for &x in raw {
        acc.push(x);
    }
    Ok(acc.finish())
}

/// Schmitt trigger on the windowed current. Output 1 means "at `I₁`".
pub fn binarize(
    windowed: &[f64],
    cfg: &DetectorConfig,
    hysteresis_fraction: f64,
) -> Result<Vec<u8>> {
    if !(0.0..0.5).contains(&hysteresis_fraction) {
        return Err(Error::InvalidParameter {
            name: "hysteresis_fraction",
            reason: format!("must lie in [0, 0.5), got {hysteresis_fraction}"),
        });
    }
    let mid = cfg.midpoint();
    let toward_one = (cfg.i1 - cfg.i0).signum();
    let band = hysteresis_fraction * cfg.delta_i();
    let mut bits = Vec::with_capacity(windowed.len());
    let mut bit = match windowed.first() {
        Some(&x) => u8::from((x - mid) * toward_one > 0.0),
        None => return Ok(bits),
    };
    for &x in windowed {
        let u = (x - mid) * toward_one;
        if bit == 0 && u > band {
            bit = 1;
        } else if bit == 1 && u < -band {
            bit = 0;
        }
        bits.push(bit);
    }
    Ok(bits)
}

/// Number of transitions and the timestamp of each new value.
pub fn count_switchings(bits: &[u8], times: &[f64]) -> (usize, Vec<f64>) {
    let events: Vec<f64> = bits
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, _)| times.get(i + 1).copied().unwrap_or(f64::NAN))
        .collect();
    (events.len(), events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Raw current samples; empty unless requested.
    pub raw: Vec<f64>,
    /// Off-diagonal noise seen at each raw sample; empty unless requested.
    pub dv_true: Vec<f64>,
    pub states: Vec<StateSample>,
    pub windowed: Vec<WindowSample>,
    pub bits: Vec<u8>,
    pub switches: Vec<f64>,
    pub final_state: DensityMatrix,
}

impl TrajectoryRecord {
    pub fn switch_count(&self) -> usize {
        self.switches.len()
    }

    pub fn duration(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Re-filters the windowed series with a different hysteresis.
    pub fn refilter(
        &self,
        cfg: &DetectorConfig,
        hysteresis_fraction: f64,
    ) -> Result<(Vec<u8>, Vec<f64>)> {
        let currents: Vec<f64> = self.windowed.iter().map(|w| w.current).collect();
        let times: Vec<f64> = self.windowed.iter().map(|w| w.t).collect();
        let bits = binarize(&currents, cfg, hysteresis_fraction)?;
        let (_, events) = count_switchings(&bits, &times);
        Ok((bits, events))
    }

    /// Columns `t, I_raw[, dv_true][, rho00, rho01_re, rho01_im]`. State
    /// columns are filled on rows where a snapshot exists.
    pub fn write_raw_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let with_dv = !self.dv_true.is_empty();
        let with_state = !self.states.is_empty();
        let mut header = String::from("t,I_raw");
        if with_dv {
            header.push_str(",dv_true");
        }
        if with_state {
            header.push_str(",rho00,rho01_re,rho01_im");
        }
        writeln!(w, "{header}")?;
        let mut snaps = self.states.iter().peekable();
        for (k, &i) in self.raw.iter().enumerate() {
            let t = self.t0 + k as f64 * self.dt;
            write!(w, "{},{}", fmt_f64(t), fmt_f64(i))?;
            if with_dv {
                write!(w, ",{}", fmt_f64(self.dv_true[k]))?;
            }
            if with_state {
                while snaps.peek().is_some_and(|s| s.t < t - 0.5 * self.dt) {
                    snaps.next();
                }
                match snaps.peek() {
                    Some(s) if (s.t - t).abs() <= 0.5 * self.dt => {
                        let r = s.rho;
                        write!(
                            w,
                            ",{},{},{}",
                            fmt_f64(r.rho00()),
                            fmt_f64(r.rho01().re),
                            fmt_f64(r.rho01().im)
                        )?;
                    }
                    _ => write!(w, ",,,")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Columns `t, I_bar, bit`.
    pub fn write_windowed_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,I_bar,bit")?;
        for (s, b) in self.windowed.iter().zip(&self.bits) {
            writeln!(w, "{},{},{}", fmt_f64(s.t), fmt_f64(s.current), b)?;
        }
        Ok(())
    }

    /// Columns `t, rho00, rho01_re, rho01_im`.
    pub fn write_states_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,rho00,rho01_re,rho01_im")?;
        for s in &self.states {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(s.t),
                fmt_f64(s.rho.rho00()),
                fmt_f64(s.rho.rho01().re),
                fmt_f64(s.rho.rho01().im)
            )?;
        }
        Ok(())
    }
}

/// Float rendered with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
