//! Two-phase calibration of the off-diagonal noise from switching counts.
//!
//! Phase 1 records for `T = 2n_p/Γ_m` with no control shift; the switch count
//! gives `δV₁ ≈ |δV|`. Phase 2 continues on the same noise clock with the
//! coupling shifted by `-δV₁/2` and gives `δV₂ ≈ |δV - δV₁/2|`. The two
//! magnitudes fix the sign:
//!
//! ```text
//! δV_c = δV₁/2 + δV₂        if δV₁ ≥ δV₂
//! δV_c = -δV₁/2 - δV₂/3     otherwise
//! ```

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{run_trajectory, DetectorConfig, RecordOptions, TrajectoryParams};
use crate::error::{require_finite, require_positive, Error, Result};
use crate::noise::{sample_noise_model, ConstantNoise, NoiseSpec, OffDiagonalNoise};
use crate::qubit::{DensityMatrix, Stepping};
use crate::record::DEFAULT_HYSTERESIS;
use crate::seeding::{derive_seed, stream_rng};

/// Fewest repetitions accepted per bandwidth in [`bandwidth_sweep`].
pub const MIN_SWEEP_REPETITIONS: usize = 20;

/// Everything a calibration run needs besides the noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSetup {
    pub ez: f64,
    pub detector: DetectorConfig,
    /// Windows per phase; each phase lasts `2 n_p / Γ_m`.
    pub n_p: usize,
    pub hysteresis_fraction: f64,
    pub stepping: Stepping,
}

impl CalibrationSetup {
    /// `E_z = 7`, reference detector, `n_p = 2000`.
    pub fn reference() -> Self {
        Self {
            ez: 7.0,
            detector: DetectorConfig::reference(),
            n_p: 2000,
            hysteresis_fraction: DEFAULT_HYSTERESIS,
            stepping: Stepping::Exact,
        }
    }

    pub fn phase_duration(&self) -> f64 {
        2.0 * self.n_p as f64 / self.detector.gamma_m()
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("ez", self.ez)?;
        self.detector.validate()?;
        if self.n_p == 0 {
            return Err(Error::InvalidParameter {
                name: "n_p",
                reason: "must be at least 1".into(),
            });
        }
        if !(0.0..0.5).contains(&self.hysteresis_fraction) {
            return Err(Error::InvalidParameter {
                name: "hysteresis_fraction",
                reason: format!("must lie in [0, 0.5), got {}", self.hysteresis_fraction),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub dv1: f64,
    pub dv2: f64,
    pub dv_c: f64,
    pub n1: usize,
    pub n2: usize,
    pub phase_duration: f64,
    /// `√ΔV₁²` for one phase.
    pub predicted_sigma: f64,
    pub true_dv_start: f64,
    pub true_dv_end: f64,
    /// `δV_c - δV(t_end)`.
    pub residue: f64,
}

/// `√(n (4E_z² + Γ_m²) / (2 Γ_m T))`, the magnitude whose mean switch count
/// over `T` is `n`.
pub fn estimate_magnitude(n_jp: usize, duration: f64, ez: f64, gamma_m: f64) -> Result<f64> {
    require_positive("duration", duration)?;
    require_finite("ez", ez)?;
    require_positive("gamma_m", gamma_m)?;
    Ok((n_jp as f64 * (4.0 * ez * ez + gamma_m * gamma_m) / (2.0 * gamma_m * duration)).sqrt())
}

/// Signed estimate from the two phase magnitudes. Ties take the positive branch.
pub fn combine_estimates(dv1: f64, dv2: f64) -> f64 {
    debug_assert!(dv1 >= 0.0 && dv2 >= 0.0);
    if dv1 >= dv2 {
        dv1 / 2.0 + dv2
    } else {
        -dv1 / 2.0 - dv2 / 3.0
    }
}

/// Runs both phases from `|0⟩`, starting at `t0` on the noise clock.
pub fn run_calibration(
    setup: &CalibrationSetup,
    noise: &dyn OffDiagonalNoise,
    t0: f64,
    rng: &mut ChaCha8Rng,
) -> Result<CalibrationResult> {
    setup.validate()?;
    require_finite("t0", t0)?;
    let cfg = &setup.detector;
    let gamma = cfg.gamma_m();
    let phase = setup.phase_duration();
    let options = RecordOptions {
        hysteresis_fraction: setup.hysteresis_fraction,
        ..Default::default()
    };

    let first = TrajectoryParams {
        ez: setup.ez,
        shift: 0.0,
        t0,
        stepping: setup.stepping,
    };
    let rec1 = run_trajectory(
        DensityMatrix::ground(),
        &first,
        noise,
        cfg,
        phase,
        rng,
        &options,
    )?;
    let n1 = rec1.switch_count();
    let dv1 = estimate_magnitude(n1, phase, setup.ez, gamma)?;

    let second = TrajectoryParams {
        shift: -dv1 / 2.0,
        t0: t0 + phase,
        ..first
    };
    let rec2 = run_trajectory(rec1.final_state, &second, noise, cfg, phase, rng, &options)?;
    let n2 = rec2.switch_count();
    let dv2 = estimate_magnitude(n2, phase, setup.ez, gamma)?;

    let dv_c = combine_estimates(dv1, dv2);
    let true_dv_end = noise.value(t0 + 2.0 * phase);
    Ok(CalibrationResult {
        dv1,
        dv2,
        dv_c,
        n1,
        n2,
        phase_duration: phase,
        predicted_sigma: statistical_uncertainty(setup.ez, gamma, phase)?.sqrt(),
        true_dv_start: noise.value(t0),
        true_dv_end,
        residue: dv_c - true_dv_end,
    })
}

/// [`run_calibration`] with a fresh stream derived from `seed`.
pub fn run_calibration_seeded(
    setup: &CalibrationSetup,
    noise: &dyn OffDiagonalNoise,
    t0: f64,
    seed: u64,
) -> Result<CalibrationResult> {
    run_calibration(setup, noise, t0, &mut stream_rng(seed, 0))
}

/// `runs` independent calibrations against a static `δV`, run in parallel.
/// Run `i` uses stream `i` of `seed`.
pub fn calibrate_constant(
    setup: &CalibrationSetup,
    dv: f64,
    runs: usize,
    seed: u64,
) -> Result<Vec<CalibrationResult>> {
    let noise = ConstantNoise(dv);
    (0..runs)
        .into_par_iter()
        .map(|i| run_calibration(setup, &noise, 0.0, &mut stream_rng(seed, i as u64)))
        .collect()
}

/// `ΔV₁² = (4E_z² + Γ_m²)/(8 Γ_m T)`.
pub fn statistical_uncertainty(ez: f64, gamma_m: f64, duration: f64) -> Result<f64> {
    require_finite("ez", ez)?;
    require_positive("gamma_m", gamma_m)?;
    require_positive("duration", duration)?;
    Ok((4.0 * ez * ez + gamma_m * gamma_m) / (8.0 * gamma_m * duration))
}

/// Short-time drift `⟨(δV(T) - δV(0))²⟩ = (β ⟨α²⟩/2) Σ_n ω_n · T²`.
///
/// With `alpha_sq = 1/3` and many components this is `β B_w² T²/(12 Δω)`.
/// The sampled model has `⟨α²⟩ = 1`. Valid while `B_w T ≲ 1`, see
/// [`drift_formula_valid`].
pub fn drift_variance(spec: &NoiseSpec, duration: f64, alpha_sq: f64) -> f64 {
    0.5 * spec.beta * alpha_sq * spec.omega_sum() * duration * duration
}

pub fn drift_formula_valid(spec: &NoiseSpec, duration: f64) -> bool {
    spec.band_width() * duration <= 1.0
}

/// Minimizer of `ΔV₁²(T) + ΔV₂²(T)`: `(A/(2C))^{1/3}` with
/// `A = (4E_z² + Γ_m²)/(8Γ_m)` and `ΔV₂² = C T²`.
pub fn optimal_time(ez: f64, gamma_m: f64, spec: &NoiseSpec, alpha_sq: f64) -> Result<f64> {
    require_positive("ez", ez)?;
    require_positive("gamma_m", gamma_m)?;
    require_positive("alpha_sq", alpha_sq)?;
    spec.validate()?;
    let a = (4.0 * ez * ez + gamma_m * gamma_m) / (8.0 * gamma_m);
    let c = drift_variance(spec, 1.0, alpha_sq);
    Ok((a / (2.0 * c)).cbrt())
}

/// `|(δV_c - δV_end)/δV_start|⁴`.
pub fn dephasing_reduction_factor(dv_c: f64, dv_end: f64, dv_start: f64) -> Result<f64> {
    if dv_start == 0.0 {
        return Err(Error::UndefinedFactor);
    }
    Ok(((dv_c - dv_end) / dv_start).powi(4))
}

/// Noise family for the bandwidth sweep: fixed `β` and `Δω`, with
/// `N = round(B_w/Δω)` components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepNoise {
    pub beta: f64,
    pub delta_omega: f64,
}

impl SweepNoise {
    pub fn spec_for(&self, bandwidth: f64) -> Result<NoiseSpec> {
        require_positive("bandwidth", bandwidth)?;
        let n = (bandwidth / self.delta_omega).round().max(1.0) as usize;
        NoiseSpec::new(self.beta, self.delta_omega, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub bandwidth: f64,
    pub n_components: usize,
    pub mean_sq_residue: f64,
    /// Standard error of `mean_sq_residue`.
    pub stderr: f64,
    /// Empirical `⟨δV(t_end)²⟩`.
    pub mean_sq_dv: f64,
    /// Empirical `⟨(δV(t_end) - δV(t₀))²⟩` across the calibration.
    pub mean_sq_drift: f64,
    pub residues: Vec<f64>,
}

impl SweepRow {
    pub fn fraction_within(&self, bound: f64) -> f64 {
        let n = self.residues.iter().filter(|r| r.abs() <= bound).count();
        n as f64 / self.residues.len().max(1) as f64
    }
}

/// Mean squared residue per bandwidth over fresh noise realizations.
///
/// Repetition `r` at bandwidth index `b` draws its noise from
/// `derive_seed([seed, b, r])` and its record from stream `r` of
/// `derive_seed([seed, b])`, so the table is independent of thread count.
pub fn bandwidth_sweep(
    setup: &CalibrationSetup,
    family: &SweepNoise,
    bandwidths: &[f64],
    repetitions: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    setup.validate()?;
    if repetitions < MIN_SWEEP_REPETITIONS {
        return Err(Error::InvalidParameter {
            name: "repetitions",
            reason: format!("need at least {MIN_SWEEP_REPETITIONS}, got {repetitions}"),
        });
    }
    bandwidths
        .iter()
        .enumerate()
        .map(|(b, &bw)| {
            let spec = family.spec_for(bw)?;
            let record_seed = derive_seed(&[seed, b as u64]);
            let results: Vec<CalibrationResult> = (0..repetitions)
                .into_par_iter()
                .map(|r| {
                    let model =
                        sample_noise_model(&spec, derive_seed(&[seed, b as u64, r as u64]))?;
                    run_calibration(setup, &model, 0.0, &mut stream_rng(record_seed, r as u64))
                })
                .collect::<Result<_>>()?;
            let residues: Vec<f64> = results.iter().map(|c| c.residue).collect();
            let sq: Vec<f64> = residues.iter().map(|r| r * r).collect();
            let n = sq.len() as f64;
            let mean = sq.iter().sum::<f64>() / n;
            let var = sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(SweepRow {
                bandwidth: bw,
                n_components: spec.n_components,
                mean_sq_residue: mean,
                stderr: (var / n).sqrt(),
                mean_sq_dv: results.iter().map(|c| c.true_dv_end.powi(2)).sum::<f64>() / n,
                mean_sq_drift: results
                    .iter()
                    .map(|c| (c.true_dv_end - c.true_dv_start).powi(2))
                    .sum::<f64>()
                    / n,
                residues,
            })
        })
        .collect()
}

/// Bandwidth where the residue curve first climbs through the geometric mean
/// of its two ends, interpolated on log-log axes.
pub fn residue_knee(rows: &[SweepRow]) -> Option<f64> {
    let (first, last) = (rows.first()?, rows.last()?);
    let level = (first.mean_sq_residue * last.mean_sq_residue).sqrt().ln();
    rows.windows(2).find_map(|w| {
        let (y0, y1) = (w[0].mean_sq_residue.ln(), w[1].mean_sq_residue.ln());
        if y0 <= level && y1 > level {
            let (x0, x1) = (w[0].bandwidth.ln(), w[1].bandwidth.ln());
            Some((x0 + (level - y0) / (y1 - y0) * (x1 - x0)).exp())
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn magnitude_inversion() {
        assert_eq!(estimate_magnitude(0, 40_000.0, 7.0, 0.1).unwrap(), 0.0);
        assert_abs_diff_eq!(
            estimate_magnitude(29, 40_000.0, 7.0, 0.1).unwrap(),
            0.843,
            epsilon = 5e-4
        );
        let a = estimate_magnitude(7, 100.0, 2.0, 0.3).unwrap();
        assert_abs_diff_eq!(
            estimate_magnitude(28, 100.0, 2.0, 0.3).unwrap(),
            2.0 * a,
            epsilon = 1e-14
        );
        assert!(estimate_magnitude(3, 0.0, 7.0, 0.1).is_err());
    }

    #[test]
    fn combination_branches() {
        assert_abs_diff_eq!(combine_estimates(0.8, 0.4), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(combine_estimates(0.8, 1.2), -0.8, epsilon = 1e-15);
        assert_eq!(combine_estimates(0.5, 0.5), 0.75);
        assert_eq!(combine_estimates(0.0, 0.0), 0.0);
    }

    #[test]
    fn combination_inverts_the_noiseless_protocol() {
        for i in -200..=200 {
            let v = i as f64 * 0.01;
            if v == 0.0 {
                continue;
            }
            let dv1 = v.abs();
            let dv2 = (v - dv1 / 2.0).abs();
            assert_abs_diff_eq!(combine_estimates(dv1, dv2), v, epsilon = 1e-12);
        }
    }

    #[test]
    fn statistical_error_budget() {
        let s = statistical_uncertainty(7.0, 0.1, 40_000.0).unwrap();
        assert_abs_diff_eq!(s, 196.01 / 32_000.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s, 6.125e-3, epsilon = 1e-6);
        assert_abs_diff_eq!(
            statistical_uncertainty(7.0, 0.1, 80_000.0).unwrap(),
            s / 2.0,
            epsilon = 1e-15
        );
        assert!(statistical_uncertainty(7.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn drift_budget() {
        let spec = NoiseSpec::new(2e-8, 1e-7, 100).unwrap();
        assert_eq!(drift_variance(&spec, 0.0, 1.0), 0.0);
        let d = drift_variance(&spec, 1000.0, 1.0);
        assert_abs_diff_eq!(drift_variance(&spec, 2000.0, 1.0), 4.0 * d, epsilon = 1e-18);
        // many components: the closed form β B_w² T² / (12 Δω)
        let big = NoiseSpec::new(2e-8, 1e-9, 100_000).unwrap();
        let closed = big.beta * big.band_width().powi(2) * 1e6 / (12.0 * big.delta_omega);
        assert!((drift_variance(&big, 1000.0, 1.0 / 3.0) / closed - 1.0).abs() < 1e-4);
        assert!(drift_formula_valid(&spec, 1e4) && !drift_formula_valid(&spec, 1e6));
    }

    #[test]
    fn drift_matches_monte_carlo() {
        let spec = NoiseSpec::new(1e-8, 1e-7, 100).unwrap();
        let t = 0.1 / spec.band_width();
        let m = 2000;
        let mean_sq = (0..m)
            .map(|s| {
                let model = sample_noise_model(&spec, s).unwrap();
                (model.eval(t) - model.eval(0.0)).powi(2)
            })
            .sum::<f64>()
            / m as f64;
        let expected = drift_variance(&spec, t, 1.0);
        assert!(
            (mean_sq / expected - 1.0).abs() < 0.1,
            "{mean_sq} vs {expected}"
        );
    }

    fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        while (hi - lo) > 1e-10 * hi {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if f(a) < f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn optimal_time_matches_numeric_minimum() {
        let spec = NoiseSpec::with_rms(0.8, 1e-7, 100).unwrap();
        for alpha_sq in [1.0, 1.0 / 3.0] {
            let t_star = optimal_time(7.0, 0.1, &spec, alpha_sq).unwrap();
            let total = |t: f64| {
                statistical_uncertainty(7.0, 0.1, t).unwrap() + drift_variance(&spec, t, alpha_sq)
            };
            let numeric = golden_section(total, 1.0, 1e8);
            assert!(
                (t_star / numeric - 1.0).abs() < 1e-3,
                "{t_star} vs {numeric}"
            );
        }
    }

    #[test]
    fn optimal_time_cube_root_law() {
        let spec = NoiseSpec::new(1e-8, 1e-7, 50).unwrap();
        let eight = NoiseSpec { beta: 8e-8, ..spec };
        let a = optimal_time(7.0, 0.1, &spec, 1.0).unwrap();
        assert_abs_diff_eq!(
            optimal_time(7.0, 0.1, &eight, 1.0).unwrap(),
            a / 2.0,
            epsilon = 1e-9 * a
        );
    }

    #[test]
    fn reduction_factor() {
        assert_abs_diff_eq!(
            dephasing_reduction_factor(0.73, 0.87, 0.82).unwrap(),
            8.5e-4,
            epsilon = 5e-6
        );
        assert_eq!(dephasing_reduction_factor(0.5, 0.5, 0.8).unwrap(), 0.0);
        assert!(matches!(
            dephasing_reduction_factor(0.5, 0.4, 0.0),
            Err(Error::UndefinedFactor)
        ));
    }

    #[test]
    fn zero_noise_gives_zero_estimate() {
        let setup = CalibrationSetup::reference();
        let mut clean = 0;
        for seed in 0..6 {
            let r = run_calibration_seeded(&setup, &ConstantNoise(0.0), 0.0, seed).unwrap();
            if r.n1 == 0 && r.n2 == 0 {
                assert_eq!(r.dv_c, 0.0);
                clean += 1;
            }
        }
        assert!(clean >= 3, "{clean}");
    }

    #[test]
    fn result_fields_are_consistent() {
        let setup = CalibrationSetup::reference();
        let r = run_calibration_seeded(&setup, &ConstantNoise(0.8), 0.0, 42).unwrap();
        assert!(r.dv1 >= 0.0 && r.dv2 >= 0.0);
        assert_eq!(r.dv_c, combine_estimates(r.dv1, r.dv2));
        assert_eq!(r.residue, r.dv_c - 0.8);
        assert_abs_diff_eq!(r.phase_duration, 40_000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            r.predicted_sigma,
            (196.01f64 / 32_000.0).sqrt(),
            epsilon = 1e-12
        );
        let again = run_calibration_seeded(&setup, &ConstantNoise(0.8), 0.0, 42).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn sweep_needs_enough_repetitions() {
        let fam = SweepNoise {
            beta: 1e-8,
            delta_omega: 1e-7,
        };
        assert!(bandwidth_sweep(&CalibrationSetup::reference(), &fam, &[1e-6], 5, 0).is_err());
        assert_eq!(fam.spec_for(1e-5).unwrap().n_components, 100);
    }

    #[test]
    fn knee_interpolation() {
        let row = |bw: f64, m: f64| SweepRow {
            bandwidth: bw,
            n_components: 1,
            mean_sq_residue: m,
            stderr: 0.0,
            mean_sq_dv: 0.0,
            mean_sq_drift: 0.0,
            residues: vec![],
        };
        let rows = [row(1e-6, 0.01), row(1e-5, 0.01), row(1e-4, 1.0)];
        let knee = residue_knee(&rows).unwrap();
        // level 0.1 is halfway up in log between 1e-5 and 1e-4
        assert_abs_diff_eq!(knee.log10(), -4.5, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn reduction_factor_is_sign_symmetric(a in -2.0f64..2.0, b in -2.0f64..2.0, c in 0.01f64..2.0) {
            let f = dephasing_reduction_factor(a, b, c).unwrap();
            prop_assert!((f - dephasing_reduction_factor(-a, -b, -c).unwrap()).abs() <= 1e-12 * f.max(1.0));
        }

        #[test]
        fn combined_sign_follows_branch(dv1 in 0.0f64..2.0, dv2 in 0.0f64..2.0) {
            let c = combine_estimates(dv1, dv2);
            if dv1 >= dv2 { prop_assert!(c >= 0.0) } else { prop_assert!(c < 0.0) }
        }
    }
}
