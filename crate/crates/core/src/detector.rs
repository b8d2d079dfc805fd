//! Continuous weak measurement of the qubit populations.
//!
//! Each step of length `δt` records a current
//! `I = I₀ρ₀₀ + I₁ρ₁₁ + ξ`, `⟨ξ²⟩ = S_I/(2δt)`, reweights the populations by
//! the Gaussian likelihoods `exp(-(I - I_k)² δt / S_I)`, scales the coherence
//! by `√(ρ₀₀'ρ₁₁'/(ρ₀₀ρ₁₁))` and finally applies the coherent evolution.
//! The order (measure, update, evolve) is fixed so records are reproducible.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};
use crate::noise::OffDiagonalNoise;
use crate::qubit::{
    check_step, make_hamiltonian, DensityMatrix, Propagator, QubitHamiltonian, Stepping,
};
use crate::record::{binarize, count_switchings, StateSample, TrajectoryRecord, WindowAccumulator};

/// Upper bound on `δt·Γ_m`.
pub const MAX_DT_GAMMA: f64 = 0.01;

/// Knots of a time-dependent noise source are spaced so that the fastest
/// component advances by at most this phase between knots.
pub const NOISE_KNOT_PHASE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Mean current for `|0⟩`.
    pub i0: f64,
    /// Mean current for `|1⟩`.
    pub i1: f64,
    /// White-noise spectral density `S_I`.
    pub s_i: f64,
    /// Record sampling interval `δt`.
    pub dt: f64,
}

impl DetectorConfig {
    pub fn new(i0: f64, i1: f64, s_i: f64, dt: f64) -> Result<Self> {
        let cfg = Self { i0, i1, s_i, dt };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reference detector: `I₀ = 10`, `I₁ = 10.4`, `S_I = 0.4`, `δt = 0.05`.
    pub fn reference() -> Self {
        Self {
            i0: 10.0,
            i1: 10.4,
            s_i: 0.4,
            dt: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_finite("i0", self.i0)?;
        require_finite("i1", self.i1)?;
        require_positive("s_i", self.s_i)?;
        require_positive("dt", self.dt)?;
        if self.delta_i() == 0.0 {
            return Err(Error::InvalidParameter {
                name: "i1",
                reason: "state currents must differ (delta_i > 0)".into(),
            });
        }
        let g = self.dt * self.gamma_m();
        if g > MAX_DT_GAMMA {
            return Err(Error::Configuration(format!(
                "dt*gamma_m = {g:.4} exceeds {MAX_DT_GAMMA}; the record must sample well below 1/gamma_m"
            )));
        }
        Ok(())
    }

    /// `ΔI = |I₀ - I₁|`.
    pub fn delta_i(&self) -> f64 {
        (self.i0 - self.i1).abs()
    }

    /// Measurement rate `Γ_m = ΔI²/(4 S_I)`.
    pub fn gamma_m(&self) -> f64 {
        self.delta_i().powi(2) / (4.0 * self.s_i)
    }

    /// Standard deviation of `ξ`, `√(S_I/(2δt))`.
    pub fn noise_std(&self) -> f64 {
        (self.s_i / (2.0 * self.dt)).sqrt()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.i0 + self.i1)
    }

    /// Weak-measurement regime checks that do not block a run.
    pub fn warnings(&self, ez: f64, dv: f64) -> Vec<String> {
        let mut out = Vec::new();
        let mean = self.midpoint().abs();
        if self.delta_i() > 0.1 * mean {
            out.push(format!(
                "delta_i = {} is not small compared with the mean current {mean}",
                self.delta_i()
            ));
        }
        let gap = ez.hypot(dv);
        if self.gamma_m() > 0.1 * gap {
            out.push(format!(
                "gamma_m = {} is not small compared with sqrt(ez^2 + dv^2) = {gap}",
                self.gamma_m()
            ));
        }
        out
    }
}

/// Noise-free part of the current, `I₀ρ₀₀ + I₁ρ₁₁`.
pub fn mean_current(rho: &DensityMatrix, cfg: &DetectorConfig) -> f64 {
    cfg.i0 * rho.rho00() + cfg.i1 * rho.rho11()
}

/// One record sample: mean current plus `ξ ~ N(0, S_I/(2δt))`.
pub fn sample_current<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    cfg: &DetectorConfig,
    rng: &mut R,
) -> f64 {
    Kernel::new(cfg).sample(rho, rng)
}

/// Quantum Bayesian reweighting for one observed current sample.
pub fn bayesian_update(
    rho: &DensityMatrix,
    i_obs: f64,
    cfg: &DetectorConfig,
) -> Result<DensityMatrix> {
    Kernel::new(cfg).update(rho, i_obs)
}

/// Per-step constants of the detector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    i0: f64,
    i1: f64,
    /// `δt/S_I`
    k: f64,
    std: f64,
}

impl Kernel {
    pub(crate) fn new(cfg: &DetectorConfig) -> Self {
        Self {
            i0: cfg.i0,
            i1: cfg.i1,
            k: cfg.dt / cfg.s_i,
            std: cfg.noise_std(),
        }
    }

    #[inline]
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rho: &DensityMatrix, rng: &mut R) -> f64 {
        let xi: f64 = rng.sample(StandardNormal);
        self.i0 * rho.rho00() + self.i1 * rho.rho11() + self.std * xi
    }

    /// Likelihoods are scaled by the larger of the two so only one
    /// exponential is needed; the coherence picks up `√(L₀L₁)/Z`.
    pub(crate) fn update(&self, rho: &DensityMatrix, i_obs: f64) -> Result<DensityMatrix> {
        let out = self.update_raw(rho, i_obs);
        if out.rho00().is_nan() {
            return Err(Error::NumericalRange(format!(
                "likelihood normalization failed for current {i_obs}"
            )));
        }
        Ok(out)
    }

    /// NaN populations signal a failed normalization.
    #[inline(always)]
    fn update_raw(&self, rho: &DensityMatrix, i_obs: f64) -> DensityMatrix {
        let (p0, p1) = (rho.rho00(), rho.rho11());
        // ln L₀ - ln L₁
        let delta = -self.k * ((i_obs - self.i0).powi(2) - (i_obs - self.i1).powi(2));
        let damp = (-delta.abs()).exp();
        let (w0, w1) = if delta >= 0.0 {
            (p0, p1 * damp)
        } else {
            (p0 * damp, p1)
        };
        let z = w0 + w1;
        let z = if z.is_finite() && z > 0.0 {
            z
        } else {
            f64::NAN
        };
        let rho00 = w0 / z;
        // NaN must pass through, so no f64::min here
        let rho00 = if rho00 > 1.0 { 1.0 } else { rho00 };
        DensityMatrix::from_parts_unchecked(rho00, rho.rho01() * (damp.sqrt() / z))
    }
}

/// State carried along one selective trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub rho: DensityMatrix,
    pub t: f64,
    pub rng: ChaCha8Rng,
}

impl TrajectoryState {
    pub fn new(rho: DensityMatrix, t: f64, rng: ChaCha8Rng) -> Self {
        Self { rho, t, rng }
    }

    /// Measure, update, then evolve with a prepared propagator. Returns the
    /// recorded current.
    pub fn step(&mut self, prop: &Propagator, cfg: &DetectorConfig) -> Result<f64> {
        self.step_with(&Kernel::new(cfg), prop, cfg.dt)
    }

    #[inline]
    pub(crate) fn step_with(&mut self, kernel: &Kernel, prop: &Propagator, dt: f64) -> Result<f64> {
        let current = kernel.sample(&self.rho, &mut self.rng);
        let updated = kernel.update_raw(&self.rho, current);
        if updated.rho00().is_nan() {
            return Err(Error::NumericalRange(format!(
                "likelihood normalization failed for current {current}"
            )));
        }
        self.rho = prop.apply(&updated);
        self.t += dt;
        Ok(current)
    }
}

/// Value form of [`TrajectoryState::step`] for a given Hamiltonian.
pub fn step_trajectory(
    mut state: TrajectoryState,
    h: &QubitHamiltonian,
    cfg: &DetectorConfig,
    stepping: Stepping,
) -> Result<(TrajectoryState, f64)> {
    let prop = Propagator::new(h, cfg.dt, stepping)?;
    let current = state.step(&prop, cfg)?;
    Ok((state, current))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    pub ez: f64,
    /// Control shift added to the noise on the off-diagonal element.
    pub shift: f64,
    /// Start time on the noise clock.
    pub t0: f64,
    pub stepping: Stepping,
}

impl TrajectoryParams {
    pub fn new(ez: f64) -> Self {
        Self {
            ez,
            shift: 0.0,
            t0: 0.0,
            stepping: Stepping::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordOptions {
    /// Keep every raw current sample (and the true noise value) in memory.
    pub keep_raw: bool,
    /// Log the state every this many steps.
    pub state_stride: Option<usize>,
    pub hysteresis_fraction: f64,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            keep_raw: false,
            state_stride: None,
            hysteresis_fraction: crate::record::DEFAULT_HYSTERESIS,
        }
    }
}

/// Off-diagonal noise sampled on knots and interpolated linearly in between.
struct NoiseTrack<'a> {
    noise: &'a dyn OffDiagonalNoise,
    t0: f64,
    dt: f64,
    stride: usize,
    knot: usize,
    lo: f64,
    hi: f64,
}

impl<'a> NoiseTrack<'a> {
    fn new(noise: &'a dyn OffDiagonalNoise, t0: f64, dt: f64) -> Self {
        let bw = noise.bandwidth();
        let stride = if bw > 0.0 {
            ((NOISE_KNOT_PHASE / (bw * dt)).floor() as usize).max(1)
        } else {
            usize::MAX
        };
        let lo = noise.value(t0);
        let hi = if stride == usize::MAX {
            lo
        } else {
            noise.value(t0 + stride as f64 * dt)
        };
        Self {
            noise,
            t0,
            dt,
            stride,
            knot: 0,
            lo,
            hi,
        }
    }

    fn is_static(&self) -> bool {
        self.stride == usize::MAX
    }

    fn at(&mut self, step: usize) -> f64 {
        if self.is_static() {
            return self.lo;
        }
        if self.stride == 1 {
            return self.noise.value(self.t0 + step as f64 * self.dt);
        }
        let knot = step / self.stride;
        if knot != self.knot {
            let t = |j: usize| self.t0 + (j * self.stride) as f64 * self.dt;
            self.lo = if knot == self.knot + 1 {
                self.hi
            } else {
                self.noise.value(t(knot))
            };
            self.hi = self.noise.value(t(knot + 1));
            self.knot = knot;
        }
        let frac = (step - knot * self.stride) as f64 / self.stride as f64;
        self.lo + frac * (self.hi - self.lo)
    }
}

/// Runs one selective trajectory of `duration` starting from `rho0` at
/// `params.t0`. The Hamiltonian at step `k` uses `δV(t0 + k δt) + shift`.
///
/// The record always carries the windowed averages, the filtered bits and
/// the switch times; raw samples and state snapshots are kept on request.
pub fn run_trajectory(
    rho0: DensityMatrix,
    params: &TrajectoryParams,
    noise: &dyn OffDiagonalNoise,
    cfg: &DetectorConfig,
    duration: f64,
    rng: &mut ChaCha8Rng,
    options: &RecordOptions,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    require_finite("duration", duration)?;
    if duration < 0.0 {
        return Err(Error::InvalidParameter {
            name: "duration",
            reason: format!("must be non-negative, got {duration}"),
        });
    }
    let n_steps = (duration / cfg.dt).round() as usize;
    let gamma = cfg.gamma_m();
    let mut windows = WindowAccumulator::new(params.t0, cfg.dt, gamma)?;
    let mut track = NoiseTrack::new(noise, params.t0, cfg.dt);

    let kernel = Kernel::new(cfg);
    let mut state = TrajectoryState::new(rho0, params.t0, rng.clone());
    let mut raw = Vec::new();
    let mut dv_true = Vec::new();
    if options.keep_raw {
        raw.reserve(n_steps);
        dv_true.reserve(n_steps);
    }
    let mut states = Vec::new();

    let build = |dv: f64| -> Result<Propagator> {
        let h = make_hamiltonian(params.ez, dv, params.shift)?;
        check_step(&h, cfg.dt)?;
        Ok(Propagator::new_unchecked(&h, cfg.dt, params.stepping))
    };
    let mut prop = build(track.at(0))?;

    for k in 0..n_steps {
        let dv = track.at(k);
        if !track.is_static() {
            prop = build(dv)?;
        }
        if let Some(stride) = options.state_stride {
            if k % stride.max(1) == 0 {
                states.push(StateSample {
                    t: state.t,
                    rho: state.rho,
                });
            }
        }
        state.t = params.t0 + k as f64 * cfg.dt;
        let current = state.step_with(&kernel, &prop, cfg.dt)?;
        windows.push(current);
        if options.keep_raw {
            raw.push(current);
            dv_true.push(dv);
        }
    }
    state.t = params.t0 + n_steps as f64 * cfg.dt;
    if options.state_stride.is_some() {
        states.push(StateSample {
            t: state.t,
            rho: state.rho,
        });
    }
    *rng = state.rng;

    let windowed = windows.finish();
    let currents: Vec<f64> = windowed.iter().map(|w| w.current).collect();
    let bits = binarize(&currents, cfg, options.hysteresis_fraction)?;
    let times: Vec<f64> = windowed.iter().map(|w| w.t).collect();
    let (_, switches) = count_switchings(&bits, &times);

    Ok(TrajectoryRecord {
        t0: params.t0,
        dt: cfg.dt,
        n_steps,
        raw,
        dv_true,
        states,
        windowed,
        bits,
        switches,
        final_state: state.rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::ConstantNoise;
    use crate::seeding::stream_rng;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn cfg() -> DetectorConfig {
        DetectorConfig::reference()
    }

    #[test]
    fn reference_rates() {
        assert_abs_diff_eq!(cfg().gamma_m(), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(cfg().noise_std().powi(2), 4.0, epsilon = 1e-12);
        assert!(cfg().warnings(7.0, 0.82).is_empty());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(DetectorConfig::new(10.0, 10.0, 0.4, 0.05).is_err());
        assert!(DetectorConfig::new(10.0, 10.4, 0.0, 0.05).is_err());
        assert!(matches!(
            DetectorConfig::new(10.0, 10.4, 0.4, 0.2),
            Err(Error::Configuration(_))
        ));
        let strong = DetectorConfig::new(0.0, 10.0, 0.4, 1e-6).unwrap();
        assert_eq!(strong.warnings(7.0, 0.0).len(), 2);
    }

    #[test]
    fn noiseless_current_levels() {
        assert_abs_diff_eq!(mean_current(&DensityMatrix::ground(), &cfg()), 10.0);
        assert_abs_diff_eq!(
            mean_current(&DensityMatrix::maximally_mixed(), &cfg()),
            10.2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn current_noise_variance() {
        let mut rng = stream_rng(17, 0);
        let n = 1_000_000;
        let rho = DensityMatrix::ground();
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = sample_current(&rho, &cfg(), &mut rng) - 10.0;
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((var - 4.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn eigenstates_are_fixed_points() {
        for i in [-100.0, 10.0, 10.4, 55.0] {
            assert_eq!(
                bayesian_update(&DensityMatrix::ground(), i, &cfg()).unwrap(),
                DensityMatrix::ground()
            );
            assert_eq!(
                bayesian_update(&DensityMatrix::excited(), i, &cfg()).unwrap(),
                DensityMatrix::excited()
            );
        }
    }

    #[test]
    fn non_finite_current_is_an_error() {
        let rho = DensityMatrix::maximally_mixed();
        assert!(matches!(
            bayesian_update(&rho, f64::INFINITY, &cfg()),
            Err(Error::NumericalRange(_))
        ));
        assert!(bayesian_update(&rho, f64::NAN, &cfg()).is_err());
    }

    #[test]
    fn midpoint_current_leaves_populations_unchanged() {
        let out = bayesian_update(&DensityMatrix::maximally_mixed(), 10.2, &cfg()).unwrap();
        assert_abs_diff_eq!(out.rho00(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn hand_evaluated_likelihood_ratio() {
        // L₁/L₀ = exp(-ΔI² δt / S_I) = exp(-0.02) at I = I₀
        let out = bayesian_update(&DensityMatrix::maximally_mixed(), 10.0, &cfg()).unwrap();
        let expected = 1.0 / (1.0 + (-0.02f64).exp());
        assert_abs_diff_eq!(out.rho00(), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(out.rho00(), 0.505_000, epsilon = 1e-5);
    }

    #[test]
    fn update_keeps_pure_states_pure() {
        let rho =
            DensityMatrix::new(0.3, Complex64::from_polar((0.3f64 * 0.7).sqrt(), 0.4)).unwrap();
        let mut r = rho;
        for i in [8.0, 12.0, 10.1, 9.5, 11.3] {
            r = bayesian_update(&r, i, &cfg()).unwrap();
            assert_abs_diff_eq!(r.purity(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn update_matches_unnormalized_bayes_rule() {
        let rho = DensityMatrix::new(0.3, Complex64::new(0.2, -0.1)).unwrap();
        let i = 9.3;
        let l = |ik: f64| (-(i - ik) * (i - ik) * 0.05 / 0.4f64).exp();
        let (l0, l1) = (l(10.0), l(10.4));
        let z = rho.rho00() * l0 + rho.rho11() * l1;
        let out = bayesian_update(&rho, i, &cfg()).unwrap();
        assert_abs_diff_eq!(out.rho00(), rho.rho00() * l0 / z, epsilon = 1e-15);
        assert_abs_diff_eq!(
            (out.rho01() - rho.rho01() * (l0 * l1).sqrt() / z).norm(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn measured_eigenstate_does_not_relax() {
        let h = make_hamiltonian(7.0, 0.0, 0.0).unwrap();
        let prop = Propagator::new(&h, 0.05, Stepping::Exact).unwrap();
        let mut st = TrajectoryState::new(DensityMatrix::ground(), 0.0, stream_rng(1, 0));
        for _ in 0..1_000_000 {
            st.step(&prop, &cfg()).unwrap();
        }
        assert!(st.rho.rho00() >= 0.999);
    }

    #[test]
    fn step_trajectory_matches_propagator_step() {
        let h = make_hamiltonian(7.0, 0.82, 0.0).unwrap();
        let a = TrajectoryState::new(DensityMatrix::ground(), 0.0, stream_rng(3, 0));
        let mut b = a.clone();
        let (a, ia) = step_trajectory(a, &h, &cfg(), Stepping::Exact).unwrap();
        let ib = b
            .step(&Propagator::new(&h, 0.05, Stepping::Exact).unwrap(), &cfg())
            .unwrap();
        assert_eq!(ia, ib);
        assert_eq!(a.rho, b.rho);
        assert_abs_diff_eq!(a.t, 0.05);
    }

    #[test]
    fn zero_duration_gives_empty_record() {
        let mut rng = stream_rng(0, 0);
        let rec = run_trajectory(
            DensityMatrix::ground(),
            &TrajectoryParams::new(7.0),
            &ConstantNoise(0.82),
            &cfg(),
            0.0,
            &mut rng,
            &RecordOptions {
                keep_raw: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(rec.raw.is_empty() && rec.windowed.is_empty() && rec.switches.is_empty());
        assert_eq!(rec.final_state, DensityMatrix::ground());
    }

    #[test]
    fn fixed_seed_gives_identical_records() {
        let run = |seed| {
            let mut rng = stream_rng(seed, 4);
            run_trajectory(
                DensityMatrix::ground(),
                &TrajectoryParams::new(7.0),
                &ConstantNoise(0.82),
                &cfg(),
                2000.0,
                &mut rng,
                &RecordOptions {
                    keep_raw: true,
                    ..Default::default()
                },
            )
            .unwrap()
        };
        let (a, b, c) = (run(5), run(5), run(6));
        assert_eq!(a.raw, b.raw);
        assert_eq!(a.windowed, b.windowed);
        assert_ne!(a.raw, c.raw);
        assert_eq!(a.raw.len(), 40_000);
        assert_eq!(a.windowed.len(), 100);
    }

    #[test]
    fn run_trajectory_equals_repeated_steps() {
        let noise = ConstantNoise(0.5);
        let mut rng = stream_rng(8, 1);
        let rec = run_trajectory(
            DensityMatrix::ground(),
            &TrajectoryParams::new(7.0),
            &noise,
            &cfg(),
            50.0,
            &mut rng,
            &RecordOptions {
                keep_raw: true,
                ..Default::default()
            },
        )
        .unwrap();
        let h = make_hamiltonian(7.0, 0.5, 0.0).unwrap();
        let mut st = TrajectoryState::new(DensityMatrix::ground(), 0.0, stream_rng(8, 1));
        let mut manual = Vec::new();
        for _ in 0..1000 {
            let (s, i) = step_trajectory(st, &h, &cfg(), Stepping::Exact).unwrap();
            st = s;
            manual.push(i);
        }
        assert_eq!(rec.raw, manual);
        assert_eq!(rec.final_state, st.rho);
    }

    #[test]
    fn rng_continues_across_calls() {
        let opts = RecordOptions {
            keep_raw: true,
            ..Default::default()
        };
        let mut rng = stream_rng(2, 0);
        let p = TrajectoryParams::new(7.0);
        let a = run_trajectory(
            DensityMatrix::ground(),
            &p,
            &ConstantNoise(0.3),
            &cfg(),
            20.0,
            &mut rng,
            &opts,
        )
        .unwrap();
        let p2 = TrajectoryParams { t0: 20.0, ..p };
        let b = run_trajectory(
            a.final_state,
            &p2,
            &ConstantNoise(0.3),
            &cfg(),
            20.0,
            &mut rng,
            &opts,
        )
        .unwrap();
        let mut rng = stream_rng(2, 0);
        let whole = run_trajectory(
            DensityMatrix::ground(),
            &p,
            &ConstantNoise(0.3),
            &cfg(),
            40.0,
            &mut rng,
            &opts,
        )
        .unwrap();
        assert_eq!([a.raw, b.raw].concat(), whole.raw);
    }

    #[test]
    fn interpolated_noise_tracks_the_exact_sum() {
        use crate::noise::{sample_noise_model, NoiseSpec};
        let spec = NoiseSpec::with_rms(0.8, 1e-6, 100).unwrap();
        let model = sample_noise_model(&spec, 4).unwrap();
        let mut track = NoiseTrack::new(&model, 123.0, 0.05);
        assert!(track.stride > 1);
        let mut worst: f64 = 0.0;
        for k in (0..200_000).step_by(37) {
            worst = worst.max((track.at(k) - model.eval(123.0 + k as f64 * 0.05)).abs());
        }
        // (B_w · knot spacing)² / 8 times the summed amplitudes
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn initially_pure_states_stay_pure() {
        let mut rng = stream_rng(9, 9);
        let rec = run_trajectory(
            DensityMatrix::from_pure(&crate::qubit::PureState::plus()),
            &TrajectoryParams::new(7.0),
            &ConstantNoise(0.82),
            &cfg(),
            50_000.0,
            &mut rng,
            &RecordOptions {
                state_stride: Some(10_000),
                ..Default::default()
            },
        )
        .unwrap();
        for s in &rec.states {
            assert_abs_diff_eq!(s.rho.purity(), 1.0, epsilon = 1e-9);
        }
    }
}
