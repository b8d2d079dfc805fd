//! Experiment configuration: TOML on disk, validated before anything runs.

use std::path::{Path, PathBuf};

use qcal_core::calibration::{CalibrationSetup, SweepNoise, MIN_SWEEP_REPETITIONS};
use qcal_core::detector::DetectorConfig;
use qcal_core::gates::GateKind;
use qcal_core::noise::NoiseSpec;
use qcal_core::qubit::{make_hamiltonian, Propagator};
use qcal_core::record::DEFAULT_HYSTERESIS;
use qcal_core::{PureState, Stepping};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ez: f64,
    #[serde(default = "DetectorConfig::reference")]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub gates: GatesConfig,
}

/// Either a static value (`constant`) or a 1/f spectrum given by `beta` or
/// `rms`, `delta_omega` and `n_components`. Empty means no noise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_components: Option<usize>,
    #[serde(default)]
    pub noise_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSource {
    Constant(f64),
    Spectrum(NoiseSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub n_p: usize,
    pub hysteresis_fraction: f64,
    pub stepping: Stepping,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            n_p: 2000,
            hysteresis_fraction: DEFAULT_HYSTERESIS,
            stepping: Stepping::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub repetitions: usize,
    pub output_dir: PathBuf,
    /// Overrides the per-command default length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            repetitions: 1,
            output_dir: PathBuf::from("qcal-out"),
            duration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// Control shift added to the noise.
    pub shift: f64,
    pub keep_raw: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_stride: Option<usize>,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            shift: 0.0,
            keep_raw: true,
            state_stride: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Static coupling; defaults to `noise.constant`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dv: Option<f64>,
    pub dt: f64,
    /// Extra measurement rates for the rate-versus-Γ_m curve.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma_sweep: Vec<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            dv: None,
            dt: 0.005,
            gamma_sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub bandwidths: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            bandwidths: vec![1e-6, 2.5e-6, 5e-6, 1e-5, 2e-5, 5e-5, 1e-4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatesConfig {
    pub gate: GateKind,
    pub dv_values: Vec<f64>,
    pub initial_state: InitialState,
    /// Calibrated curve on top of the raw one; needs a 1/f noise spectrum.
    pub calibrate: bool,
    pub realizations: usize,
    /// Gates for the two-qubit alternating schedule.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<GateKind>,
}

impl Default for GatesConfig {
    fn default() -> Self {
        Self {
            gate: GateKind::Bitflip,
            dv_values: (0..=8).map(|i| i as f64 / 10.0).collect(),
            initial_state: InitialState::Zero,
            calibrate: true,
            realizations: 50,
            schedule: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    Zero,
    One,
    Plus,
}

impl InitialState {
    pub fn state(self) -> PureState {
        match self {
            InitialState::Zero => PureState::zero(),
            InitialState::One => PureState::one(),
            InitialState::Plus => PureState::plus(),
        }
    }
}

/// A violated invariant in the configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let core = |e: qcal_core::Error| invalid(e.to_string());
        self.setup().validate().map_err(core)?;
        // the bare splitting must already fit the step limit
        let h = make_hamiltonian(self.ez, 0.0, 0.0).map_err(core)?;
        Propagator::new(&h, self.detector.dt, self.protocol.stepping).map_err(core)?;
        self.noise_source()?;
        if self.run.repetitions == 0 {
            return Err(invalid(
                "invalid parameter `run.repetitions`: must be at least 1",
            ));
        }
        if let Some(d) = self.run.duration {
            if !(d.is_finite() && d >= 0.0) {
                return Err(invalid(format!(
                    "invalid parameter `run.duration`: must be finite and non-negative, got {d}"
                )));
            }
        }
        if !self.trajectory.shift.is_finite() {
            return Err(invalid(
                "invalid parameter `trajectory.shift`: must be finite",
            ));
        }
        if self.trajectory.state_stride == Some(0) {
            return Err(invalid(
                "invalid parameter `trajectory.state_stride`: must be at least 1",
            ));
        }
        if !(self.ensemble.dt.is_finite() && self.ensemble.dt > 0.0) {
            return Err(invalid("invalid parameter `ensemble.dt`: must be positive"));
        }
        if let Some(dv) = self.ensemble.dv {
            if !dv.is_finite() {
                return Err(invalid("invalid parameter `ensemble.dv`: must be finite"));
            }
        }
        if self
            .ensemble
            .gamma_sweep
            .iter()
            .any(|g| !(g.is_finite() && *g > 0.0))
        {
            return Err(invalid(
                "invalid parameter `ensemble.gamma_sweep`: rates must be positive",
            ));
        }
        if self.sweep.bandwidths.is_empty()
            || self
                .sweep
                .bandwidths
                .iter()
                .any(|b| !(b.is_finite() && *b > 0.0))
        {
            return Err(invalid(
                "invalid parameter `sweep.bandwidths`: need at least one positive bandwidth",
            ));
        }
        if self.gates.dv_values.iter().any(|d| !d.is_finite()) {
            return Err(invalid(
                "invalid parameter `gates.dv_values`: must be finite",
            ));
        }
        if self.gates.realizations == 0 {
            return Err(invalid(
                "invalid parameter `gates.realizations`: must be at least 1",
            ));
        }
        Ok(())
    }

    pub fn setup(&self) -> CalibrationSetup {
        CalibrationSetup {
            ez: self.ez,
            detector: self.detector,
            n_p: self.protocol.n_p,
            hysteresis_fraction: self.protocol.hysteresis_fraction,
            stepping: self.protocol.stepping,
        }
    }

    pub fn noise_source(&self) -> Result<NoiseSource, ConfigError> {
        let n = &self.noise;
        let spectral = n.beta.is_some()
            || n.rms.is_some()
            || n.delta_omega.is_some()
            || n.n_components.is_some();
        match (n.constant, spectral) {
            (Some(_), true) => Err(invalid(
                "noise: `constant` excludes `beta`, `rms`, `delta_omega` and `n_components`",
            )),
            (Some(v), false) if !v.is_finite() => Err(invalid(
                "invalid parameter `noise.constant`: must be finite",
            )),
            (Some(v), false) => Ok(NoiseSource::Constant(v)),
            (None, false) => Ok(NoiseSource::Constant(0.0)),
            (None, true) => {
                let (dw, count) = match (n.delta_omega, n.n_components) {
                    (Some(dw), Some(count)) => (dw, count),
                    _ => {
                        return Err(invalid(
                            "noise: a 1/f spectrum needs `delta_omega` and `n_components`",
                        ))
                    }
                };
                let spec = match (n.beta, n.rms) {
                    (Some(beta), None) => NoiseSpec::new(beta, dw, count),
                    (None, Some(rms)) => NoiseSpec::with_rms(rms, dw, count),
                    _ => return Err(invalid("noise: give exactly one of `beta` and `rms`")),
                };
                spec.map(NoiseSource::Spectrum)
                    .map_err(|e| invalid(e.to_string()))
            }
        }
    }

    /// Spectrum family for the bandwidth sweep: `β` and `Δω` from `[noise]`.
    pub fn sweep_family(&self) -> Result<SweepNoise, ConfigError> {
        match self.noise_source()? {
            NoiseSource::Spectrum(spec) => Ok(SweepNoise {
                beta: spec.beta,
                delta_omega: spec.delta_omega,
            }),
            NoiseSource::Constant(_) => {
                Err(invalid("sweep-bandwidth needs a 1/f spectrum in [noise]"))
            }
        }
    }

    pub fn require_sweep_repetitions(&self) -> Result<(), ConfigError> {
        if self.run.repetitions < MIN_SWEEP_REPETITIONS {
            return Err(invalid(format!(
                "invalid parameter `run.repetitions`: the sweep needs at least {MIN_SWEEP_REPETITIONS}, got {}",
                self.run.repetitions
            )));
        }
        Ok(())
    }
}
