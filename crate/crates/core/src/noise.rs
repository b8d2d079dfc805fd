//! Low-frequency noise on the off-diagonal coupling.
//!
//! The 1/f process is a frozen superposition of cosines on the harmonic grid
//! `ω_n = n Δω`, `n = 1..=N`:
//!
//! ```text
//! δV(t) = Σ_n √(β/ω_n) α_n cos(ω_n t + φ_n),   α_n ~ N(0, 1),  φ_n ~ U[0, 2π)
//! ```
//!
//! Once sampled, a [`NoiseModel`] is an immutable function of time and can be
//! shared across threads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};

/// Source of the off-diagonal noise `δV(t)` seen by a qubit.
pub trait OffDiagonalNoise: Sync {
    fn value(&self, t: f64) -> f64;

    /// Highest angular frequency present; zero for a static value.
    fn bandwidth(&self) -> f64;
}

impl<N: OffDiagonalNoise + ?Sized> OffDiagonalNoise for &N {
    fn value(&self, t: f64) -> f64 {
        (**self).value(t)
    }

    fn bandwidth(&self) -> f64 {
        (**self).bandwidth()
    }
}

/// Quasi-static noise frozen at one value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantNoise(pub f64);

impl OffDiagonalNoise for ConstantNoise {
    fn value(&self, _t: f64) -> f64 {
        self.0
    }

    fn bandwidth(&self) -> f64 {
        0.0
    }
}

/// A noise source plus a static offset.
///
/// Used to pin a realization to a chosen starting value:
/// `OffsetNoise::pinned(model, d)` has `value(0) == d` and the same drift as
/// `model`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetNoise<N> {
    pub inner: N,
    pub offset: f64,
}

impl<N: OffDiagonalNoise> OffsetNoise<N> {
    pub fn pinned(inner: N, start_value: f64) -> Self {
        let offset = start_value - inner.value(0.0);
        Self { inner, offset }
    }
}

impl<N: OffDiagonalNoise> OffDiagonalNoise for OffsetNoise<N> {
    fn value(&self, t: f64) -> f64 {
        self.inner.value(t) + self.offset
    }

    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth()
    }
}

/// Parameters of the discrete 1/f spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Spectral magnitude β.
    pub beta: f64,
    /// Frequency spacing Δω; also the lowest component frequency.
    pub delta_omega: f64,
    pub n_components: usize,
}

impl NoiseSpec {
    pub fn new(beta: f64, delta_omega: f64, n_components: usize) -> Result<Self> {
        let spec = Self {
            beta,
            delta_omega,
            n_components,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Chooses β so the ensemble RMS of `δV(t)` equals `rms`.
    pub fn with_rms(rms: f64, delta_omega: f64, n_components: usize) -> Result<Self> {
        require_positive("rms", rms)?;
        require_positive("delta_omega", delta_omega)?;
        if n_components == 0 {
            return Err(Error::InvalidParameter {
                name: "n_components",
                reason: "must be at least 1".into(),
            });
        }
        let harmonic: f64 = (1..=n_components).map(|n| 1.0 / n as f64).sum();
        Self::new(
            2.0 * delta_omega * rms * rms / harmonic,
            delta_omega,
            n_components,
        )
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("beta", self.beta)?;
        require_positive("delta_omega", self.delta_omega)?;
        if self.n_components == 0 {
            return Err(Error::InvalidParameter {
                name: "n_components",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// `B_w = N Δω`.
    pub fn band_width(&self) -> f64 {
        self.n_components as f64 * self.delta_omega
    }

    pub fn omega(&self, n: usize) -> f64 {
        n as f64 * self.delta_omega
    }

    /// `⟨δV(t)²⟩ = (β/2) Σ_n 1/ω_n` for unit-variance α_n.
    pub fn ensemble_variance(&self) -> f64 {
        let inv_sum: f64 = (1..=self.n_components).map(|n| 1.0 / self.omega(n)).sum();
        0.5 * self.beta * inv_sum
    }

    /// `Σ_n ω_n`, the coefficient that controls short-time drift.
    pub fn omega_sum(&self) -> f64 {
        let n = self.n_components as f64;
        self.delta_omega * n * (n + 1.0) / 2.0
    }
}

/// One frozen realization of the 1/f process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub spec: NoiseSpec,
    pub alphas: Vec<f64>,
    pub phases: Vec<f64>,
    pub seed: u64,
    #[serde(skip)]
    amplitudes: Vec<f64>,
}

/// Draws `α_n ~ N(0, 1)` and `φ_n ~ U[0, 2π)`; deterministic in `seed`.
pub fn sample_noise_model(spec: &NoiseSpec, seed: u64) -> Result<NoiseModel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alphas = Vec::with_capacity(spec.n_components);
    let mut phases = Vec::with_capacity(spec.n_components);
    for _ in 0..spec.n_components {
        alphas.push(rng.sample::<f64, _>(StandardNormal));
        phases.push(rng.random::<f64>() * std::f64::consts::TAU);
    }
    NoiseModel::from_parts(*spec, alphas, phases, seed)
}

impl NoiseModel {
    pub fn from_parts(
        spec: NoiseSpec,
        alphas: Vec<f64>,
        phases: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        if alphas.len() != spec.n_components || phases.len() != spec.n_components {
            return Err(Error::InvalidInput(format!(
                "expected {} alphas and phases, got {} and {}",
                spec.n_components,
                alphas.len(),
                phases.len()
            )));
        }
        for &v in alphas.iter().chain(&phases) {
            require_finite("noise component", v)?;
        }
        let amplitudes = alphas
            .iter()
            .enumerate()
            .map(|(i, a)| (spec.beta / spec.omega(i + 1)).sqrt() * a)
            .collect();
        Ok(Self {
            spec,
            alphas,
            phases,
            seed,
            amplitudes,
        })
    }

    /// `δV(t)`, summed exactly over all components.
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitudes
            .iter()
            .zip(&self.phases)
            .enumerate()
            .map(|(i, (a, p))| a * (self.spec.omega(i + 1) * t + p).cos())
            .sum()
    }

    /// Analytic `dδV/dt`.
    pub fn derivative(&self, t: f64) -> f64 {
        self.amplitudes
            .iter()
            .zip(&self.phases)
            .enumerate()
            .map(|(i, (a, p))| {
                let w = self.spec.omega(i + 1);
                -a * w * (w * t + p).sin()
            })
            .sum()
    }

    /// `n` samples at spacing `dt` starting at `t = 0`.
    ///
    /// Requires `dt·B_w < π` so the whole band lies below Nyquist.
    pub fn sample_series(&self, n: usize, dt: f64) -> Result<Vec<f64>> {
        require_positive("dt", dt)?;
        if dt * self.spec.band_width() >= std::f64::consts::PI {
            return Err(Error::Configuration(format!(
                "sampling dt = {dt} does not resolve band width {}",
                self.spec.band_width()
            )));
        }
        Ok((0..n).map(|k| self.eval(k as f64 * dt)).collect())
    }

    // serde skips the cache, so rebuild it when needed
    pub fn rehydrate(self) -> Result<Self> {
        Self::from_parts(self.spec, self.alphas, self.phases, self.seed)
    }
}

impl OffDiagonalNoise for NoiseModel {
    fn value(&self, t: f64) -> f64 {
        self.eval(t)
    }

    fn bandwidth(&self) -> f64 {
        self.spec.band_width()
    }
}

/// Free-function form of [`NoiseModel::eval`].
pub fn eval_noise(model: &NoiseModel, t: f64) -> f64 {
    model.eval(t)
}
