//! Two-level system at its degeneracy point.
//!
//! The Hamiltonian is `H = -E_z σ_z + v σ_x` (ħ = 1), where `v` is the total
//! off-diagonal element: the low-frequency noise value plus any control
//! shift applied by the calibration protocol.
//!
//! States are stored as `(ρ00, ρ01)`; `ρ11 = 1 - ρ00` and `ρ10 = ρ01*` are
//! derived, so trace and Hermiticity hold by construction. Internally the
//! propagators act on the Bloch vector `r` with `ρ = (1 + r·σ)/2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{require_finite, Error, Result};

/// Largest accepted `dt·‖H‖` for a single propagation step.
pub const MAX_STEP_PHASE: f64 = 0.5;

/// Trace-one Hermitian 2×2 density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    rho00: f64,
    rho01: Complex64,
}

impl DensityMatrix {
    /// Validates populations and positivity (`|ρ01|² ≤ ρ00 ρ11` up to 1e-12).
    pub fn new(rho00: f64, rho01: Complex64) -> Result<Self> {
        require_finite("rho00", rho00)?;
        if !(rho01.re.is_finite() && rho01.im.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "rho01",
                reason: "must be finite".into(),
            });
        }
        if !(0.0..=1.0).contains(&rho00) {
            return Err(Error::InvalidParameter {
                name: "rho00",
                reason: format!("population {rho00} outside [0, 1]"),
            });
        }
        if rho01.norm_sqr() > rho00 * (1.0 - rho00) + 1e-12 {
            return Err(Error::InvalidParameter {
                name: "rho01",
                reason: "coherence violates positivity |rho01|^2 <= rho00 rho11".into(),
            });
        }
        Ok(Self { rho00, rho01 })
    }

    /// Skips validation; callers guarantee a physical state.
    #[inline]
    pub(crate) fn from_parts_unchecked(rho00: f64, rho01: Complex64) -> Self {
        Self { rho00, rho01 }
    }

    /// `|0⟩⟨0|`.
    pub fn ground() -> Self {
        Self {
            rho00: 1.0,
            rho01: Complex64::new(0.0, 0.0),
        }
    }

    /// `|1⟩⟨1|`.
    pub fn excited() -> Self {
        Self {
            rho00: 0.0,
            rho01: Complex64::new(0.0, 0.0),
        }
    }

    pub fn maximally_mixed() -> Self {
        Self {
            rho00: 0.5,
            rho01: Complex64::new(0.0, 0.0),
        }
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let [a, b] = psi.amplitudes();
        Self {
            rho00: a.norm_sqr(),
            rho01: a * b.conj(),
        }
    }

    /// Builds the state from a Bloch vector, radially clamped into the unit ball.
    pub fn from_bloch(r: [f64; 3]) -> Self {
        let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        let s = if len > 1.0 { 1.0 / len } else { 1.0 };
        Self {
            rho00: (0.5 * (1.0 + s * r[2])).clamp(0.0, 1.0),
            rho01: Complex64::new(0.5 * s * r[0], -0.5 * s * r[1]),
        }
    }

    pub fn bloch(&self) -> [f64; 3] {
        [
            2.0 * self.rho01.re,
            -2.0 * self.rho01.im,
            2.0 * self.rho00 - 1.0,
        ]
    }

    pub fn rho00(&self) -> f64 {
        self.rho00
    }

    pub fn rho11(&self) -> f64 {
        1.0 - self.rho00
    }

    pub fn rho01(&self) -> Complex64 {
        self.rho01
    }

    pub fn rho10(&self) -> Complex64 {
        self.rho01.conj()
    }

    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        [
            [Complex64::new(self.rho00, 0.0), self.rho01],
            [self.rho01.conj(), Complex64::new(self.rho11(), 0.0)],
        ]
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        purity(self)
    }

    /// Frobenius distance `‖ρ - σ‖_F`.
    pub fn distance(&self, other: &Self) -> f64 {
        let d00 = self.rho00 - other.rho00;
        let d01 = (self.rho01 - other.rho01).norm_sqr();
        (2.0 * d00 * d00 + 2.0 * d01).sqrt()
    }
}

/// `Tr ρ² = ρ00² + ρ11² + 2|ρ01|²`, in `[0.5, 1]` for valid states.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let p0 = rho.rho00;
    let p1 = rho.rho11();
    p0 * p0 + p1 * p1 + 2.0 * rho.rho01.norm_sqr()
}

/// Normalized two-component state vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureState([Complex64; 2]);

impl PureState {
    pub fn new(a: Complex64, b: Complex64) -> Result<Self> {
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidParameter {
                name: "psi",
                reason: "state vector must be finite and non-zero".into(),
            });
        }
        Ok(Self([a / norm, b / norm]))
    }

    pub fn zero() -> Self {
        Self([Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)])
    }

    pub fn one() -> Self {
        Self([Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
    }

    /// `(|0⟩ + |1⟩)/√2`.
    pub fn plus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self([Complex64::new(s, 0.0), Complex64::new(s, 0.0)])
    }

    pub fn amplitudes(&self) -> [Complex64; 2] {
        self.0
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.0[0].conj() * other.0[0] + self.0[1].conj() * other.0[1]
    }

    pub(crate) fn from_raw(amps: [Complex64; 2]) -> Self {
        Self(amps)
    }
}

/// `H = -E_z σ_z + off_diag σ_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitHamiltonian {
    pub ez: f64,
    pub off_diag: f64,
}

/// Builds the Hamiltonian with `off_diag = dv + shift`.
pub fn make_hamiltonian(ez: f64, dv: f64, shift: f64) -> Result<QubitHamiltonian> {
    require_finite("ez", ez)?;
    require_finite("dv", dv)?;
    require_finite("shift", shift)?;
    Ok(QubitHamiltonian {
        ez,
        off_diag: dv + shift,
    })
}

impl QubitHamiltonian {
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[-self.ez, self.off_diag], [self.off_diag, self.ez]]
    }

    /// Spectral norm `√(E_z² + v²)`; the eigenvalues are `±‖H‖`.
    pub fn norm(&self) -> f64 {
        self.ez.hypot(self.off_diag)
    }

    /// Pauli coefficients `h` with `H = h·σ`.
    pub fn field(&self) -> [f64; 3] {
        [self.off_diag, 0.0, -self.ez]
    }
}

/// How the coherent part of a step is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stepping {
    /// `ρ' = U ρ U†` with `U = exp(-iH dt)`.
    #[default]
    Exact,
    /// First-order `ρ' = ρ - i[H, ρ] dt`, followed by a radial projection of
    /// the Bloch vector onto the unit ball so the state stays positive.
    Euler,
}

/// Precomputed single-step action of a fixed Hamiltonian on Bloch vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator {
    m: [[f64; 3]; 3],
    project: bool,
}

impl Propagator {
    pub fn new(h: &QubitHamiltonian, dt: f64, stepping: Stepping) -> Result<Self> {
        check_step(h, dt)?;
        Ok(Self::new_unchecked(h, dt, stepping))
    }

    pub(crate) fn new_unchecked(h: &QubitHamiltonian, dt: f64, stepping: Stepping) -> Self {
        let f = h.field();
        match stepping {
            Stepping::Exact => Self {
                m: rotation(f, dt),
                project: false,
            },
            Stepping::Euler => {
                // r' = r + 2 dt (h × r)
                let w = [2.0 * dt * f[0], 2.0 * dt * f[1], 2.0 * dt * f[2]];
                Self {
                    m: [[1.0, -w[2], w[1]], [w[2], 1.0, -w[0]], [-w[1], w[0], 1.0]],
                    project: true,
                }
            }
        }
    }

    #[inline]
    pub(crate) fn apply_bloch(&self, r: &mut [f64; 3]) {
        let m = &self.m;
        let x = m[0][0] * r[0] + m[0][1] * r[1] + m[0][2] * r[2];
        let y = m[1][0] * r[0] + m[1][1] * r[1] + m[1][2] * r[2];
        let z = m[2][0] * r[0] + m[2][1] * r[1] + m[2][2] * r[2];
        *r = [x, y, z];
        if self.project {
            let len2 = x * x + y * y + z * z;
            if len2 > 1.0 {
                let s = len2.sqrt().recip();
                r.iter_mut().for_each(|c| *c *= s);
            }
        }
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let mut r = rho.bloch();
        self.apply_bloch(&mut r);
        DensityMatrix::from_bloch(r)
    }
}

/// Bloch rotation generated by `ṙ = 2 h × r` over `dt` (Rodrigues form).
fn rotation(h: [f64; 3], dt: f64) -> [[f64; 3]; 3] {
    let len = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
    if len == 0.0 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let n = [h[0] / len, h[1] / len, h[2] / len];
    let (s, c) = (2.0 * len * dt).sin_cos();
    let k = 1.0 - c;
    [
        [
            c + k * n[0] * n[0],
            k * n[0] * n[1] - s * n[2],
            k * n[0] * n[2] + s * n[1],
        ],
        [
            k * n[1] * n[0] + s * n[2],
            c + k * n[1] * n[1],
            k * n[1] * n[2] - s * n[0],
        ],
        [
            k * n[2] * n[0] - s * n[1],
            k * n[2] * n[1] + s * n[0],
            c + k * n[2] * n[2],
        ],
    ]
}

pub(crate) fn check_step(h: &QubitHamiltonian, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Configuration(format!(
            "step dt must be positive, got {dt}"
        )));
    }
    let phase = dt * h.norm();
    if phase > MAX_STEP_PHASE {
        return Err(Error::Configuration(format!(
            "dt*|H| = {phase:.4} exceeds {MAX_STEP_PHASE}; reduce dt"
        )));
    }
    Ok(())
}

/// Exact unitary step `ρ → U ρ U†`, `U = exp(-iH dt)`.
pub fn evolve_unitary(rho: &DensityMatrix, h: &QubitHamiltonian, dt: f64) -> Result<DensityMatrix> {
    evolve(rho, h, dt, Stepping::Exact)
}

pub fn evolve(
    rho: &DensityMatrix,
    h: &QubitHamiltonian,
    dt: f64,
    stepping: Stepping,
) -> Result<DensityMatrix> {
    Ok(Propagator::new(h, dt, stepping)?.apply(rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// `exp(-iH t)` by diagonalizing the real symmetric `H` directly.
    fn brute_unitary(h: &QubitHamiltonian, t: f64) -> [[Complex64; 2]; 2] {
        let [[a, b], [_, d]] = h.matrix();
        let mean = 0.5 * (a + d);
        let half = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let evals = [mean - half, mean + half];
        // eigenvectors of [[a, b], [b, d]]
        let vecs: Vec<[f64; 2]> = evals
            .iter()
            .map(|&l| {
                let (x, y) = if b.abs() > 1e-300 {
                    (b, l - a)
                } else if (l - a).abs() < 1e-12 {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                };
                let n = x.hypot(y);
                [x / n, y / n]
            })
            .collect();
        let mut u = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (k, v) in vecs.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -evals[k] * t);
            for i in 0..2 {
                for j in 0..2 {
                    u[i][j] += phase * v[i] * v[j];
                }
            }
        }
        u
    }

    fn conjugate(u: &[[Complex64; 2]; 2], rho: &DensityMatrix) -> [[Complex64; 2]; 2] {
        let r = rho.matrix();
        let mut ur = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    ur[i][j] += u[i][k] * r[k][j];
                }
            }
        }
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    out[i][j] += ur[i][k] * u[j][k].conj();
                }
            }
        }
        out
    }

    #[test]
    fn hamiltonian_matches_matrix_form() {
        let h = make_hamiltonian(7.0, 0.82, 0.0).unwrap();
        assert_eq!(h.matrix(), [[-7.0, 0.82], [0.82, 7.0]]);
        let h = make_hamiltonian(7.0, 0.0, 0.0).unwrap();
        assert_eq!(h.matrix(), [[-7.0, 0.0], [0.0, 7.0]]);
        let h = make_hamiltonian(7.0, 0.82, -0.41).unwrap();
        assert_abs_diff_eq!(h.off_diag, 0.41, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_hamiltonian_input_is_rejected() {
        assert!(matches!(
            make_hamiltonian(f64::NAN, 0.0, 0.0),
            Err(Error::InvalidParameter { name: "ez", .. })
        ));
        assert!(make_hamiltonian(7.0, f64::INFINITY, 0.0).is_err());
        assert!(make_hamiltonian(7.0, 0.0, f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn eigenstate_is_stationary() {
        let h = make_hamiltonian(7.0, 0.0, 0.0).unwrap();
        for dt in [1e-4, 0.01, 0.05] {
            let out = evolve_unitary(&DensityMatrix::ground(), &h, dt).unwrap();
            assert_abs_diff_eq!(out.rho00(), 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(out.rho01().norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_step_matches_brute_force_exponential() {
        let h = make_hamiltonian(7.0, 0.82, 0.0).unwrap();
        let out = evolve_unitary(&DensityMatrix::ground(), &h, 0.01).unwrap();
        let brute = conjugate(&brute_unitary(&h, 0.01), &DensityMatrix::ground());
        assert_abs_diff_eq!(out.rho00(), brute[0][0].re, epsilon = 1e-13);
        assert_abs_diff_eq!(out.rho01().re, brute[0][1].re, epsilon = 1e-13);
        assert_abs_diff_eq!(out.rho01().im, brute[0][1].im, epsilon = 1e-13);
        // frozen from the brute-force route: 1 - ρ00 = (0.82·0.01)²(1 + O(dt))
        assert_abs_diff_eq!(out.rho00(), 0.999_932_871_258_696_8, epsilon = 1e-13);
        let leading = (0.82f64 * 0.01).powi(2);
        assert!(((1.0 - out.rho00()) / leading - 1.0).abs() < 0.05);
    }

    #[test]
    fn unitary_preserves_purity() {
        let psi = PureState::new(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)).unwrap();
        let rho = DensityMatrix::from_pure(&psi);
        let h = make_hamiltonian(7.0, 0.3, 0.1).unwrap();
        let out = evolve_unitary(&rho, &h, 0.05).unwrap();
        assert_abs_diff_eq!(out.purity(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn purity_reference_values() {
        assert_abs_diff_eq!(purity(&DensityMatrix::ground()), 1.0);
        assert_abs_diff_eq!(purity(&DensityMatrix::maximally_mixed()), 0.5);
        let sup = DensityMatrix::new(0.5, Complex64::new(0.5, 0.0)).unwrap();
        assert_abs_diff_eq!(purity(&sup), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn step_guard_rejects_coarse_steps() {
        let h = make_hamiltonian(7.0, 0.82, 0.0).unwrap();
        assert!(matches!(
            evolve_unitary(&DensityMatrix::ground(), &h, 0.1),
            Err(Error::Configuration(_))
        ));
        assert!(evolve_unitary(&DensityMatrix::ground(), &h, 0.0).is_err());
        assert!(evolve_unitary(&DensityMatrix::ground(), &h, -0.01).is_err());
    }

    #[test]
    fn positivity_is_validated() {
        assert!(DensityMatrix::new(1.2, Complex64::new(0.0, 0.0)).is_err());
        assert!(DensityMatrix::new(0.5, Complex64::new(0.6, 0.0)).is_err());
        assert!(DensityMatrix::new(0.5, Complex64::new(0.3, 0.3)).is_ok());
    }

    #[test]
    fn exact_stepping_is_stable_over_a_million_steps() {
        let psi = PureState::new(Complex64::new(0.8, 0.0), Complex64::new(0.36, 0.48)).unwrap();
        let mut rho = DensityMatrix::from_pure(&psi);
        let h = make_hamiltonian(7.0, 0.82, 0.0).unwrap();
        let prop = Propagator::new(&h, 0.05, Stepping::Exact).unwrap();
        for _ in 0..1_000_000 {
            rho = prop.apply(&rho);
        }
        assert_abs_diff_eq!(rho.rho00() + rho.rho11(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn euler_differs_from_exact_at_second_order() {
        let psi = PureState::new(Complex64::new(0.8, 0.0), Complex64::new(0.36, 0.48)).unwrap();
        let rho = DensityMatrix::from_pure(&psi);
        let h = make_hamiltonian(7.0, 0.82, 0.0).unwrap();
        let ratios: Vec<f64> = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
            .iter()
            .map(|&dt| {
                let e = evolve(&rho, &h, dt, Stepping::Euler).unwrap();
                let x = evolve(&rho, &h, dt, Stepping::Exact).unwrap();
                e.distance(&x) / (dt * dt)
            })
            .collect();
        // C = ‖ρ_euler - ρ_exact‖/dt² settles to a finite constant
        for w in ratios.windows(2) {
            assert!((w[0] / w[1] - 1.0).abs() < 0.1, "{ratios:?}");
        }
        assert!(ratios
            .iter()
            .all(|c| c.is_finite() && *c < 4.0 * h.norm().powi(2)));
    }

    #[test]
    fn euler_mode_stays_in_the_bloch_ball() {
        let h = make_hamiltonian(7.0, 0.82, 0.0).unwrap();
        let prop = Propagator::new(&h, 0.05, Stepping::Euler).unwrap();
        let mut rho = DensityMatrix::from_pure(&PureState::plus());
        for _ in 0..10_000 {
            rho = prop.apply(&rho);
            assert!(rho.purity() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn bloch_round_trip() {
        let rho = DensityMatrix::new(0.3, Complex64::new(0.1, -0.2)).unwrap();
        let back = DensityMatrix::from_bloch(rho.bloch());
        assert_abs_diff_eq!(rho.distance(&back), 0.0, epsilon = 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn exact_step_preserves_trace_hermiticity_and_purity(
            theta in 0.0..std::f64::consts::PI,
            phi in 0.0..(2.0 * std::f64::consts::PI),
            shrink in 0.0f64..1.0,
            dv in -2.0f64..2.0,
            dt in 1e-4f64..0.05,
        ) {
            let r = [shrink * theta.sin() * phi.cos(), shrink * theta.sin() * phi.sin(), shrink * theta.cos()];
            let rho = DensityMatrix::from_bloch(r);
            let h = make_hamiltonian(7.0, dv, 0.0).unwrap();
            let out = evolve_unitary(&rho, &h, dt).unwrap();
            proptest::prop_assert!((out.rho00() + out.rho11() - 1.0).abs() < 1e-12);
            proptest::prop_assert!((out.purity() - rho.purity()).abs() < 1e-12);
            proptest::prop_assert!(out.rho01().norm_sqr() <= out.rho00() * out.rho11() + 1e-12);
            let m = out.matrix();
            proptest::prop_assert!((m[0][1] - m[1][0].conj()).norm() < 1e-15);
        }
    }
}
