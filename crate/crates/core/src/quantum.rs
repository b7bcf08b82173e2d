//! Quantum predictions for polarization qubit pairs.
//!
//! States live in the `H/V ⊗ H/V` product basis ordered `HH, HV, VH, VV`.
//! The Pauli operators follow the Stokes axes: `σ1 = diag(1, -1)`,
//! `σ2` is the ±45° flip and `σ3` the circular one.

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::sphere::UnitVector;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const EIGEN_FLOOR: f64 = -1e-10;

type Pauli = [[Complex64; 2]; 2];

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

const IDENTITY: Pauli = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
const SIGMA: [Pauli; 3] = [
    [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]],
    [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]],
    [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]],
];

/// `σ·n` for a Poincaré direction.
fn sigma_dot(n: &UnitVector) -> Pauli {
    let [x, y, z] = n.components();
    [[c(x, 0.0), c(y, -z)], [c(y, z), c(-x, 0.0)]]
}

/// Projector `(I + r σ·n) / 2`.
fn projector(n: &UnitVector, r: Outcome) -> Pauli {
    let s = sigma_dot(n);
    let r = r.value();
    let mut p = IDENTITY;
    for i in 0..2 {
        for j in 0..2 {
            p[i][j] = (p[i][j] + s[i][j] * r) * 0.5;
        }
    }
    p
}

fn kron(a: &Pauli, b: &Pauli) -> Matrix4<Complex64> {
    Matrix4::from_fn(|row, col| a[row / 2][col / 2] * b[row % 2][col % 2])
}

/// `Tr[ρ (A ⊗ B)]` without forming the product operator.
fn trace_product(rho: &Matrix4<Complex64>, a: &Pauli, b: &Pauli) -> Complex64 {
    let mut acc = c(0.0, 0.0);
    for i in 0..2 {
        for k in 0..2 {
            for j in 0..2 {
                for l in 0..2 {
                    acc += rho[(2 * i + k, 2 * j + l)] * a[j][i] * b[l][k];
                }
            }
        }
    }
    acc
}

/// Measurement outcome `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn value(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }
}

/// Anything that predicts joint outcome statistics for a pair of von Neumann
/// measurements labelled by Poincaré directions.
pub trait CorrelationSource: Send + Sync {
    /// `P(r_a, r_b | a, b)`.
    fn probability(&self, a: &UnitVector, b: &UnitVector, r_a: Outcome, r_b: Outcome)
        -> Result<f64>;

    /// `C(a, b) = Σ r_a r_b P(r_a, r_b | a, b)`.
    fn correlation(&self, a: &UnitVector, b: &UnitVector) -> Result<f64> {
        let mut acc = 0.0;
        for r_a in Outcome::BOTH {
            for r_b in Outcome::BOTH {
                acc += r_a.value() * r_b.value() * self.probability(a, b, r_a, r_b)?;
            }
        }
        Ok(acc)
    }
}

impl<S: CorrelationSource + ?Sized> CorrelationSource for &S {
    fn probability(
        &self,
        a: &UnitVector,
        b: &UnitVector,
        r_a: Outcome,
        r_b: Outcome,
    ) -> Result<f64> {
        (**self).probability(a, b, r_a, r_b)
    }

    fn correlation(&self, a: &UnitVector, b: &UnitVector) -> Result<f64> {
        (**self).correlation(a, b)
    }
}

impl<S: CorrelationSource + ?Sized> CorrelationSource for Box<S> {
    fn probability(
        &self,
        a: &UnitVector,
        b: &UnitVector,
        r_a: Outcome,
        r_b: Outcome,
    ) -> Result<f64> {
        (**self).probability(a, b, r_a, r_b)
    }

    fn correlation(&self, a: &UnitVector, b: &UnitVector) -> Result<f64> {
        (**self).correlation(a, b)
    }
}

/// A validated two-qubit density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    rho: Matrix4<Complex64>,
}

impl TwoQubitState {
    /// Validates hermiticity, unit trace and positivity.
    pub fn from_density_matrix(rho: Matrix4<Complex64>) -> Result<Self> {
        let asym = (rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !asym.is_finite() || asym > HERMITIAN_TOL {
            return Err(invalid(format!("density matrix is not Hermitian (deviation {asym:.3e})")));
        }
        let trace = rho.trace();
        if (trace - c(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(invalid(format!("density matrix trace is {trace}, expected 1")));
        }
        let lowest = rho.symmetric_eigenvalues().min();
        if lowest < EIGEN_FLOOR {
            return Err(invalid(format!(
                "density matrix has negative eigenvalue {lowest:.3e}"
            )));
        }
        Ok(Self { rho })
    }

    pub fn density_matrix(&self) -> &Matrix4<Complex64> {
        &self.rho
    }

    /// `|ψ−⟩ = (|HV⟩ − |VH⟩)/√2`.
    pub fn singlet() -> Self {
        let mut rho = Matrix4::zeros();
        rho[(1, 1)] = c(0.5, 0.0);
        rho[(2, 2)] = c(0.5, 0.0);
        rho[(1, 2)] = c(-0.5, 0.0);
        rho[(2, 1)] = c(-0.5, 0.0);
        Self { rho }
    }

    pub fn maximally_mixed() -> Self {
        Self {
            rho: Matrix4::identity() * c(0.25, 0.0),
        }
    }

    /// `V·|ψ−⟩⟨ψ−| + (1−V)·I/4`.
    pub fn werner(visibility: f64) -> Result<Self> {
        check_visibility(visibility)?;
        let rho = Self::singlet().rho * c(visibility, 0.0)
            + Self::maximally_mixed().rho * c(1.0 - visibility, 0.0);
        Self::from_density_matrix(rho)
    }

    /// Singlet mixed with H/V-correlated product noise:
    /// `V·|ψ−⟩⟨ψ−| + (1−V)(|HV⟩⟨HV| + |VH⟩⟨VH|)/2`.
    pub fn colored_noise(visibility: f64) -> Result<Self> {
        check_visibility(visibility)?;
        let mut noise = Matrix4::zeros();
        noise[(1, 1)] = c(0.5, 0.0);
        noise[(2, 2)] = c(0.5, 0.0);
        let rho = Self::singlet().rho * c(visibility, 0.0) + noise * c(1.0 - visibility, 0.0);
        Self::from_density_matrix(rho)
    }

    /// `(I⊗I + Σ t_i σ_i⊗σ_i)/4`; rejected outside the positivity tetrahedron.
    pub fn bell_diagonal(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        let mut rho = kron(&IDENTITY, &IDENTITY);
        for (t, s) in [t1, t2, t3].into_iter().zip(SIGMA.iter()) {
            if !t.is_finite() {
                return Err(invalid("Bell-diagonal coefficients must be finite"));
            }
            rho += kron(s, s) * c(t, 0.0);
        }
        Self::from_density_matrix(rho * c(0.25, 0.0))
    }

    /// Diagonal of the correlation tensor, `t_i = Tr[ρ (σ_i ⊗ σ_i)]`.
    pub fn diagonal_correlations(&self) -> CorrelationTensor {
        let t = |i: usize| trace_product(&self.rho, &SIGMA[i], &SIGMA[i]).re;
        CorrelationTensor {
            t1: t(0),
            t2: t(1),
            t3: t(2),
        }
    }

    /// `Tr[ρ (Π_a^{r_a} ⊗ Π_b^{r_b})]`, clamped to `[0, 1]`.
    pub fn outcome_probability(
        &self,
        a: &UnitVector,
        b: &UnitVector,
        r_a: Outcome,
        r_b: Outcome,
    ) -> f64 {
        let p = trace_product(&self.rho, &projector(a, r_a), &projector(b, r_b)).re;
        p.clamp(0.0, 1.0)
    }

    /// `Tr[ρ (σ·a ⊗ σ·b)]`.
    pub fn correlation_value(&self, a: &UnitVector, b: &UnitVector) -> f64 {
        trace_product(&self.rho, &sigma_dot(a), &sigma_dot(b))
            .re
            .clamp(-1.0, 1.0)
    }
}

fn check_visibility(v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(format!("visibility {v} outside [0, 1]")));
    }
    Ok(())
}

impl CorrelationSource for TwoQubitState {
    fn probability(
        &self,
        a: &UnitVector,
        b: &UnitVector,
        r_a: Outcome,
        r_b: Outcome,
    ) -> Result<f64> {
        Ok(self.outcome_probability(a, b, r_a, r_b))
    }

    fn correlation(&self, a: &UnitVector, b: &UnitVector) -> Result<f64> {
        Ok(self.correlation_value(a, b))
    }
}

/// Diagonal correlation tensor in the Stokes basis, with vanishing local
/// Bloch vectors.
///
/// Used directly as a source it predicts `P(r_a, r_b) = (1 + r_a r_b a·T·b)/4`,
/// which is non-negative for every product measurement even when the
/// tensor lies outside the Bell-diagonal tetrahedron (for instance when it
/// is built from independently measured visibilities).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationTensor {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl CorrelationTensor {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        for t in [t1, t2, t3] {
            if !t.is_finite() || t.abs() > 1.0 {
                return Err(invalid(format!("correlation tensor entry {t} outside [-1, 1]")));
            }
        }
        Ok(Self { t1, t2, t3 })
    }

    /// Singlet-like tensor `diag(-V1, -V2, -V3)` from basis visibilities.
    pub fn from_visibilities(v1: f64, v2: f64, v3: f64) -> Result<Self> {
        for v in [v1, v2, v3] {
            check_visibility(v)?;
        }
        Self::new(-v1, -v2, -v3)
    }

    pub fn entries(&self) -> [f64; 3] {
        [self.t1, self.t2, self.t3]
    }

    /// The Bell-diagonal state with this tensor, if it is positive.
    pub fn to_state(&self) -> Result<TwoQubitState> {
        TwoQubitState::bell_diagonal(self.t1, self.t2, self.t3)
    }

    pub fn apply(&self, a: &UnitVector, b: &UnitVector) -> f64 {
        self.t1 * a.x() * b.x() + self.t2 * a.y() * b.y() + self.t3 * a.z() * b.z()
    }
}

impl CorrelationSource for CorrelationTensor {
    fn probability(
        &self,
        a: &UnitVector,
        b: &UnitVector,
        r_a: Outcome,
        r_b: Outcome,
    ) -> Result<f64> {
        Ok(((1.0 + r_a.value() * r_b.value() * self.apply(a, b)) / 4.0).clamp(0.0, 1.0))
    }

    fn correlation(&self, a: &UnitVector, b: &UnitVector) -> Result<f64> {
        Ok(self.apply(a, b).clamp(-1.0, 1.0))
    }
}

/// `L` predicted for the singlet, `2(1 + cos φ)`, for every `N` and frame.
pub fn singlet_l(phi: f64) -> f64 {
    2.0 * (1.0 + phi.cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng) -> TwoQubitState {
        // ρ = G G† / Tr for a random complex G.
        let g = Matrix4::from_fn(|_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = g * g.adjoint();
        let tr = m.trace();
        let m = m / tr;
        let m = (m + m.adjoint()) * c(0.5, 0.0);
        TwoQubitState::from_density_matrix(m).unwrap()
    }

    #[test]
    fn singlet_equal_settings_never_agree() {
        let s = TwoQubitState::singlet();
        let p = s.outcome_probability(&UnitVector::S1, &UnitVector::S1, Outcome::Plus, Outcome::Plus);
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn singlet_orthogonal_polarizers() {
        let s = TwoQubitState::singlet();
        let p = s.outcome_probability(
            &UnitVector::S1,
            &UnitVector::S1.neg(),
            Outcome::Plus,
            Outcome::Plus,
        );
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn maximally_mixed_is_uniform() {
        let s = TwoQubitState::maximally_mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = UnitVector::random(&mut rng);
            let b = UnitVector::random(&mut rng);
            for r_a in Outcome::BOTH {
                for r_b in Outcome::BOTH {
                    assert_abs_diff_eq!(s.outcome_probability(&a, &b, r_a, r_b), 0.25, epsilon = 1e-15);
                }
            }
            assert_abs_diff_eq!(s.correlation_value(&a, &b), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let s = random_state(&mut rng);
            let a = UnitVector::random(&mut rng);
            let b = UnitVector::random(&mut rng);
            let mut total = 0.0;
            let mut corr = 0.0;
            for r_a in Outcome::BOTH {
                for r_b in Outcome::BOTH {
                    let p = s.outcome_probability(&a, &b, r_a, r_b);
                    total += p;
                    corr += r_a.value() * r_b.value() * p;
                }
            }
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(corr, s.correlation_value(&a, &b), epsilon = 1e-12);
        }
    }

    #[test]
    fn singlet_correlation_is_minus_dot() {
        let s = TwoQubitState::singlet();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let a = UnitVector::random(&mut rng);
            let b = UnitVector::random(&mut rng);
            assert_abs_diff_eq!(s.correlation_value(&a, &b) + a.dot(&b), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn werner_one_is_singlet() {
        let w = TwoQubitState::werner(1.0).unwrap();
        assert!((w.density_matrix() - TwoQubitState::singlet().density_matrix()).norm() < 1e-15);
        assert!(TwoQubitState::werner(1.2).is_err());
        assert!(TwoQubitState::colored_noise(-0.1).is_err());
    }

    #[test]
    fn colored_noise_tensor() {
        // Direct trace of the noise term: |HV⟩⟨HV| + |VH⟩⟨VH| has σ1⊗σ1 = -1, others 0.
        for v in [0.0, 0.5, 0.99, 1.0] {
            let t = TwoQubitState::colored_noise(v).unwrap().diagonal_correlations();
            assert_abs_diff_eq!(t.t1, -1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(t.t2, -v, epsilon = 1e-15);
            assert_abs_diff_eq!(t.t3, -v, epsilon = 1e-15);
        }
        let s = TwoQubitState::colored_noise(0.99).unwrap();
        assert_abs_diff_eq!(s.correlation_value(&UnitVector::S2, &UnitVector::S2), -0.99, epsilon = 1e-15);
    }

    #[test]
    fn bell_diagonal_tensor_round_trip() {
        let s = TwoQubitState::bell_diagonal(-0.9, -0.8, -0.7).unwrap();
        let t = s.diagonal_correlations();
        assert_abs_diff_eq!(t.t1, -0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(t.t2, -0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(t.t3, -0.7, epsilon = 1e-15);
        let singlet = TwoQubitState::bell_diagonal(-1.0, -1.0, -1.0).unwrap();
        assert!((singlet.density_matrix() - TwoQubitState::singlet().density_matrix()).norm() < 1e-15);
    }

    #[test]
    fn bell_diagonal_outside_tetrahedron_is_rejected() {
        assert!(TwoQubitState::bell_diagonal(1.0, 1.0, 1.0).is_err());
        // The three quoted visibilities sit just outside: 1 - 0.995 - 0.990 + 0.982 < 0.
        assert!(TwoQubitState::bell_diagonal(-0.995, -0.990, -0.982).is_err());
        assert!(TwoQubitState::bell_diagonal(-0.995, -0.990, -0.986).is_ok());
    }

    #[test]
    fn visibility_tensor_as_source() {
        let t = CorrelationTensor::from_visibilities(0.995, 0.990, 0.982).unwrap();
        assert_eq!(t.entries(), [-0.995, -0.990, -0.982]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let a = UnitVector::random(&mut rng);
            let b = UnitVector::random(&mut rng);
            let mut total = 0.0;
            for r_a in Outcome::BOTH {
                for r_b in Outcome::BOTH {
                    let p = t.probability(&a, &b, r_a, r_b).unwrap();
                    assert!(p >= 0.0);
                    total += p;
                }
            }
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
        assert!(CorrelationTensor::new(1.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn tensor_source_matches_state_when_physical() {
        let t = CorrelationTensor::new(-0.9, -0.85, -0.8).unwrap();
        let s = t.to_state().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let a = UnitVector::random(&mut rng);
            let b = UnitVector::random(&mut rng);
            assert_abs_diff_eq!(
                t.correlation(&a, &b).unwrap(),
                s.correlation(&a, &b).unwrap(),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                t.probability(&a, &b, Outcome::Plus, Outcome::Minus).unwrap(),
                s.probability(&a, &b, Outcome::Plus, Outcome::Minus).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn singlet_l_values() {
        assert_eq!(singlet_l(0.0), 4.0);
        assert_abs_diff_eq!(singlet_l(15f64.to_radians()), 3.931852, epsilon = 5e-7);
        assert_abs_diff_eq!(singlet_l(std::f64::consts::PI), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_invalid_matrices() {
        let mut m = *TwoQubitState::singlet().density_matrix();
        m[(0, 1)] = c(0.1, 0.0);
        assert!(TwoQubitState::from_density_matrix(m).is_err());
        let m = Matrix4::identity() * c(0.5, 0.0);
        assert!(TwoQubitState::from_density_matrix(m).is_err());
    }
}
