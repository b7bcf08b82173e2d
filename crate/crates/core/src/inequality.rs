//! Finite-setting Leggett inequalities.
//!
//! For two orthogonal planes of the Poincaré sphere and `N` settings per
//! plane (rotated by `π/N` about the plane normal),
//!
//! ```text
//! L_N = |E_1(φ) + E_1(0)| + |E_2(φ) + E_2(0)|  ≤  4 − 2 u_N |sin(φ/2)|,
//! u_N = cot(π/2N) / N,
//! ```
//!
//! where `E_j(θ)` averages `C(a_j^k, b_j^k)` over the `N` rotated settings with
//! `b = cos θ a + sin θ (n_j × a)`. As `N → ∞`, `u_N → 2/π`.

use std::f64::consts::{FRAC_2_PI, PI};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quantum::CorrelationSource;
use crate::sphere::{build_schedule, rotate, PlaneFrame, SettingSchedule, Theta, UnitVector};

/// `lim u_N = 2/π`.
pub const U_CONTINUUM: f64 = FRAC_2_PI;

/// Maximum `|n_1·n_2|` accepted for the two planes.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;

/// Number of settings averaged per plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Averaging {
    Finite(usize),
    Continuum,
}

impl Averaging {
    pub fn u(self) -> Result<f64> {
        match self {
            Averaging::Finite(n) => u_coefficient(n),
            Averaging::Continuum => Ok(U_CONTINUUM),
        }
    }

    pub fn bound(self, phi: f64) -> Result<f64> {
        Ok(4.0 - 2.0 * self.u()? * (phi / 2.0).sin().abs())
    }
}

/// `u_N = cot(π/2N) / N`.
pub fn u_coefficient(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    let x = PI / (2.0 * n as f64);
    Ok(x.cos() / x.sin() / n as f64)
}

/// `4 − 2 u_N |sin(φ/2)|`.
pub fn nlv_bound(n: usize, phi: f64) -> Result<f64> {
    Averaging::Finite(n).bound(phi)
}

/// `4 − (4/π) |sin(φ/2)|`.
pub fn continuum_bound(phi: f64) -> f64 {
    4.0 - 2.0 * U_CONTINUUM * (phi / 2.0).sin().abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteAverage {
    /// `(1/N) Σ_k |(R_N^k c)·w|`.
    pub value: f64,
    /// `(angle(w, c) − π/2) mod π/N`, in `[0, π/N)`.
    pub xi: f64,
    pub axis: UnitVector,
}

/// Lexicographically smallest unit vector orthogonal to `w`.
fn smallest_orthogonal(w: &UnitVector) -> UnitVector {
    let [wx, wy, wz] = w.components();
    // Minimizing the first coordinate over the circle ⟂ w points along -(e1 - wx w).
    let r = [1.0 - wx * wx, -wx * wy, -wx * wz];
    if r.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-9 {
        return UnitVector::normalized(-r[0], -r[1], -r[2]).expect("non-zero");
    }
    // w = ±e1: the circle is the (y, z) plane, smallest y first.
    UnitVector::S2.neg()
}

/// Average of `|(R_N^k c)·w|` over `k = 0..N`, with `R_N` the rotation by
/// `π/N` about the axis orthogonal to `w` and `c`. It is never below `u_N`.
pub fn discrete_average(w: &UnitVector, c: &UnitVector, n: usize) -> Result<DiscreteAverage> {
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    let cw = c.cross(w);
    let sin_angle = (cw[0] * cw[0] + cw[1] * cw[1] + cw[2] * cw[2]).sqrt();
    let axis = if sin_angle > 1e-12 {
        UnitVector::normalized(cw[0], cw[1], cw[2])?
    } else {
        smallest_orthogonal(w)
    };
    let step = PI / n as f64;
    let mut sum = 0.0;
    let mut ck = *c;
    for k in 0..n {
        if k > 0 {
            ck = rotate(&ck, &axis, step);
        }
        sum += ck.dot(w).abs();
    }
    let angle = sin_angle.atan2(c.dot(w));
    let mut xi = (angle - PI / 2.0).rem_euclid(step);
    if xi >= step {
        xi = 0.0;
    }
    Ok(DiscreteAverage {
        value: sum / n as f64,
        xi,
        axis,
    })
}

/// `E_j^N(θ)`: mean correlation over the schedule's rotated setting pairs.
pub fn e_jn<S: CorrelationSource + ?Sized>(
    source: &S,
    schedule: &SettingSchedule,
    theta: Theta,
) -> Result<f64> {
    let mut sum = 0.0;
    for e in &schedule.entries {
        sum += source.correlation(&e.alice, &e.bob(theta))?;
    }
    Ok(sum / schedule.entries.len() as f64)
}

/// `L_N` and its bound for one `(N, φ)` and frame pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub n: Averaging,
    pub phi: f64,
    pub l_value: f64,
    pub bound: f64,
    /// Propagated standard deviation of `l_value`; zero for analytic sources.
    pub sigma: f64,
    /// `(l_value − bound) / sigma`, when `sigma > 0`.
    pub violation_sigmas: Option<f64>,
    /// `E_j(θ)` indexed `[plane][θ = 0, θ = φ]`.
    pub e_values: [[f64; 2]; 2],
    pub frames: (PlaneFrame, PlaneFrame),
}

impl InequalityReport {
    pub fn margin(&self) -> f64 {
        self.l_value - self.bound
    }

    pub fn violates(&self) -> bool {
        self.l_value > self.bound
    }

    pub(crate) fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self.violation_sigmas = (sigma > 0.0).then(|| (self.l_value - self.bound) / sigma);
        self
    }
}

pub fn check_frames(frames: &(PlaneFrame, PlaneFrame)) -> Result<()> {
    let overlap = frames.0.normal().dot(&frames.1.normal());
    if overlap.abs() > ORTHOGONALITY_TOL {
        return Err(invalid(format!(
            "plane normals must be orthogonal (n1·n2 = {overlap:.3e})"
        )));
    }
    Ok(())
}

/// Both schedules for `(N, φ)`.
pub fn schedules(
    frames: &(PlaneFrame, PlaneFrame),
    n: usize,
    phi: f64,
) -> Result<[SettingSchedule; 2]> {
    check_frames(frames)?;
    Ok([
        build_schedule(&frames.0, 1, n, phi)?,
        build_schedule(&frames.1, 2, n, phi)?,
    ])
}

/// Combines plane averages `E_j(θ)` into `L = Σ_j |E_j(φ) + E_j(0)|`.
pub fn combine(e_values: &[[f64; 2]; 2]) -> f64 {
    e_values.iter().map(|e| (e[0] + e[1]).abs()).sum()
}

fn evaluate<S: CorrelationSource + ?Sized>(
    source: &S,
    frames: &(PlaneFrame, PlaneFrame),
    n: usize,
    phi: f64,
) -> Result<[[f64; 2]; 2]> {
    let [s1, s2] = schedules(frames, n, phi)?;
    let mut e = [[0.0; 2]; 2];
    for (j, s) in [s1, s2].iter().enumerate() {
        e[j] = [e_jn(source, s, Theta::Zero)?, e_jn(source, s, Theta::Phi)?];
    }
    Ok(e)
}

/// Analytic `L_N` of a correlation source.
pub fn l_n<S: CorrelationSource + ?Sized>(
    source: &S,
    frames: &(PlaneFrame, PlaneFrame),
    n: usize,
    phi: f64,
) -> Result<InequalityReport> {
    let e_values = evaluate(source, frames, n, phi)?;
    Ok(InequalityReport {
        n: Averaging::Finite(n),
        phi,
        l_value: combine(&e_values),
        bound: nlv_bound(n, phi)?,
        sigma: 0.0,
        violation_sigmas: None,
        e_values,
        frames: *frames,
    })
}

/// `L` averaged over `m` equally spaced directions per plane (spacing `π/m`),
/// compared with the `N → ∞` bound. Exact for quadratic correlation
/// functions as soon as `m ≥ 2`.
pub fn continuum_l<S: CorrelationSource + ?Sized>(
    source: &S,
    frames: &(PlaneFrame, PlaneFrame),
    phi: f64,
    m: usize,
) -> Result<InequalityReport> {
    if m == 0 {
        return Err(invalid("grid size M must be at least 1"));
    }
    let e_values = evaluate(source, frames, m, phi)?;
    Ok(InequalityReport {
        n: Averaging::Continuum,
        phi,
        l_value: combine(&e_values),
        bound: continuum_bound(phi),
        sigma: 0.0,
        violation_sigmas: None,
        e_values,
        frames: *frames,
    })
}

/// `2 arcsin(u_N / 4)`: the angle where the singlet exceeds the bound most.
pub fn optimal_phi(n: Averaging) -> Result<f64> {
    let u = n.u()?;
    if u < 1e-12 {
        return Err(Error::NoViolation(
            "u_1 = 0, the single-setting bound cannot be violated".into(),
        ));
    }
    Ok(2.0 * (u / 4.0).asin())
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`,
/// stopping once the bracket is narrower than `tol`. Returns `(x, f(x))`.
pub fn golden_section_max<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Location and size of the largest `L − bound` found for a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViolationPeak {
    pub phi: f64,
    pub margin: f64,
}

/// Golden-section search of `L_N − bound` over `φ ∈ (0°, 45°)` with a
/// `tol_deg` bracket.
pub fn max_violation<S: CorrelationSource + ?Sized>(
    source: &S,
    frames: &(PlaneFrame, PlaneFrame),
    n: usize,
    tol_deg: f64,
) -> Result<ViolationPeak> {
    check_frames(frames)?;
    let mut failure = None;
    let (phi, margin) = golden_section_max(
        |phi| match l_n(source, frames, n, phi) {
            Ok(r) => r.margin(),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        0.0,
        45f64.to_radians(),
        tol_deg.to_radians(),
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(ViolationPeak { phi, margin }),
    }
}
