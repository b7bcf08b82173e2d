//! Poincaré-sphere geometry.
//!
//! Coordinates are Stokes components: `S1` is the H/V linear axis, `S2` the
//! ±45° linear axis and `S3` the circular axis (`+S3` = right circular).
//! Rotations are right-handed about their axis.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Norm tolerance applied when a vector enters the API.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// A point on the Poincaré sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", try_from = "[f64; 3]")]
pub struct UnitVector([f64; 3]);

impl UnitVector {
    pub const S1: UnitVector = UnitVector([1.0, 0.0, 0.0]);
    pub const S2: UnitVector = UnitVector([0.0, 1.0, 0.0]);
    pub const S3: UnitVector = UnitVector([0.0, 0.0, 1.0]);

    /// Accepts `(x, y, z)` whose norm is 1 within [`UNIT_TOLERANCE`] and
    /// renormalizes it.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(invalid(format!(
                "({x}, {y}, {z}) is not a unit vector (norm {norm})"
            )));
        }
        Ok(Self([x / norm, y / norm, z / norm]))
    }

    /// Normalizes any non-zero finite vector.
    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(invalid(format!("cannot normalize ({x}, {y}, {z})")));
        }
        Ok(Self([x / norm, y / norm, z / norm]))
    }

    /// Point with polar angle `theta` from `+S3` and azimuth `phi` from `+S1`.
    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self([st * cp, st * sp, ct])
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
        // UnitSphere output is unit to rounding; renormalize so the invariant is tight.
        Self::normalized(x, y, z).expect("UnitSphere never yields zero")
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        dot(&self.0, &other.0)
    }

    /// Raw cross product (not normalized).
    pub fn cross(&self, other: &UnitVector) -> [f64; 3] {
        cross(&self.0, &other.0)
    }

    pub fn neg(&self) -> Self {
        Self([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl From<UnitVector> for [f64; 3] {
    fn from(v: UnitVector) -> Self {
        v.0
    }
}

impl TryFrom<[f64; 3]> for UnitVector {
    type Error = crate::Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        UnitVector::new(v[0], v[1], v[2])
    }
}

impl fmt::Display for UnitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6}, {:.6})", self.0[0], self.0[1], self.0[2])
    }
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Rodrigues rotation of `v` by `angle` about `axis`.
///
/// Both inputs are unit by construction of [`UnitVector`], so the result
/// keeps unit norm to rounding.
pub fn rotate(v: &UnitVector, axis: &UnitVector, angle: f64) -> UnitVector {
    let (s, c) = angle.sin_cos();
    let k = axis.0;
    let kxv = cross(&k, &v.0);
    let kdv = dot(&k, &v.0) * (1.0 - c);
    UnitVector([
        v.0[0] * c + kxv[0] * s + k[0] * kdv,
        v.0[1] * c + kxv[1] * s + k[1] * kdv,
        v.0[2] * c + kxv[2] * s + k[2] * kdv,
    ])
}

/// A great-circle plane given by its normal `n_j` and a seed direction `a_j`
/// lying in it. `perp = n_j × a_j` completes the in-plane basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFrame {
    normal: UnitVector,
    seed: UnitVector,
    perp: UnitVector,
}

impl PlaneFrame {
    pub fn new(normal: UnitVector, seed: UnitVector) -> Result<Self> {
        let overlap = normal.dot(&seed);
        if overlap.abs() > UNIT_TOLERANCE {
            return Err(invalid(format!(
                "seed {seed} is not in the plane with normal {normal} (n·a = {overlap:.3e})"
            )));
        }
        let perp = UnitVector(normal.cross(&seed));
        Ok(Self { normal, seed, perp })
    }

    pub fn normal(&self) -> UnitVector {
        self.normal
    }

    pub fn seed(&self) -> UnitVector {
        self.seed
    }

    pub fn perp(&self) -> UnitVector {
        self.perp
    }

    /// `cos θ · a + sin θ · (n × a)` for an in-plane direction `a`.
    pub fn tilt(&self, a: &UnitVector, theta: f64) -> UnitVector {
        let (s, c) = theta.sin_cos();
        let p = cross(&self.normal.0, &a.0);
        UnitVector([
            c * a.0[0] + s * p[0],
            c * a.0[1] + s * p[1],
            c * a.0[2] + s * p[2],
        ])
    }

    /// Same plane with the seed turned by `angle` about the normal.
    pub fn with_seed_rotated(&self, angle: f64) -> Self {
        let seed = rotate(&self.seed, &self.normal, angle);
        Self::new(self.normal, seed).expect("rotation about the normal stays in-plane")
    }
}

/// One rotated setting group: Alice's direction and Bob's directions at
/// `θ = 0` and `θ = φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SettingEntry {
    pub alice: UnitVector,
    pub bob0: UnitVector,
    pub bobphi: UnitVector,
}

impl SettingEntry {
    pub fn bob(&self, theta: Theta) -> UnitVector {
        match theta {
            Theta::Zero => self.bob0,
            Theta::Phi => self.bobphi,
        }
    }
}

/// Which of the two Bob settings of an entry is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Theta {
    Zero,
    Phi,
}

impl Theta {
    pub const BOTH: [Theta; 2] = [Theta::Zero, Theta::Phi];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettingSchedule {
    pub plane_index: u8,
    pub n: usize,
    pub phi: f64,
    pub frame: PlaneFrame,
    pub entries: Vec<SettingEntry>,
}

/// The `N` settings `a_j^k = R_N^k a_j` (rotation by `π/N` about `n_j`) and
/// their partners at `θ = 0` and `θ = φ`.
pub fn build_schedule(
    frame: &PlaneFrame,
    plane_index: u8,
    n: usize,
    phi: f64,
) -> Result<SettingSchedule> {
    if n == 0 {
        return Err(invalid("number of settings N must be at least 1"));
    }
    let step = PI / n as f64;
    let mut entries = Vec::with_capacity(n);
    let mut alice = frame.seed;
    for k in 0..n {
        if k > 0 {
            alice = rotate(&alice, &frame.normal, step);
        }
        entries.push(SettingEntry {
            alice,
            bob0: alice,
            bobphi: frame.tilt(&alice, phi),
        });
    }
    Ok(SettingSchedule {
        plane_index,
        n,
        phi,
        frame: *frame,
        entries,
    })
}

/// Plane 1 is the linear-polarization equator (normal `S3`, seed H/V);
/// plane 2 holds H/V and circular polarizations (normal `S2`, seed H/V).
pub fn default_frames() -> (PlaneFrame, PlaneFrame) {
    let first = PlaneFrame::new(UnitVector::S3, UnitVector::S1).expect("orthogonal axes");
    let second = PlaneFrame::new(UnitVector::S2, UnitVector::S1).expect("orthogonal axes");
    (first, second)
}

/// Jones vector `(E_H, E_V)` of a pure polarization state.
pub fn jones_vector(v: &UnitVector) -> [Complex64; 2] {
    // Polar angle from +S1 and azimuth in the (S2, S3) plane.
    let half = 0.5 * v.x().clamp(-1.0, 1.0).acos();
    let delta = v.z().atan2(v.y());
    [
        Complex64::new(half.cos(), 0.0),
        Complex64::from_polar(half.sin(), delta),
    ]
}

/// Stokes vector of a (not necessarily normalized) Jones vector.
pub fn stokes_of_jones(e: &[Complex64; 2]) -> Result<UnitVector> {
    let h = e[0].norm_sqr();
    let v = e[1].norm_sqr();
    let cross = e[0].conj() * e[1];
    UnitVector::normalized(h - v, 2.0 * cross.re, 2.0 * cross.im)
}

/// Jones matrix of a quarter-wave plate with its fast axis at `angle` from H.
fn quarter_wave_plate(angle: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = angle.sin_cos();
    let lag = Complex64::new(0.0, -1.0);
    let one = Complex64::new(1.0, 0.0);
    // R(angle) · diag(1, -i) · R(-angle)
    [
        [one * c * c + lag * s * s, (one - lag) * c * s],
        [(one - lag) * c * s, one * s * s + lag * c * c],
    ]
}

/// State selected by a quarter-wave plate at `qwp_deg` followed by a linear
/// polarizer at `polarizer_deg`: the analyzer projects onto `Q† |p⟩`.
pub fn analyzer_stokes(qwp_deg: f64, polarizer_deg: f64) -> UnitVector {
    let q = quarter_wave_plate(qwp_deg.to_radians());
    let (s, c) = polarizer_deg.to_radians().sin_cos();
    let p = [Complex64::new(c, 0.0), Complex64::new(s, 0.0)];
    let psi = [
        q[0][0].conj() * p[0] + q[1][0].conj() * p[1],
        q[0][1].conj() * p[0] + q[1][1].conj() * p[1],
    ];
    stokes_of_jones(&psi).expect("unitary image of a unit vector")
}

fn wrap_degrees(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(180.0);
    // Snap values that only differ from 0 or 180 by rounding.
    if wrapped < 1e-9 || 180.0 - wrapped < 1e-9 {
        0.0
    } else {
        wrapped
    }
}

/// Quarter-wave-plate and polarizer angles (degrees, in `[0, 180)`) whose
/// analyzer projects onto the state `v`.
///
/// The plate's fast axis is put on the major axis of the polarization
/// ellipse; the polarizer then sits at azimuth ± ellipticity. Among the
/// valid pairs the lexicographically smallest `(qwp, polarizer)` is returned.
pub fn analyzer_angles(v: &UnitVector) -> (f64, f64) {
    let azimuth = 0.5 * v.y().atan2(v.x());
    let ellipticity = 0.5 * v.z().clamp(-1.0, 1.0).asin();
    let mut candidates = Vec::with_capacity(4);
    for plate in [azimuth, azimuth + FRAC_PI_2] {
        for pol in [plate + ellipticity, plate - ellipticity] {
            let pair = (
                wrap_degrees(plate.to_degrees()),
                wrap_degrees(pol.to_degrees()),
            );
            let back = analyzer_stokes(pair.0, pair.1);
            let miss = 1.0 - back.dot(v);
            candidates.push((miss, pair));
        }
    }
    let best = candidates
        .iter()
        .map(|(miss, _)| *miss)
        .fold(f64::INFINITY, f64::min);
    candidates
        .into_iter()
        .filter(|(miss, _)| *miss <= best + 1e-12)
        .map(|(_, pair)| pair)
        .min_by(|a, b| a.partial_cmp(b).expect("finite angles"))
        .expect("at least one candidate")
}
