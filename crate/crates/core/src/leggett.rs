//! Leggett's non-local variable model.
//!
//! The source emits product states labelled by Poincaré vectors `(u, v)`. For
//! one such pair the joint law is
//!
//! ```text
//! P_uv(r_a, r_b | a, b) = [1 + r_a a·u + r_b b·v + r_a r_b C(u, v, a, b)] / 4
//! ```
//!
//! where the correlation `C` is free apart from keeping all four entries
//! non-negative. Ensembles are finite weighted mixtures of such pairs.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::quantum::{CorrelationSource, Outcome};
use crate::sphere::{PlaneFrame, SettingSchedule, UnitVector};

/// Slack allowed on probabilities and on the explicit-model conditions.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// Joint outcome probabilities for one setting pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OutcomeTable {
    pub p_pp: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub p_mm: f64,
}

impl OutcomeTable {
    pub fn get(&self, r_a: Outcome, r_b: Outcome) -> f64 {
        match (r_a, r_b) {
            (Outcome::Plus, Outcome::Plus) => self.p_pp,
            (Outcome::Plus, Outcome::Minus) => self.p_pm,
            (Outcome::Minus, Outcome::Plus) => self.p_mp,
            (Outcome::Minus, Outcome::Minus) => self.p_mm,
        }
    }

    fn entry_mut(&mut self, r_a: Outcome, r_b: Outcome) -> &mut f64 {
        match (r_a, r_b) {
            (Outcome::Plus, Outcome::Plus) => &mut self.p_pp,
            (Outcome::Plus, Outcome::Minus) => &mut self.p_pm,
            (Outcome::Minus, Outcome::Plus) => &mut self.p_mp,
            (Outcome::Minus, Outcome::Minus) => &mut self.p_mm,
        }
    }

    pub fn total(&self) -> f64 {
        self.p_pp + self.p_pm + self.p_mp + self.p_mm
    }

    pub fn min_entry(&self) -> f64 {
        self.p_pp.min(self.p_pm).min(self.p_mp).min(self.p_mm)
    }

    /// `P(r_a | a)`.
    pub fn marginal_a(&self, r_a: Outcome) -> f64 {
        self.get(r_a, Outcome::Plus) + self.get(r_a, Outcome::Minus)
    }

    /// `P(r_b | b)`.
    pub fn marginal_b(&self, r_b: Outcome) -> f64 {
        self.get(Outcome::Plus, r_b) + self.get(Outcome::Minus, r_b)
    }

    pub fn correlation(&self) -> f64 {
        self.p_pp + self.p_mm - self.p_pm - self.p_mp
    }

    fn add_scaled(&mut self, other: &OutcomeTable, weight: f64) {
        self.p_pp += weight * other.p_pp;
        self.p_pm += weight * other.p_pm;
        self.p_mp += weight * other.p_mp;
        self.p_mm += weight * other.p_mm;
    }
}

/// The pair law for `(u, v)` at settings `(a, b)` with correlation `c`.
///
/// Fails with [`Error::ConstraintViolation`] naming the most negative entry
/// when `c` lies outside [`admissible_c_range`].
pub fn leggett_outcomes(
    u: &UnitVector,
    v: &UnitVector,
    a: &UnitVector,
    b: &UnitVector,
    c: f64,
) -> Result<OutcomeTable> {
    if !c.is_finite() {
        return Err(invalid("correlation coefficient must be finite"));
    }
    let au = a.dot(u);
    let bv = b.dot(v);
    let mut table = OutcomeTable::default();
    let mut worst: Option<(Outcome, Outcome, f64)> = None;
    for r_a in Outcome::BOTH {
        for r_b in Outcome::BOTH {
            let (ra, rb) = (r_a.value(), r_b.value());
            let p = (1.0 + ra * au + rb * bv + ra * rb * c) / 4.0;
            if p < -PROBABILITY_TOL && worst.is_none_or(|(_, _, w)| p < w) {
                worst = Some((r_a, r_b, p));
            }
            *table.entry_mut(r_a, r_b) = p;
        }
    }
    match worst {
        Some((r_a, r_b, value)) => Err(Error::ConstraintViolation {
            r_a: r_a.sign(),
            r_b: r_b.sign(),
            value,
            deficit: -value,
        }),
        None => Ok(table),
    }
}

/// Interval of correlation values keeping the pair law non-negative:
/// `[-1 + |a·u + b·v|, 1 - |a·u - b·v|]`.
pub fn admissible_c_range(
    u: &UnitVector,
    v: &UnitVector,
    a: &UnitVector,
    b: &UnitVector,
) -> (f64, f64) {
    let au = a.dot(u);
    let bv = b.dot(v);
    (-1.0 + (au + bv).abs(), 1.0 - (au - bv).abs())
}

pub type CorrelationFn =
    Arc<dyn Fn(&UnitVector, &UnitVector, &UnitVector, &UnitVector) -> f64 + Send + Sync>;
pub type TableFn =
    Arc<dyn Fn(&UnitVector, &UnitVector, &UnitVector, &UnitVector) -> OutcomeTable + Send + Sync>;

/// How one ensemble component correlates its outcomes.
#[derive(Clone)]
pub enum PairLaw {
    /// `C = (a·u)(b·v)`: independent outcomes, i.e. a local model.
    Product,
    /// Pair law with an arbitrary `C(u, v, a, b)`, checked for admissibility.
    Correlation(CorrelationFn),
    /// A raw joint table that bypasses the pair law. Meant for exercising the
    /// marginal checker with tables that do not respect it.
    Table(TableFn),
}

impl fmt::Debug for PairLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairLaw::Product => f.write_str("Product"),
            PairLaw::Correlation(_) => f.write_str("Correlation(..)"),
            PairLaw::Table(_) => f.write_str("Table(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleComponent {
    pub weight: f64,
    pub u: UnitVector,
    pub v: UnitVector,
    pub law: PairLaw,
}

impl EnsembleComponent {
    pub fn table(&self, a: &UnitVector, b: &UnitVector) -> Result<OutcomeTable> {
        match &self.law {
            PairLaw::Product => {
                leggett_outcomes(&self.u, &self.v, a, b, a.dot(&self.u) * b.dot(&self.v))
            }
            PairLaw::Correlation(f) => {
                leggett_outcomes(&self.u, &self.v, a, b, f(&self.u, &self.v, a, b))
            }
            PairLaw::Table(f) => Ok(f(&self.u, &self.v, a, b)),
        }
    }
}

/// A finite mixture standing in for the source density `ρ(u, v)`.
#[derive(Debug, Clone)]
pub struct PureEnsemble {
    components: Vec<EnsembleComponent>,
}

impl PureEnsemble {
    pub fn new(components: Vec<EnsembleComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("ensemble needs at least one component"));
        }
        let mut total = 0.0;
        for c in &components {
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(invalid(format!("negative or non-finite weight {}", c.weight)));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { components })
    }

    /// Product-state (local) ensemble from `(weight, u, v)` triples.
    pub fn product(parts: &[(f64, UnitVector, UnitVector)]) -> Result<Self> {
        Self::new(
            parts
                .iter()
                .map(|&(weight, u, v)| EnsembleComponent {
                    weight,
                    u,
                    v,
                    law: PairLaw::Product,
                })
                .collect(),
        )
    }

    pub fn components(&self) -> &[EnsembleComponent] {
        &self.components
    }

    /// Mixture of the component tables.
    pub fn joint_table(&self, a: &UnitVector, b: &UnitVector) -> Result<OutcomeTable> {
        let mut acc = OutcomeTable::default();
        for c in &self.components {
            acc.add_scaled(&c.table(a, b)?, c.weight);
        }
        Ok(acc)
    }
}

impl CorrelationSource for PureEnsemble {
    fn probability(
        &self,
        a: &UnitVector,
        b: &UnitVector,
        r_a: Outcome,
        r_b: Outcome,
    ) -> Result<f64> {
        Ok(self.joint_table(a, b)?.get(r_a, r_b))
    }

    fn correlation(&self, a: &UnitVector, b: &UnitVector) -> Result<f64> {
        Ok(self.joint_table(a, b)?.correlation())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalReport {
    pub settings_checked: usize,
    pub max_deviation: f64,
    /// Index of the setting pair with the largest deviation.
    pub worst_setting: Option<usize>,
    pub passed: bool,
}

/// Compares the ensemble's joint marginals with the product-state marginals
/// `Σ w (1 + r a·u)/2` and `Σ w (1 + r b·v)/2`.
pub fn check_marginals(
    ensemble: &PureEnsemble,
    settings: &[(UnitVector, UnitVector)],
) -> Result<MarginalReport> {
    let mut max_deviation = 0.0f64;
    let mut worst_setting = None;
    for (idx, (a, b)) in settings.iter().enumerate() {
        let joint = ensemble.joint_table(a, b)?;
        for r in Outcome::BOTH {
            let expect_a: f64 = ensemble
                .components
                .iter()
                .map(|c| c.weight * (1.0 + r.value() * a.dot(&c.u)) / 2.0)
                .sum();
            let expect_b: f64 = ensemble
                .components
                .iter()
                .map(|c| c.weight * (1.0 + r.value() * b.dot(&c.v)) / 2.0)
                .sum();
            let dev = (joint.marginal_a(r) - expect_a)
                .abs()
                .max((joint.marginal_b(r) - expect_b).abs());
            if dev > max_deviation {
                max_deviation = dev;
                worst_setting = Some(idx);
            }
        }
    }
    Ok(MarginalReport {
        settings_checked: settings.len(),
        max_deviation,
        worst_setting,
        passed: max_deviation <= PROBABILITY_TOL,
    })
}

/// Largest violation of the explicit-model conditions
/// `|a·b ± u·a| ≤ 1 ∓ v·b` over all pairs. Non-positive means feasible.
pub fn explicit_model_margin(
    u: &UnitVector,
    v: &UnitVector,
    pairs: &[(UnitVector, UnitVector)],
) -> f64 {
    pairs
        .iter()
        .map(|(a, b)| {
            let ab = a.dot(b);
            let ua = u.dot(a);
            let vb = v.dot(b);
            ((ab + ua).abs() - (1.0 - vb)).max((ab - ua).abs() - (1.0 + vb))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Whether the explicit NLV model with vectors `(u, v)` can reproduce
/// singlet-like data on every listed pair.
pub fn explicit_model_feasible(
    u: &UnitVector,
    v: &UnitVector,
    pairs: &[(UnitVector, UnitVector)],
) -> bool {
    explicit_model_margin(u, v, pairs) <= PROBABILITY_TOL
}

/// The same test through the mirrored form `|a·b ± v·b| ≤ 1 ∓ u·a`.
pub fn explicit_model_feasible_mirrored(
    u: &UnitVector,
    v: &UnitVector,
    pairs: &[(UnitVector, UnitVector)],
) -> bool {
    pairs.iter().all(|(a, b)| {
        let ab = a.dot(b);
        let ua = u.dot(a);
        let vb = v.dot(b);
        (ab + vb).abs() <= 1.0 - ua + PROBABILITY_TOL && (ab - vb).abs() <= 1.0 + ua + PROBABILITY_TOL
    })
}

/// Every `(a, b)` pair measured by the given schedules, both `θ = 0` and `θ = φ`.
pub fn measured_pairs(schedules: &[&SettingSchedule]) -> Vec<(UnitVector, UnitVector)> {
    schedules
        .iter()
        .flat_map(|s| s.entries.iter())
        .flat_map(|e| [(e.alice, e.bob0), (e.alice, e.bobphi)])
        .collect()
}

/// Vectors `u = -v` orthogonal to both planes' `a_j⊥`, which make the
/// explicit model reproduce single-setting (`N = 1`) data for any `φ`.
pub fn single_setting_construction(frames: &(PlaneFrame, PlaneFrame)) -> (UnitVector, UnitVector) {
    let p1 = frames.0.perp();
    let p2 = frames.1.perp();
    let c = p1.cross(&p2);
    let u = UnitVector::normalized(c[0], c[1], c[2]).unwrap_or_else(|_| {
        // Parallel perps: any vector orthogonal to p1 works.
        let helper = if p1.x().abs() < 0.9 { UnitVector::S1 } else { UnitVector::S2 };
        let c = p1.cross(&helper);
        UnitVector::normalized(c[0], c[1], c[2]).expect("helper is not parallel")
    });
    (u, u.neg())
}

/// Sphere grid with the given angular step: poles once, then rings of
/// constant polar angle sampled every `step` in azimuth.
pub fn sphere_grid(step_deg: f64) -> Result<Vec<UnitVector>> {
    if !(step_deg > 0.0 && step_deg <= 90.0) {
        return Err(invalid(format!("grid step {step_deg}° must be in (0, 90]")));
    }
    let rings = (180.0 / step_deg).round() as usize;
    let per_ring = (360.0 / step_deg).round() as usize;
    let mut grid = Vec::with_capacity(2 + rings.saturating_sub(1) * per_ring);
    grid.push(UnitVector::S3);
    for i in 1..rings {
        let theta = (i as f64 * step_deg).to_radians();
        for j in 0..per_ring {
            grid.push(UnitVector::from_spherical(theta, (j as f64 * step_deg).to_radians()));
        }
    }
    grid.push(UnitVector::S3.neg());
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSearch {
    pub grid_points: usize,
    /// A feasible `(u, v)` if the grid holds one.
    pub feasible: Option<(UnitVector, UnitVector)>,
    /// Smallest margin over the grid, exact when below `window`; otherwise
    /// `window` is reported as a lower bound.
    pub best_margin: f64,
    pub margin_exact: bool,
}

/// Exhaustive search over `(u, v)` on a sphere grid for the explicit model.
///
/// Every pair of grid points is covered. For each `u` the `v` grid is
/// pre-sorted along one measured `b`; points whose projection misses that
/// pair's admissible interval by more than `window` cannot reach a margin
/// below `window` and are skipped without evaluation.
pub fn search_explicit_model(
    pairs: &[(UnitVector, UnitVector)],
    step_deg: f64,
    window: f64,
) -> Result<ModelSearch> {
    if pairs.is_empty() {
        return Err(invalid("no measurement pairs to test"));
    }
    let grid = sphere_grid(step_deg)?;
    let dots: Vec<f64> = pairs.iter().map(|(a, b)| a.dot(b)).collect();
    // Projections of every v on every b, and per-pair sort orders.
    let proj: Vec<Vec<f64>> = pairs
        .iter()
        .map(|(_, b)| grid.iter().map(|v| v.dot(b)).collect())
        .collect();
    let orders: Vec<Vec<(f64, usize)>> = proj
        .iter()
        .map(|col| {
            let mut o: Vec<(f64, usize)> = col.iter().copied().zip(0..).collect();
            o.sort_by(|x, y| x.0.total_cmp(&y.0));
            o
        })
        .collect();

    let mut best = window;
    let mut exact = false;
    let mut feasible = None;
    let mut lo = vec![0.0; pairs.len()];
    let mut hi = vec![0.0; pairs.len()];
    for u in &grid {
        let mut pivot = 0;
        for (i, (a, _)) in pairs.iter().enumerate() {
            let ua = u.dot(a);
            // v·b must lie in [|a·b − u·a| − 1, 1 − |a·b + u·a|].
            lo[i] = (dots[i] - ua).abs() - 1.0;
            hi[i] = 1.0 - (dots[i] + ua).abs();
            if hi[i] - lo[i] < hi[pivot] - lo[pivot] {
                pivot = i;
            }
        }
        let order = &orders[pivot];
        let start = order.partition_point(|&(z, _)| z < lo[pivot] - window);
        for &(z, vi) in &order[start..] {
            if z > hi[pivot] + window {
                break;
            }
            let mut margin = f64::NEG_INFINITY;
            for i in 0..pairs.len() {
                let z = proj[i][vi];
                margin = margin.max(z - hi[i]).max(lo[i] - z);
                if margin >= best {
                    break;
                }
            }
            if margin < best {
                best = margin;
                exact = true;
            }
            if margin <= PROBABILITY_TOL && feasible.is_none() {
                feasible = Some((*u, grid[vi]));
            }
        }
    }
    Ok(ModelSearch {
        grid_points: grid.len(),
        feasible,
        best_margin: best,
        margin_exact: exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{build_schedule, default_frames};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> UnitVector {
        UnitVector::normalized(x, y, z).unwrap()
    }

    /// Brute-force range: scan C and keep values whose four entries are non-negative.
    fn scanned_range(au: f64, bv: f64) -> (f64, f64) {
        let ok = |c: f64| {
            [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                .iter()
                .all(|(ra, rb)| 1.0 + ra * au + rb * bv + ra * rb * c >= -1e-12)
        };
        let steps = 200_000;
        let cs: Vec<f64> = (0..=steps)
            .map(|i| -1.0 + 2.0 * i as f64 / steps as f64)
            .filter(|&c| ok(c))
            .collect();
        (cs[0], *cs.last().unwrap())
    }

    #[test]
    fn aligned_vectors_force_perfect_correlation() {
        let z = UnitVector::S3;
        let t = leggett_outcomes(&z, &z, &z, &z, 1.0).unwrap();
        assert_eq!((t.p_pp, t.p_pm, t.p_mp, t.p_mm), (1.0, 0.0, 0.0, 0.0));
        assert_eq!(admissible_c_range(&z, &z, &z, &z), (1.0, 1.0));
    }

    #[test]
    fn orthogonal_vectors_are_unbiased() {
        let t = leggett_outcomes(&UnitVector::S1, &UnitVector::S2, &UnitVector::S3, &UnitVector::S3, 0.0)
            .unwrap();
        for r_a in Outcome::BOTH {
            for r_b in Outcome::BOTH {
                assert_eq!(t.get(r_a, r_b), 0.25);
            }
        }
        assert_eq!(
            admissible_c_range(&UnitVector::S1, &UnitVector::S2, &UnitVector::S3, &UnitVector::S3),
            (-1.0, 1.0)
        );
    }

    #[test]
    fn range_matches_sign_enumeration() {
        // a·u = 0.5, b·v = -0.3
        let a = UnitVector::S3;
        let u = v(0.75f64.sqrt(), 0.0, 0.5);
        let b = UnitVector::S1;
        let w = v(-0.3, 0.91f64.sqrt(), 0.0);
        let (lo, hi) = admissible_c_range(&u, &w, &a, &b);
        assert_abs_diff_eq!(lo, -0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.2, epsilon = 1e-12);
        let (slo, shi) = scanned_range(0.5, -0.3);
        assert_abs_diff_eq!(lo, slo, epsilon = 1e-5);
        assert_abs_diff_eq!(hi, shi, epsilon = 1e-5);
    }

    #[test]
    fn out_of_range_names_the_outcome() {
        let z = UnitVector::S3;
        let err = leggett_outcomes(&z, &z, &z, &z, 0.5).unwrap_err();
        match err {
            // P(+,-) = (1 + 1 - 1 - 0.5)/4 = 0.125 ≥ 0, P(+,+) fine; the (−,−) entry
            // is (1 − 1 − 1 + 0.5)/4 = −0.125.
            Error::ConstraintViolation { r_a, r_b, deficit, .. } => {
                assert_eq!((r_a, r_b), (-1, -1));
                assert_abs_diff_eq!(deficit, 0.125, epsilon = 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn boundary_values_are_admissible() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let (u, w, a, b) = (
                UnitVector::random(&mut rng),
                UnitVector::random(&mut rng),
                UnitVector::random(&mut rng),
                UnitVector::random(&mut rng),
            );
            let (lo, hi) = admissible_c_range(&u, &w, &a, &b);
            assert!(lo <= hi + 1e-15);
            for c in [lo, hi, lo + (hi - lo) * rng.random::<f64>()] {
                let t = leggett_outcomes(&u, &w, &a, &b, c).unwrap();
                assert!(t.min_entry() >= -1e-12);
                assert_abs_diff_eq!(t.total(), 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(t.marginal_a(Outcome::Plus), (1.0 + a.dot(&u)) / 2.0, epsilon = 1e-15);
            }
            assert!(leggett_outcomes(&u, &w, &a, &b, hi + 1e-6).is_err());
            assert!(leggett_outcomes(&u, &w, &a, &b, lo - 1e-6).is_err());
        }
    }

    #[test]
    fn product_ensemble_marginals_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let parts: Vec<_> = (0..4)
            .map(|_| (0.25, UnitVector::random(&mut rng), UnitVector::random(&mut rng)))
            .collect();
        let ens = PureEnsemble::product(&parts).unwrap();
        let settings: Vec<_> = (0..50)
            .map(|_| (UnitVector::random(&mut rng), UnitVector::random(&mut rng)))
            .collect();
        let report = check_marginals(&ens, &settings).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.max_deviation <= 1e-15);
    }

    #[test]
    fn correlated_components_keep_marginals() {
        // C at the upper admissible edge for every setting.
        let law: CorrelationFn = Arc::new(|u, v, a, b| admissible_c_range(u, v, a, b).1);
        let ens = PureEnsemble::new(vec![
            EnsembleComponent { weight: 0.6, u: UnitVector::S1, v: UnitVector::S2, law: PairLaw::Correlation(law.clone()) },
            EnsembleComponent { weight: 0.4, u: UnitVector::S3, v: UnitVector::S3.neg(), law: PairLaw::Correlation(law) },
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let settings: Vec<_> = (0..50)
            .map(|_| (UnitVector::random(&mut rng), UnitVector::random(&mut rng)))
            .collect();
        assert!(check_marginals(&ens, &settings).unwrap().passed);
    }

    #[test]
    fn biased_table_is_flagged() {
        let biased: TableFn = Arc::new(|_, _, _, _| OutcomeTable { p_pp: 0.4, p_pm: 0.3, p_mp: 0.15, p_mm: 0.15 });
        let ens = PureEnsemble::new(vec![
            EnsembleComponent { weight: 0.5, u: UnitVector::S1, v: UnitVector::S1, law: PairLaw::Product },
            EnsembleComponent { weight: 0.5, u: UnitVector::S2, v: UnitVector::S2, law: PairLaw::Table(biased) },
        ])
        .unwrap();
        let settings = [(UnitVector::S3, UnitVector::S3), (UnitVector::S1, UnitVector::S3)];
        let report = check_marginals(&ens, &settings).unwrap();
        assert!(!report.passed);
        // Unbiased marginal would be 0.5 for the second component at a = S3; table gives 0.7.
        assert_abs_diff_eq!(report.max_deviation, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn inadmissible_component_propagates() {
        let law: CorrelationFn = Arc::new(|_, _, _, _| 1.0);
        let ens = PureEnsemble::new(vec![EnsembleComponent {
            weight: 1.0,
            u: UnitVector::S3,
            v: UnitVector::S3,
            law: PairLaw::Correlation(law),
        }])
        .unwrap();
        let err = check_marginals(&ens, &[(UnitVector::S3, UnitVector::S3.neg())]).unwrap_err();
        assert!(matches!(err, Error::ConstraintViolation { .. }));
    }

    #[test]
    fn ensemble_weights_validated() {
        assert!(PureEnsemble::product(&[(0.5, UnitVector::S1, UnitVector::S1)]).is_err());
        assert!(PureEnsemble::product(&[(1.5, UnitVector::S1, UnitVector::S1), (-0.5, UnitVector::S1, UnitVector::S1)]).is_err());
        assert!(PureEnsemble::new(vec![]).is_err());
    }

    #[test]
    fn trivially_feasible_when_everything_orthogonal() {
        let pairs = [(UnitVector::S1, UnitVector::S2)];
        assert!(explicit_model_feasible(&UnitVector::S3, &UnitVector::S3, &pairs));
    }

    #[test]
    fn single_setting_construction_is_feasible() {
        let frames = default_frames();
        let (u, w) = single_setting_construction(&frames);
        assert_abs_diff_eq!(u.dot(&frames.0.perp()), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.dot(&frames.1.perp()), 0.0, epsilon = 1e-15);
        for i in 0..50 {
            let phi = std::f64::consts::PI * i as f64 / 49.0;
            let s1 = build_schedule(&frames.0, 1, 1, phi).unwrap();
            let s2 = build_schedule(&frames.1, 2, 1, phi).unwrap();
            let pairs = measured_pairs(&[&s1, &s2]);
            assert!(explicit_model_feasible(&u, &w, &pairs), "phi = {phi}");
        }
    }

    #[test]
    fn both_condition_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut feasible = 0;
        for _ in 0..20_000 {
            let u = UnitVector::random(&mut rng);
            let w = UnitVector::random(&mut rng);
            let a = UnitVector::random(&mut rng);
            // Bias b towards a so both outcomes show up.
            let b = if rng.random_bool(0.5) { a } else { UnitVector::random(&mut rng) };
            let pairs = [(a, b)];
            let f = explicit_model_feasible(&u, &w, &pairs);
            assert_eq!(f, explicit_model_feasible_mirrored(&u, &w, &pairs));
            feasible += f as usize;
        }
        assert!(feasible > 0);
    }

    #[test]
    fn grid_has_expected_size() {
        assert_eq!(sphere_grid(1.0).unwrap().len(), 179 * 360 + 2);
        assert_eq!(sphere_grid(90.0).unwrap().len(), 6);
        assert!(sphere_grid(0.0).is_err());
    }

    #[test]
    fn grid_search_finds_single_setting_model() {
        let frames = default_frames();
        let phi = 15f64.to_radians();
        let s1 = build_schedule(&frames.0, 1, 1, phi).unwrap();
        let s2 = build_schedule(&frames.1, 2, 1, phi).unwrap();
        let pairs = measured_pairs(&[&s1, &s2]);
        let found = search_explicit_model(&pairs, 10.0, 0.05).unwrap();
        let (u, w) = found.feasible.expect("±S1 lies on the grid");
        assert!(explicit_model_feasible(&u, &w, &pairs));
        assert!(found.best_margin <= PROBABILITY_TOL);
    }

    #[test]
    fn pruned_search_agrees_with_brute_force() {
        let frames = default_frames();
        let phi = 15f64.to_radians();
        let s1 = build_schedule(&frames.0, 1, 2, phi).unwrap();
        let s2 = build_schedule(&frames.1, 2, 2, phi).unwrap();
        let pairs = measured_pairs(&[&s1, &s2]);
        let grid = sphere_grid(10.0).unwrap();
        let brute = grid
            .iter()
            .flat_map(|u| grid.iter().map(move |w| (u, w)))
            .map(|(u, w)| explicit_model_margin(u, w, &pairs))
            .fold(f64::INFINITY, f64::min);
        let pruned = search_explicit_model(&pairs, 10.0, 10.0).unwrap();
        assert!(pruned.margin_exact);
        assert_abs_diff_eq!(pruned.best_margin, brute, epsilon = 1e-15);
        assert!(pruned.feasible.is_none());
    }
}
