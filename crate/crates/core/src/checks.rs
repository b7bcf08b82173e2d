//! Randomized property suites behind `leggett check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::inequality::{discrete_average, l_n, u_coefficient};
use crate::leggett::{
    admissible_c_range, explicit_model_feasible, leggett_outcomes, measured_pairs,
    search_explicit_model, single_setting_construction, PureEnsemble,
};
use crate::quantum::Outcome;
use crate::sphere::{build_schedule, default_frames, UnitVector};

const MARGINAL_ROUNDING: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub trials: usize,
    pub failures: usize,
    /// Suite-specific figure of merit (worst slack, largest deviation, ...).
    pub worst: f64,
    pub detail: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// `(1/N) Σ |(R_N^k c)·w| ≥ u_N` and the `sin ξ + N u_N cos ξ` identity.
pub fn lemma_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst_slack = f64::INFINITY;
    let mut worst_identity = 0.0f64;
    for _ in 0..trials {
        let w = UnitVector::random(&mut rng);
        let c = UnitVector::random(&mut rng);
        let n = rng.random_range(1..=16usize);
        let d = discrete_average(&w, &c, n)?;
        let u = u_coefficient(n)?;
        let identity = (d.xi.sin() + n as f64 * u * d.xi.cos()) / n as f64;
        let slack = d.value - u;
        let gap = (d.value - identity).abs();
        worst_slack = worst_slack.min(slack);
        worst_identity = worst_identity.max(gap);
        if slack < -1e-12 || gap > 1e-12 {
            failures += 1;
        }
    }
    Ok(SuiteReport {
        name: "lemma",
        trials,
        failures,
        worst: worst_slack,
        detail: format!(
            "min(average - u_N) = {worst_slack:.3e}, max identity gap = {worst_identity:.3e}"
        ),
    })
}

/// Positivity at both ends of the admissible range, negativity just beyond
/// it, and marginals that ignore `C`.
pub fn admissible_range_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst_entry = f64::INFINITY;
    let mut worst_marginal = 0.0f64;
    for _ in 0..trials {
        let [u, v, a, b] = [(); 4].map(|_| UnitVector::random(&mut rng));
        let (lo, hi) = admissible_c_range(&u, &v, &a, &b);
        let expect = [(1.0 + a.dot(&u)) / 2.0, (1.0 + b.dot(&v)) / 2.0];
        let mut ok = true;
        for c in [lo, hi, lo + (hi - lo) * rng.random::<f64>()] {
            match leggett_outcomes(&u, &v, &a, &b, c) {
                Ok(t) => {
                    worst_entry = worst_entry.min(t.min_entry());
                    let m = [t.marginal_a(Outcome::Plus), t.marginal_b(Outcome::Plus)];
                    for (x, y) in m.iter().zip(expect) {
                        worst_marginal = worst_marginal.max((x - y).abs());
                    }
                }
                Err(_) => ok = false,
            }
        }
        if leggett_outcomes(&u, &v, &a, &b, hi + 1e-6).is_ok()
            || leggett_outcomes(&u, &v, &a, &b, lo - 1e-6).is_ok()
        {
            ok = false;
        }
        failures += usize::from(!ok);
    }
    // Marginals are C-free algebraically; allow a few ulps of rounding.
    if worst_marginal > MARGINAL_ROUNDING {
        failures += 1;
    }
    Ok(SuiteReport {
        name: "leggett-range",
        trials,
        failures,
        worst: worst_entry,
        detail: format!(
            "min entry at range boundaries = {worst_entry:.3e}, max marginal deviation = {worst_marginal:.3e}"
        ),
    })
}

/// Random product-state ensembles never exceed the bound.
pub fn local_mixture_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = default_frames();
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let k = rng.random_range(1..=4usize);
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let parts: Vec<_> = raw
            .iter()
            .map(|w| (w / total, UnitVector::random(&mut rng), UnitVector::random(&mut rng)))
            .collect();
        let ens = match PureEnsemble::product(&parts) {
            Ok(e) => e,
            // Renormalized weights can miss 1 by an ulp or two.
            Err(_) => continue,
        };
        let rotated = (
            frames.0.with_seed_rotated(rng.random_range(0.0..std::f64::consts::TAU)),
            frames.1.with_seed_rotated(rng.random_range(0.0..std::f64::consts::TAU)),
        );
        let n = rng.random_range(1..=5usize);
        let phi = rng.random_range(0.0..std::f64::consts::PI);
        let r = l_n(&ens, &rotated, n, phi)?;
        worst = worst.max(r.margin());
        if r.margin() > 1e-12 {
            failures += 1;
        }
    }
    Ok(SuiteReport {
        name: "local-mixtures",
        trials,
        failures,
        worst,
        detail: format!("max(L - bound) = {worst:.3e}"),
    })
}

/// The single-setting construction is feasible for every `φ`; the
/// two-setting default schedule at 15° has no feasible grid point.
pub fn explicit_model_suite(phi_points: usize, grid_step_deg: f64) -> Result<SuiteReport> {
    let frames = default_frames();
    let (u, v) = single_setting_construction(&frames);
    let mut failures = 0;
    for i in 0..phi_points {
        let phi = std::f64::consts::PI * i as f64 / (phi_points.max(2) - 1) as f64;
        let s1 = build_schedule(&frames.0, 1, 1, phi)?;
        let s2 = build_schedule(&frames.1, 2, 1, phi)?;
        if !explicit_model_feasible(&u, &v, &measured_pairs(&[&s1, &s2])) {
            failures += 1;
        }
    }
    let phi = 15f64.to_radians();
    let s1 = build_schedule(&frames.0, 1, 2, phi)?;
    let s2 = build_schedule(&frames.1, 2, 2, phi)?;
    let search = search_explicit_model(&measured_pairs(&[&s1, &s2]), grid_step_deg, 0.05)?;
    if search.feasible.is_some() {
        failures += 1;
    }
    Ok(SuiteReport {
        name: "explicit-model",
        trials: phi_points + search.grid_points * search.grid_points,
        failures,
        worst: search.best_margin,
        detail: format!(
            "N=1 construction u = {u} feasible on {}/{phi_points} angles; N=2 at 15°: {} over {}² grid points, best margin {}{:.4}",
            phi_points - failures.min(phi_points),
            if search.feasible.is_some() { "FEASIBLE" } else { "infeasible" },
            search.grid_points,
            if search.margin_exact { "" } else { ">= " },
            search.best_margin,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_small_budgets() {
        assert!(lemma_suite(2000, 1).unwrap().passed());
        assert!(admissible_range_suite(2000, 2).unwrap().passed());
        assert!(local_mixture_suite(200, 3).unwrap().passed());
        let r = explicit_model_suite(10, 5.0).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.worst > 0.0);
    }
}
