//! Monte Carlo model of the photon-counting experiment.
//!
//! Each correlation coefficient is measured from four coincidence counts
//! `n_{±a,±b}`, one per polarizer sign setting, acquired for a fixed
//! integration time. Counts are Poissonian with mean
//! `pair_rate · P(±, ±) · T + accidental_rate · T`. Correlations are estimated
//! as `(n_ab + n_-a-b − n_-ab − n_a-b) / Σ n` and the uncertainty is propagated
//! assuming independent Poisson fluctuations on every count.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::inequality::{combine, nlv_bound, schedules, Averaging, InequalityReport};
use crate::quantum::{CorrelationSource, CorrelationTensor, Outcome, TwoQubitState};
use crate::sphere::{default_frames, PlaneFrame, Theta, UnitVector};

/// Pair rate inferred from 930 s⁻¹ coincidences at orthogonal polarizers,
/// where the singlet gives `P(+,+) = 1/2`.
pub const DEFAULT_PAIR_RATE: f64 = 1860.0;
pub const DEFAULT_ACCIDENTAL_RATE: f64 = 0.41;
pub const DEFAULT_INTEGRATION_TIME: f64 = 4.0;
/// Visibilities in the H/V, ±45° and circular bases.
pub const DEFAULT_VISIBILITIES: (f64, f64, f64) = (0.995, 0.990, 0.982);
pub const DEFAULT_SEED: u64 = 20_080_124;

/// Sign-setting order of one quad: `(+a,+b), (−a,−b), (−a,+b), (+a,−b)`.
pub const SIGN_ORDER: [(Outcome, Outcome); 4] = [
    (Outcome::Plus, Outcome::Plus),
    (Outcome::Minus, Outcome::Minus),
    (Outcome::Minus, Outcome::Plus),
    (Outcome::Plus, Outcome::Minus),
];

/// Description of the emitted two-photon state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StateSpec {
    Singlet,
    MaximallyMixed,
    Werner(f64),
    ColoredNoise(f64),
    BellDiagonal(f64, f64, f64),
    /// Singlet-like correlation tensor `diag(-V1, -V2, -V3)` taken directly
    /// from basis visibilities. Not required to be a positive operator.
    Visibilities(f64, f64, f64),
}

impl StateSpec {
    pub fn build(&self) -> Result<Source> {
        Ok(match *self {
            StateSpec::Singlet => Source::State(TwoQubitState::singlet()),
            StateSpec::MaximallyMixed => Source::State(TwoQubitState::maximally_mixed()),
            StateSpec::Werner(v) => Source::State(TwoQubitState::werner(v)?),
            StateSpec::ColoredNoise(v) => Source::State(TwoQubitState::colored_noise(v)?),
            StateSpec::BellDiagonal(t1, t2, t3) => {
                Source::State(TwoQubitState::bell_diagonal(t1, t2, t3)?)
            }
            StateSpec::Visibilities(v1, v2, v3) => {
                Source::Tensor(CorrelationTensor::from_visibilities(v1, v2, v3)?)
            }
        })
    }
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpec::Singlet => f.write_str("singlet"),
            StateSpec::MaximallyMixed => f.write_str("mixed"),
            StateSpec::Werner(v) => write!(f, "werner:{v}"),
            StateSpec::ColoredNoise(v) => write!(f, "colored:{v}"),
            StateSpec::BellDiagonal(a, b, c) => write!(f, "bell_diagonal:{a},{b},{c}"),
            StateSpec::Visibilities(a, b, c) => write!(f, "visibilities:{a},{b},{c}"),
        }
    }
}

pub(crate) fn parse_floats<const K: usize>(text: &str) -> Result<[f64; K]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != K {
        return Err(invalid(format!("expected {K} comma-separated numbers, got '{text}'")));
    }
    let mut out = [0.0; K];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p
            .parse()
            .map_err(|_| invalid(format!("'{p}' is not a number")))?;
    }
    Ok(out)
}

impl FromStr for StateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (s, None),
        };
        let spec = match (name, args) {
            ("singlet", None) => StateSpec::Singlet,
            ("mixed", None) => StateSpec::MaximallyMixed,
            ("werner", Some(a)) => StateSpec::Werner(parse_floats::<1>(a)?[0]),
            ("colored", Some(a)) => StateSpec::ColoredNoise(parse_floats::<1>(a)?[0]),
            ("bell_diagonal", Some(a)) => {
                let [x, y, z] = parse_floats(a)?;
                StateSpec::BellDiagonal(x, y, z)
            }
            ("visibilities", Some(a)) => {
                let [x, y, z] = parse_floats(a)?;
                StateSpec::Visibilities(x, y, z)
            }
            _ => {
                return Err(invalid(format!(
                    "unknown state '{s}' (expected singlet, mixed, werner:V, colored:V, \
                     bell_diagonal:t1,t2,t3 or visibilities:V1,V2,V3)"
                )))
            }
        };
        spec.build()?;
        Ok(spec)
    }
}

/// A built state model.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    State(TwoQubitState),
    Tensor(CorrelationTensor),
}

impl CorrelationSource for Source {
    fn probability(
        &self,
        a: &UnitVector,
        b: &UnitVector,
        r_a: Outcome,
        r_b: Outcome,
    ) -> Result<f64> {
        match self {
            Source::State(s) => s.probability(a, b, r_a, r_b),
            Source::Tensor(t) => t.probability(a, b, r_a, r_b),
        }
    }

    fn correlation(&self, a: &UnitVector, b: &UnitVector) -> Result<f64> {
        match self {
            Source::State(s) => s.correlation(a, b),
            Source::Tensor(t) => t.correlation(a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// Detected pairs per second.
    pub pair_rate: f64,
    /// Accidental coincidences per second, per sign setting.
    pub accidental_rate: f64,
    /// Seconds per sign setting.
    pub integration_time: f64,
    pub state: StateSpec,
    pub frames: (PlaneFrame, PlaneFrame),
    pub rng_seed: u64,
    pub subtract_accidentals: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let (v1, v2, v3) = DEFAULT_VISIBILITIES;
        Self {
            pair_rate: DEFAULT_PAIR_RATE,
            accidental_rate: DEFAULT_ACCIDENTAL_RATE,
            integration_time: DEFAULT_INTEGRATION_TIME,
            state: StateSpec::Visibilities(v1, v2, v3),
            frames: default_frames(),
            rng_seed: DEFAULT_SEED,
            subtract_accidentals: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pair_rate > 0.0 && self.pair_rate.is_finite()) {
            return Err(invalid(format!("pair_rate must be positive, got {}", self.pair_rate)));
        }
        if !(self.accidental_rate >= 0.0 && self.accidental_rate.is_finite()) {
            return Err(invalid(format!(
                "accidental_rate must be non-negative, got {}",
                self.accidental_rate
            )));
        }
        if !(self.integration_time > 0.0 && self.integration_time.is_finite()) {
            return Err(invalid(format!(
                "integration_time must be positive, got {}",
                self.integration_time
            )));
        }
        crate::inequality::check_frames(&self.frames)?;
        self.state.build().map(|_| ())
    }
}

/// The four coincidence counts of one correlation measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountQuad {
    pub n_ab: u64,
    pub n_nanb: u64,
    pub n_nab: u64,
    pub n_anb: u64,
    pub a: UnitVector,
    pub b: UnitVector,
    pub duration: f64,
}

impl CountQuad {
    /// Counts in [`SIGN_ORDER`].
    pub fn counts(&self) -> [u64; 4] {
        [self.n_ab, self.n_nanb, self.n_nab, self.n_anb]
    }

    pub fn total(&self) -> u64 {
        self.counts().iter().sum()
    }
}

/// Accidental-corrected counts; variances still come from the raw quad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrectedQuad {
    pub values: [f64; 4],
    pub raw: CountQuad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub c_hat: f64,
    pub sigma: f64,
}

/// `c = D/S` with `Var c = [(1−c)²(n_ab + n_-a-b) + (1+c)²(n_-ab + n_a-b)] / S²`,
/// evaluated with `values` for the estimate and `variances` for the spread.
fn estimate(values: [f64; 4], variances: [f64; 4]) -> Option<CorrelationEstimate> {
    let same = values[0] + values[1];
    let diff = values[2] + values[3];
    let total = same + diff;
    if total <= 0.0 {
        return None;
    }
    let c_hat = (same - diff) / total;
    let var = ((1.0 - c_hat).powi(2) * (variances[0] + variances[1])
        + (1.0 + c_hat).powi(2) * (variances[2] + variances[3]))
        / (total * total);
    Some(CorrelationEstimate {
        c_hat,
        sigma: var.sqrt(),
    })
}

fn degenerate(a: &UnitVector, b: &UnitVector) -> Error {
    Error::DegenerateData {
        setting: format!("a = {a}, b = {b}"),
        reason: "no coincidences in any of the four sign settings".into(),
    }
}

/// Correlation estimate and its Poisson-propagated uncertainty.
pub fn estimate_c(quad: &CountQuad) -> Result<CorrelationEstimate> {
    let raw = quad.counts().map(|n| n as f64);
    estimate(raw, raw).ok_or_else(|| degenerate(&quad.a, &quad.b))
}

/// Removes `rate · duration` from every count, flooring at zero.
pub fn subtract_accidentals(quad: &CountQuad, rate: f64) -> Result<CorrectedQuad> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(invalid(format!("accidental rate must be non-negative, got {rate}")));
    }
    let expected = rate * quad.duration;
    Ok(CorrectedQuad {
        values: quad.counts().map(|n| (n as f64 - expected).max(0.0)),
        raw: *quad,
    })
}

impl CorrectedQuad {
    pub fn estimate(&self) -> Result<CorrelationEstimate> {
        estimate(self.values, self.raw.counts().map(|n| n as f64))
            .ok_or_else(|| degenerate(&self.raw.a, &self.raw.b))
    }
}

fn poisson<R: rand::Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive mean below the sampler limit");
    d.sample(rng) as u64
}

/// Draws the four counts for settings `(a, b)` in [`SIGN_ORDER`].
pub fn sample_quad<S, R>(
    config: &ExperimentConfig,
    source: &S,
    a: &UnitVector,
    b: &UnitVector,
    rng: &mut R,
) -> Result<CountQuad>
where
    S: CorrelationSource + ?Sized,
    R: rand::Rng + ?Sized,
{
    let t = config.integration_time;
    let mut counts = [0u64; 4];
    for (slot, (r_a, r_b)) in counts.iter_mut().zip(SIGN_ORDER) {
        let p = source.probability(a, b, r_a, r_b)?;
        let mean = config.pair_rate * p * t + config.accidental_rate * t;
        *slot = poisson(mean, rng);
    }
    Ok(CountQuad {
        n_ab: counts[0],
        n_nanb: counts[1],
        n_nab: counts[2],
        n_anb: counts[3],
        a: *a,
        b: *b,
        duration: t,
    })
}

/// One measured correlation within a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadRecord {
    pub plane: u8,
    pub k: usize,
    pub theta: Theta,
    pub quad: CountQuad,
    pub estimate: CorrelationEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedRun {
    pub seed: u64,
    pub report: InequalityReport,
    pub quads: Vec<QuadRecord>,
}

/// A configuration with its state model built once.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    source: Source,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let source = config.state.build()?;
        Ok(Self { config, source })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    /// Simulates the `4N` correlation measurements for `(N, φ)` with the
    /// given seed. Draw order: plane 1 then 2, `k` ascending, `θ = 0` then
    /// `θ = φ`, signs in [`SIGN_ORDER`].
    pub fn run_seeded(&self, n: usize, phi: f64, seed: u64) -> Result<SimulatedRun> {
        let plans = schedules(&self.config.frames, n, phi)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut quads = Vec::with_capacity(4 * n);
        let mut e_values = [[0.0; 2]; 2];
        let mut variance = 0.0;
        for (j, plan) in plans.iter().enumerate() {
            for (k, entry) in plan.entries.iter().enumerate() {
                for (ti, theta) in Theta::BOTH.into_iter().enumerate() {
                    let b = entry.bob(theta);
                    let quad = sample_quad(&self.config, &self.source, &entry.alice, &b, &mut rng)?;
                    let est = if self.config.subtract_accidentals {
                        subtract_accidentals(&quad, self.config.accidental_rate)?.estimate()
                    } else {
                        estimate_c(&quad)
                    }
                    .map_err(|e| match e {
                        Error::DegenerateData { setting, reason } => Error::DegenerateData {
                            setting: format!(
                                "plane {}, k = {k}, theta = {theta:?} ({setting})",
                                plan.plane_index
                            ),
                            reason,
                        },
                        other => other,
                    })?;
                    e_values[j][ti] += est.c_hat / n as f64;
                    variance += est.sigma * est.sigma / (n * n) as f64;
                    quads.push(QuadRecord {
                        plane: plan.plane_index,
                        k,
                        theta,
                        quad,
                        estimate: est,
                    });
                }
            }
        }
        let report = InequalityReport {
            n: Averaging::Finite(n),
            phi,
            l_value: combine(&e_values),
            bound: nlv_bound(n, phi)?,
            sigma: 0.0,
            violation_sigmas: None,
            e_values,
            frames: self.config.frames,
        }
        .with_sigma(variance.sqrt());
        Ok(SimulatedRun {
            seed,
            report,
            quads,
        })
    }

    /// Seeds `derive_seed(config seed, [N, run])` for runs `0..runs`, results
    /// in run order.
    pub fn run_many(&self, n: usize, phi: f64, runs: usize) -> Vec<(u64, Result<InequalityReport>)> {
        (0..runs)
            .into_par_iter()
            .map(|run| {
                let seed = derive_seed(self.config.rng_seed, &[n as u64, run as u64]);
                (seed, self.run_seeded(n, phi, seed).map(|r| r.report))
            })
            .collect()
    }
}

/// Single run with the configuration's own seed.
pub fn run_experiment(config: &ExperimentConfig, n: usize, phi: f64) -> Result<InequalityReport> {
    Ok(Experiment::new(config.clone())?
        .run_seeded(n, phi, config.rng_seed)?
        .report)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for a master seed and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// Aggregate of independent runs at one `(N, φ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateSummary {
    pub n: usize,
    pub phi: f64,
    pub runs: usize,
    pub failed_runs: usize,
    pub bound: f64,
    pub mean_l: f64,
    /// Sample standard deviation of `L` across runs.
    pub std_l: f64,
    pub mean_sigma: f64,
    /// `std_l / mean_sigma`; near 1 when the propagated errors are right.
    pub sigma_ratio: f64,
    pub mean_violation_sigmas: f64,
    pub min_violation_sigmas: f64,
    pub max_violation_sigmas: f64,
}

/// Summary statistics over successful runs; `None` with fewer than two.
pub fn summarize(n: usize, phi: f64, results: &[(u64, Result<InequalityReport>)]) -> Option<ReplicateSummary> {
    let ok: Vec<&InequalityReport> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    if ok.len() < 2 {
        return None;
    }
    let count = ok.len() as f64;
    let mean_l = ok.iter().map(|r| r.l_value).sum::<f64>() / count;
    let std_l = (ok.iter().map(|r| (r.l_value - mean_l).powi(2)).sum::<f64>() / (count - 1.0)).sqrt();
    let mean_sigma = ok.iter().map(|r| r.sigma).sum::<f64>() / count;
    let violations: Vec<f64> = ok.iter().filter_map(|r| r.violation_sigmas).collect();
    let (mean_v, min_v, max_v) = if violations.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            violations.iter().sum::<f64>() / violations.len() as f64,
            violations.iter().copied().fold(f64::INFINITY, f64::min),
            violations.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    Some(ReplicateSummary {
        n,
        phi,
        runs: results.len(),
        failed_runs: results.len() - ok.len(),
        bound: ok[0].bound,
        mean_l,
        std_l,
        mean_sigma,
        sigma_ratio: std_l / mean_sigma,
        mean_violation_sigmas: mean_v,
        min_violation_sigmas: min_v,
        max_violation_sigmas: max_v,
    })
}

/// Runs `runs ≥ 2` seeded experiments and summarizes them.
pub fn replicate(config: &ExperimentConfig, n: usize, phi: f64, runs: usize) -> Result<ReplicateSummary> {
    if runs < 2 {
        return Err(invalid("replicate needs at least two runs"));
    }
    let exp = Experiment::new(config.clone())?;
    let results = exp.run_many(n, phi, runs);
    summarize(n, phi, &results).ok_or_else(|| {
        results
            .into_iter()
            .find_map(|(_, r)| r.err())
            .unwrap_or_else(|| invalid("fewer than two successful runs"))
    })
}
