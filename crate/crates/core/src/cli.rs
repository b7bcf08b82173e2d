//! `leggett` command-line front end.
//!
//! Every subcommand writes CSV (a `#`-commented manifest block followed by a
//! header row and data rows) or JSON (`{"manifest": .., "data": ..}`). The
//! data section depends only on the command, configuration and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::checks::{self, SuiteReport};
use crate::error::Error;
use crate::inequality::{
    continuum_l, l_n, max_violation, optimal_phi, Averaging, InequalityReport,
};
use crate::quantum::singlet_l;
use crate::simulate::{
    derive_seed, parse_floats, summarize, Experiment, ExperimentConfig, ReplicateSummary, StateSpec,
};
use crate::sphere::{PlaneFrame, UnitVector};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_CHECK_FAILED: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;

/// Directions averaged by the `N = inf` rows of `predict`.
const CONTINUUM_GRID: usize = 360;

#[derive(Debug, Parser)]
#[command(name = "leggett", version, about = "Finite-setting Leggett inequality toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// NLV bounds and the singlet prediction over an (N, φ) grid.
    Bounds(BoundsArgs),
    /// Analytic L_N of a state, with the location of its largest violation.
    Predict(PredictArgs),
    /// Simulated counting runs at fixed (N, φ).
    Simulate(SimulateArgs),
    /// Simulation summaries and analytic curves over a φ range.
    Sweep(SweepArgs),
    /// Randomized property suites.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write to a file instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhiArgs {
    /// Comma-separated angles in degrees.
    #[arg(long, conflicts_with = "phi_range")]
    pub phi: Option<String>,
    /// Inclusive range `START:END` in degrees, sampled every `--step`.
    #[arg(long)]
    pub phi_range: Option<String>,
    #[arg(long, default_value_t = 2.5)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Comma-separated N values; `inf` adds the continuum bound.
    #[arg(long, default_value = "2,3,4")]
    pub n_list: String,
    #[command(flatten)]
    pub phi: PhiArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// State, e.g. `singlet`, `werner:0.96`, `visibilities:0.995,0.99,0.982`.
    #[arg(long)]
    pub state: Option<String>,
    #[arg(long, default_value = "2,3,4")]
    pub n_list: String,
    #[command(flatten)]
    pub phi: PhiArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, default_value = "4")]
    pub n_list: String,
    #[command(flatten)]
    pub phi: PhiArgs,
    #[arg(long)]
    pub subtract_accidentals: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    #[arg(long, default_value = "2,3,4")]
    pub n_list: String,
    #[command(flatten)]
    pub phi: PhiArgs,
    #[arg(long)]
    pub subtract_accidentals: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Lemma,
    Leggett,
    All,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Angular resolution of the explicit-model grid search, degrees.
    #[arg(long, default_value_t = 1.0)]
    pub grid_step: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{}", config_location(.path, .line, .field, .message))]
    Config {
        path: Option<PathBuf>,
        line: Option<usize>,
        field: String,
        message: String,
    },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("{0}")]
    Model(#[from] Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn config_location(
    path: &Option<PathBuf>,
    line: &Option<usize>,
    field: &str,
    message: &str,
) -> String {
    let mut s = String::from("config error");
    if let Some(p) = path {
        let _ = write!(s, " in {}", p.display());
    }
    if let Some(l) = line {
        let _ = write!(s, " at line {l}");
    }
    let _ = write!(s, " ({field}): {message}");
    s
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Degenerate(_) | CliError::Model(Error::DegenerateData { .. }) => EXIT_DEGENERATE,
            _ => EXIT_USAGE,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Finished command output and the exit status it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub text: String,
    pub exit_code: u8,
}

impl Rendered {
    /// Lines outside the manifest block (CSV), or the `data` member (JSON).
    pub fn data_section(&self) -> String {
        if let Ok(v) = serde_json::from_str::<Value>(&self.text) {
            return v["data"].to_string();
        }
        self.text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

// ---------------------------------------------------------------------------
// configuration file

const CONFIG_KEYS: [&str; 11] = [
    "pair_rate",
    "accidental_rate",
    "integration_time",
    "state",
    "visibilities",
    "seed",
    "subtract_accidentals",
    "plane1_normal",
    "plane1_seed",
    "plane2_normal",
    "plane2_seed",
];

fn parse_vector(text: &str) -> crate::Result<UnitVector> {
    let [x, y, z] = parse_floats(text)?;
    UnitVector::normalized(x, y, z)
}

/// Parses the flat `key = value` configuration format. Blank lines and `#`
/// comments are ignored; unspecified keys keep their defaults.
pub fn parse_config(text: &str, path: Option<&Path>) -> CliResult<ExperimentConfig> {
    let err = |line: Option<usize>, field: &str, message: String| CliError::Config {
        path: path.map(Path::to_path_buf),
        line,
        field: field.to_string(),
        message,
    };
    let mut config = ExperimentConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    let mut state_line = None;
    let mut vis_line = None;
    let mut normals = [config.frames.0.normal(), config.frames.1.normal()];
    let mut seeds = [config.frames.0.seed(), config.frames.1.seed()];
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(Some(lineno), line, "expected `key = value`".into()))?;
        let Some(key) = CONFIG_KEYS.iter().copied().find(|k| *k == key) else {
            return Err(err(Some(lineno), key, format!("unknown key (known: {})", CONFIG_KEYS.join(", "))));
        };
        if seen.contains(&key) {
            return Err(err(Some(lineno), key, "duplicate key".into()));
        }
        seen.push(key);
        let bad = |e: String| err(Some(lineno), key, e);
        let number = |v: &str| -> CliResult<f64> {
            v.parse::<f64>().map_err(|_| bad(format!("'{v}' is not a number")))
        };
        match key {
            "pair_rate" => config.pair_rate = number(value)?,
            "accidental_rate" => config.accidental_rate = number(value)?,
            "integration_time" => config.integration_time = number(value)?,
            "state" => {
                config.state = value.parse().map_err(|e: Error| bad(e.to_string()))?;
                state_line = Some(lineno);
            }
            "visibilities" => {
                let [a, b, c] = parse_floats(value).map_err(|e| bad(e.to_string()))?;
                config.state = StateSpec::Visibilities(a, b, c);
                config.state.build().map_err(|e| bad(e.to_string()))?;
                vis_line = Some(lineno);
            }
            "seed" => {
                config.rng_seed = value
                    .parse()
                    .map_err(|_| bad(format!("'{value}' is not an unsigned 64-bit integer")))?
            }
            "subtract_accidentals" => {
                config.subtract_accidentals = match value {
                    "true" | "on" | "yes" | "1" => true,
                    "false" | "off" | "no" | "0" => false,
                    _ => return Err(bad(format!("'{value}' is not a boolean"))),
                }
            }
            "plane1_normal" => normals[0] = parse_vector(value).map_err(|e| bad(e.to_string()))?,
            "plane1_seed" => seeds[0] = parse_vector(value).map_err(|e| bad(e.to_string()))?,
            "plane2_normal" => normals[1] = parse_vector(value).map_err(|e| bad(e.to_string()))?,
            "plane2_seed" => seeds[1] = parse_vector(value).map_err(|e| bad(e.to_string()))?,
            _ => unreachable!("key list is exhaustive"),
        }
    }
    if let (Some(_), Some(v)) = (state_line, vis_line) {
        return Err(err(Some(v), "visibilities", "give either `state` or `visibilities`, not both".into()));
    }
    let frame = |j: usize| {
        PlaneFrame::new(normals[j], seeds[j])
            .map_err(|e| err(None, if j == 0 { "plane1_seed" } else { "plane2_seed" }, e.to_string()))
    };
    config.frames = (frame(0)?, frame(1)?);
    config
        .validate()
        .map_err(|e| err(None, "config", e.to_string()))?;
    Ok(config)
}

fn fmt_vector(v: &UnitVector) -> String {
    format!("{}, {}, {}", v.x(), v.y(), v.z())
}

/// Renders a configuration that [`parse_config`] reads back unchanged.
pub fn render_config(config: &ExperimentConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# default pair_rate assumes P(+,+) = 1/2 at 930 coincidences/s");
    let _ = writeln!(s, "pair_rate = {}", config.pair_rate);
    let _ = writeln!(s, "accidental_rate = {}", config.accidental_rate);
    let _ = writeln!(s, "integration_time = {}", config.integration_time);
    match config.state {
        StateSpec::Visibilities(a, b, c) => {
            let _ = writeln!(s, "visibilities = {a}, {b}, {c}");
        }
        other => {
            let _ = writeln!(s, "state = {other}");
        }
    }
    let _ = writeln!(s, "seed = {}", config.rng_seed);
    let _ = writeln!(s, "subtract_accidentals = {}", config.subtract_accidentals);
    let _ = writeln!(s, "plane1_normal = {}", fmt_vector(&config.frames.0.normal()));
    let _ = writeln!(s, "plane1_seed = {}", fmt_vector(&config.frames.0.seed()));
    let _ = writeln!(s, "plane2_normal = {}", fmt_vector(&config.frames.1.normal()));
    let _ = writeln!(s, "plane2_seed = {}", fmt_vector(&config.frames.1.seed()));
    s
}

fn load_config(path: Option<&Path>) -> CliResult<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config {
                path: Some(p.to_path_buf()),
                line: None,
                field: "file".into(),
                message: e.to_string(),
            })?;
            parse_config(&text, Some(p))
        }
    }
}

// ---------------------------------------------------------------------------
// argument helpers

fn parse_n_list(text: &str, allow_inf: bool) -> CliResult<Vec<Averaging>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item == "inf" {
            if !allow_inf {
                return Err(usage("N = inf is not available for this command"));
            }
            out.push(Averaging::Continuum);
            continue;
        }
        let n: usize = item
            .parse()
            .map_err(|_| usage(format!("'{item}' in --n-list is not a positive integer")))?;
        if n == 0 {
            return Err(usage("N must be at least 1"));
        }
        out.push(Averaging::Finite(n));
    }
    if out.is_empty() {
        return Err(usage("--n-list is empty"));
    }
    Ok(out)
}

fn finite(ns: &[Averaging]) -> CliResult<Vec<usize>> {
    ns.iter()
        .map(|n| match n {
            Averaging::Finite(n) => Ok(*n),
            Averaging::Continuum => Err(usage("N = inf is not available for this command")),
        })
        .collect()
}

/// Angles in degrees from `--phi` or `--phi-range`/`--step`.
fn parse_phis(args: &PhiArgs, default: &[f64]) -> CliResult<Vec<f64>> {
    if let Some(list) = &args.phi {
        let phis = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| usage(format!("'{s}' in --phi is not a number"))))
            .collect::<CliResult<Vec<_>>>()?;
        if phis.is_empty() {
            return Err(usage("--phi is empty"));
        }
        return Ok(phis);
    }
    if let Some(range) = &args.phi_range {
        let (lo, hi) = range
            .split_once(':')
            .ok_or_else(|| usage("--phi-range must look like START:END"))?;
        let lo: f64 = lo.trim().parse().map_err(|_| usage("bad --phi-range start"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| usage("bad --phi-range end"))?;
        if args.step.is_nan() || args.step <= 0.0 {
            return Err(usage("--step must be positive"));
        }
        if hi < lo {
            return Err(usage("--phi-range end is before its start"));
        }
        let count = ((hi - lo) / args.step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|i| lo + i as f64 * args.step).collect());
    }
    Ok(default.to_vec())
}

fn n_label(n: Averaging) -> String {
    match n {
        Averaging::Finite(n) => n.to_string(),
        Averaging::Continuum => "inf".into(),
    }
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

fn f2(x: f64) -> String {
    format!("{x:.2}")
}

fn opt(x: Option<f64>, digits: usize) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.digits$}"),
        _ => String::new(),
    }
}

// ---------------------------------------------------------------------------
// output assembly

struct Manifest {
    command: String,
    seed: Option<u64>,
    config: Option<ExperimentConfig>,
    columns: Vec<&'static str>,
}

struct Table {
    manifest: Manifest,
    rows: Vec<Vec<String>>,
    json: Value,
}

fn render(table: Table, format: Format) -> String {
    let m = &table.manifest;
    let version = env!("CARGO_PKG_VERSION");
    let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    match format {
        Format::Csv => {
            let mut s = String::new();
            let _ = writeln!(s, "# leggett {version}");
            let _ = writeln!(s, "# command: {}", m.command);
            let _ = writeln!(s, "# timestamp: {timestamp}");
            if let Some(seed) = m.seed {
                let _ = writeln!(s, "# seed: {seed}");
            }
            if let Some(c) = &m.config {
                let _ = writeln!(s, "# config:");
                for line in render_config(c).lines() {
                    let _ = writeln!(s, "#   {line}");
                }
            }
            let _ = writeln!(s, "# columns: {}", m.columns.join(", "));
            let _ = writeln!(s, "{}", m.columns.join(","));
            for row in &table.rows {
                let _ = writeln!(s, "{}", row.join(","));
            }
            s
        }
        Format::Json => {
            let manifest = json!({
                "tool": "leggett",
                "version": version,
                "command": m.command,
                "timestamp": timestamp,
                "seed": m.seed,
                "config": m.config.as_ref().map(render_config),
            });
            let doc = json!({ "manifest": manifest, "data": table.json });
            let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
            s.push('\n');
            s
        }
    }
}

fn report_json(r: &InequalityReport) -> Value {
    json!({
        "N": n_label(r.n),
        "phi_deg": r.phi.to_degrees(),
        "L": r.l_value,
        "bound": r.bound,
        "sigma": r.sigma,
        "violation_sigmas": r.violation_sigmas,
        "e_values": r.e_values,
    })
}

// ---------------------------------------------------------------------------
// subcommands

pub fn cmd_bounds(args: &BoundsArgs, command: &str) -> CliResult<Rendered> {
    let ns = parse_n_list(&args.n_list, true)?;
    let phis = parse_phis(&args.phi, &[12.5, 15.0, 17.5, 20.0])?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &n in &ns {
        let u = n.u()?;
        for &deg in &phis {
            let phi = deg.to_radians();
            let bound = n.bound(phi)?;
            let l = singlet_l(phi);
            rows.push(vec![n_label(n), f2(deg), format!("{u:.7}"), f4(bound), f4(l), f4(l - bound)]);
            records.push(json!({
                "N": n_label(n), "phi_deg": deg, "u_N": u, "bound": bound,
                "singlet_L": l, "singlet_margin": l - bound,
            }));
        }
    }
    let table = Table {
        manifest: Manifest {
            command: command.into(),
            seed: None,
            config: None,
            columns: vec!["N", "phi_deg", "u_N", "bound", "singlet_L", "singlet_minus_bound"],
        },
        rows,
        json: Value::Array(records),
    };
    Ok(Rendered {
        text: render(table, args.out.format),
        exit_code: EXIT_OK,
    })
}

pub fn cmd_predict(args: &PredictArgs, command: &str) -> CliResult<Rendered> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(state) = &args.state {
        config.state = state.parse().map_err(|e: Error| CliError::Config {
            path: None,
            line: None,
            field: "state".into(),
            message: e.to_string(),
        })?;
    }
    let source = config.state.build()?;
    let frames = config.frames;
    let ns = parse_n_list(&args.n_list, true)?;
    let phis = parse_phis(&args.phi, &[15.0])?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut peaks = Vec::new();
    for &n in &ns {
        for &deg in &phis {
            let phi = deg.to_radians();
            let r = match n {
                Averaging::Finite(k) => l_n(&source, &frames, k, phi)?,
                Averaging::Continuum => continuum_l(&source, &frames, phi, CONTINUUM_GRID)?,
            };
            rows.push(vec![
                "point".into(),
                n_label(n),
                f2(deg),
                f4(r.l_value),
                f4(r.bound),
                f4(r.margin()),
                r.violates().to_string(),
            ]);
            points.push(report_json(&r));
        }
        // Peak search: golden section of L − bound over (0°, 45°).
        let (phi, margin) = match n {
            Averaging::Finite(k) => {
                let p = max_violation(&source, &frames, k, 0.01)?;
                (p.phi, p.margin)
            }
            Averaging::Continuum => {
                let (phi, margin) = crate::inequality::golden_section_max(
                    |phi| {
                        continuum_l(&source, &frames, phi, CONTINUUM_GRID)
                            .map(|r| r.margin())
                            .unwrap_or(f64::NEG_INFINITY)
                    },
                    0.0,
                    45f64.to_radians(),
                    0.01f64.to_radians(),
                );
                (phi, margin)
            }
        };
        let region = if margin > 0.0 { "violation" } else { "no violation region" };
        let ideal = optimal_phi(n).ok().map(f64::to_degrees);
        rows.push(vec![
            "peak".into(),
            n_label(n),
            f2(phi.to_degrees()),
            String::new(),
            String::new(),
            f4(margin),
            region.into(),
        ]);
        peaks.push(json!({
            "N": n_label(n), "phi_deg": phi.to_degrees(), "max_margin": margin,
            "violation": margin > 0.0, "singlet_optimum_deg": ideal,
        }));
    }
    let table = Table {
        manifest: Manifest {
            command: command.into(),
            seed: None,
            config: Some(config),
            columns: vec!["record", "N", "phi_deg", "L", "bound", "L_minus_bound", "violates"],
        },
        rows,
        json: json!({ "points": points, "peaks": peaks }),
    };
    Ok(Rendered {
        text: render(table, args.out.format),
        exit_code: EXIT_OK,
    })
}

struct Cell {
    n: usize,
    phi_deg: f64,
    results: Vec<(u64, crate::Result<InequalityReport>)>,
    summary: Option<ReplicateSummary>,
}

/// Runs every `(N, φ)` cell with seeds derived from `(master, N, φ index)`;
/// cells run concurrently, results come back in grid order.
fn run_cells(
    config: &ExperimentConfig,
    ns: &[usize],
    phis: &[f64],
    runs: usize,
) -> CliResult<Vec<Cell>> {
    let grid: Vec<(usize, usize, f64)> = ns
        .iter()
        .flat_map(|&n| phis.iter().enumerate().map(move |(i, &d)| (n, i, d)))
        .collect();
    grid.into_par_iter()
        .map(|(n, idx, deg)| {
            let cell_config = ExperimentConfig {
                rng_seed: derive_seed(config.rng_seed, &[n as u64, idx as u64]),
                ..config.clone()
            };
            let exp = Experiment::new(cell_config)?;
            let results = exp.run_many(n, deg.to_radians(), runs);
            let summary = summarize(n, deg.to_radians(), &results);
            Ok(Cell {
                n,
                phi_deg: deg,
                results,
                summary,
            })
        })
        .collect()
}

fn apply_overrides(config: &mut ExperimentConfig, seed: Option<u64>, subtract: bool) {
    if let Some(seed) = seed {
        config.rng_seed = seed;
    }
    if subtract {
        config.subtract_accidentals = true;
    }
}

pub fn cmd_simulate(args: &SimulateArgs, command: &str) -> CliResult<Rendered> {
    let mut config = load_config(args.config.as_deref())?;
    apply_overrides(&mut config, args.seed, args.subtract_accidentals);
    if args.runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    let ns = finite(&parse_n_list(&args.n_list, false)?)?;
    let phis = parse_phis(&args.phi, &[15.0])?;
    let cells = run_cells(&config, &ns, &phis, args.runs)?;

    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut successes = 0;
    let mut first_error = None;
    for cell in &cells {
        for (run, (seed, res)) in cell.results.iter().enumerate() {
            match res {
                Ok(r) => {
                    successes += 1;
                    rows.push(vec![
                        "run".into(),
                        run.to_string(),
                        seed.to_string(),
                        cell.n.to_string(),
                        f2(cell.phi_deg),
                        f4(r.l_value),
                        f4(r.sigma),
                        f4(r.bound),
                        f4(r.margin()),
                        opt(r.violation_sigmas, 2),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                    ]);
                    let mut j = report_json(r);
                    j["run"] = json!(run);
                    j["seed"] = json!(seed);
                    records.push(j);
                }
                Err(e) => {
                    first_error.get_or_insert_with(|| e.to_string());
                    let msg = e.to_string().replace(',', ";");
                    rows.push(vec![
                        "run".into(),
                        run.to_string(),
                        seed.to_string(),
                        cell.n.to_string(),
                        f2(cell.phi_deg),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        msg,
                    ]);
                    records.push(json!({
                        "run": run, "seed": seed, "N": cell.n.to_string(),
                        "phi_deg": cell.phi_deg, "error": e.to_string(),
                    }));
                }
            }
        }
        if let Some(s) = &cell.summary {
            rows.push(vec![
                "summary".into(),
                String::new(),
                String::new(),
                cell.n.to_string(),
                f2(cell.phi_deg),
                f4(s.mean_l),
                f4(s.mean_sigma),
                f4(s.bound),
                f4(s.mean_l - s.bound),
                f2(s.mean_violation_sigmas),
                f4(s.std_l),
                format!("{:.3}", s.sigma_ratio),
                s.failed_runs.to_string(),
                String::new(),
            ]);
        }
    }
    let summaries: Vec<_> = cells.iter().filter_map(|c| c.summary.clone()).collect();
    let table = Table {
        manifest: Manifest {
            command: command.into(),
            seed: Some(config.rng_seed),
            config: Some(config),
            columns: vec![
                "record",
                "run",
                "seed",
                "N",
                "phi_deg",
                "L_exp",
                "sigma",
                "bound",
                "L_minus_bound",
                "violation_sigmas",
                "std_L",
                "sigma_ratio",
                "failed_runs",
                "error",
            ],
        },
        rows,
        json: json!({ "runs": records, "summaries": summary_json(&summaries) }),
    };
    let text = render(table, args.out.format);
    if successes == 0 {
        return Err(CliError::Degenerate(first_error.unwrap_or_default()));
    }
    Ok(Rendered {
        text,
        exit_code: EXIT_OK,
    })
}

fn summary_json(s: &[ReplicateSummary]) -> Value {
    serde_json::to_value(
        s.iter()
            .map(|s| {
                let mut v = serde_json::to_value(s).expect("serializable");
                v["phi_deg"] = json!(s.phi.to_degrees());
                v
            })
            .collect::<Vec<_>>(),
    )
    .expect("serializable")
}

pub fn cmd_sweep(args: &SweepArgs, command: &str) -> CliResult<Rendered> {
    let mut config = load_config(args.config.as_deref())?;
    apply_overrides(&mut config, args.seed, args.subtract_accidentals);
    let ns = finite(&parse_n_list(&args.n_list, false)?)?;
    let phis = match (&args.phi.phi, &args.phi.phi_range) {
        (None, None) => parse_phis(
            &PhiArgs {
                phi: None,
                phi_range: Some("0:45".into()),
                step: args.phi.step,
            },
            &[],
        )?,
        _ => parse_phis(&args.phi, &[])?,
    };
    let source = config.state.build()?;
    let cells = if args.runs > 0 {
        run_cells(&config, &ns, &phis, args.runs)?
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut any_success = args.runs == 0;
    let mut idx = 0;
    for &n in &ns {
        for &deg in &phis {
            let phi = deg.to_radians();
            let analytic = l_n(&source, &config.frames, n, phi)?;
            let singlet = singlet_l(phi);
            let cell = cells.get(idx);
            idx += 1;
            let summary = cell.and_then(|c| c.summary.as_ref());
            any_success |= cell.is_some_and(|c| c.results.iter().any(|(_, r)| r.is_ok()));
            rows.push(vec![
                n.to_string(),
                f2(deg),
                f4(analytic.bound),
                f4(singlet),
                f4(analytic.l_value),
                f4(analytic.margin()),
                cell.map(|c| c.results.len().to_string()).unwrap_or_else(|| "0".into()),
                opt(summary.map(|s| s.mean_l), 4),
                opt(summary.map(|s| s.std_l), 4),
                opt(summary.map(|s| s.mean_sigma), 4),
                opt(summary.map(|s| s.mean_violation_sigmas), 2),
                summary.map(|s| s.failed_runs.to_string()).unwrap_or_default(),
            ]);
            records.push(json!({
                "N": n, "phi_deg": deg, "bound": analytic.bound, "singlet_L": singlet,
                "model_L": analytic.l_value, "model_margin": analytic.margin(),
                "simulation": summary.map(|s| serde_json::to_value(s).expect("serializable")),
            }));
        }
    }
    let table = Table {
        manifest: Manifest {
            command: command.into(),
            seed: Some(config.rng_seed),
            config: Some(config),
            columns: vec![
                "N",
                "phi_deg",
                "bound",
                "singlet_L",
                "model_L",
                "model_minus_bound",
                "runs",
                "mean_L",
                "std_L",
                "mean_sigma",
                "mean_violation_sigmas",
                "failed_runs",
            ],
        },
        rows,
        json: Value::Array(records),
    };
    let text = render(table, args.out.format);
    if !any_success {
        return Err(CliError::Degenerate("every simulated run failed".into()));
    }
    Ok(Rendered {
        text,
        exit_code: EXIT_OK,
    })
}

pub fn cmd_check(args: &CheckArgs, command: &str) -> CliResult<Rendered> {
    let mut reports: Vec<SuiteReport> = Vec::new();
    if matches!(args.suite, Suite::Lemma | Suite::All) {
        reports.push(checks::lemma_suite(args.trials, args.seed)?);
    }
    if matches!(args.suite, Suite::Leggett | Suite::All) {
        reports.push(checks::admissible_range_suite(args.trials, args.seed.wrapping_add(1))?);
        reports.push(checks::local_mixture_suite((args.trials / 100).max(10), args.seed.wrapping_add(2))?);
        reports.push(checks::explicit_model_suite(50, args.grid_step)?);
    }
    let failed = reports.iter().any(|r| !r.passed());
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                r.name.to_string(),
                if r.passed() { "pass" } else { "FAIL" }.into(),
                r.trials.to_string(),
                r.failures.to_string(),
                format!("{:.3e}", r.worst),
                r.detail.replace(',', ";"),
            ]
        })
        .collect();
    let table = Table {
        manifest: Manifest {
            command: command.into(),
            seed: Some(args.seed),
            config: None,
            columns: vec!["suite", "status", "trials", "failures", "worst", "detail"],
        },
        rows,
        json: serde_json::to_value(&reports).expect("serializable"),
    };
    Ok(Rendered {
        text: render(table, args.out.format),
        exit_code: if failed { EXIT_CHECK_FAILED } else { EXIT_OK },
    })
}

/// Dispatches a parsed command line. `command` is echoed into the manifest.
pub fn execute(cli: &Cli, command: &str) -> CliResult<Rendered> {
    match &cli.command {
        Command::Bounds(a) => cmd_bounds(a, command),
        Command::Predict(a) => cmd_predict(a, command),
        Command::Simulate(a) => cmd_simulate(a, command),
        Command::Sweep(a) => cmd_sweep(a, command),
        Command::Check(a) => cmd_check(a, command),
    }
}

fn output_target(cli: &Cli) -> Option<&Path> {
    match &cli.command {
        Command::Bounds(a) => a.out.output.as_deref(),
        Command::Predict(a) => a.out.output.as_deref(),
        Command::Simulate(a) => a.out.output.as_deref(),
        Command::Sweep(a) => a.out.output.as_deref(),
        Command::Check(a) => a.out.output.as_deref(),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with_args<I, T>(args: I) -> (Option<String>, u8)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return (None, code);
        }
    };
    let command = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    match execute(&cli, &command) {
        Ok(rendered) => {
            if let Some(path) = output_target(&cli) {
                if let Err(e) = fs::write(path, &rendered.text) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return (None, EXIT_USAGE);
                }
                (None, rendered.exit_code)
            } else {
                (Some(rendered.text), rendered.exit_code)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            (None, e.exit_code())
        }
    }
}

pub fn main() -> ExitCode {
    let (text, code) = run_with_args(std::env::args_os());
    if let Some(text) = text {
        print!("{text}");
    }
    ExitCode::from(code)
}
