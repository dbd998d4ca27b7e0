//! Run configuration, command dispatch and result files.
//!
//! A run reads a TOML document, applies command-line overrides, validates
//! it into a [`RunConfig`], dispatches one [`Command`] and writes CSV, SVG
//! and a JSON [`RunManifest`] into an output directory. Numbers are written
//! in shortest round-trip form, so re-reading a CSV reproduces the samples
//! bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::degenerate::{
    aperiodic_solution, detect, e3e4_solution, lagrange_limit_time, precession_rates, Degeneracy, DegeneracyKind,
};
use crate::dynamics::{first_integrals, kinetic_energy, momentum_to_omega, state_from_omega, TopParams, TopState};
use crate::error::TopError;
use crate::reduction::{
    branch_points, constants_from_roots, initial_state, measured_half_period, nutation_half_period, reduced_residual,
    time_between, Branch, BranchPoints, Leg, ReducedConstants,
};
use crate::su2::{SpecialUnitary, Su2Vector, C64};
use crate::tip_curve::{classify, self_intersections, trace_curve, TipClass, TipSample};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TOYTOP_OUT_DIR";

/// Output directory used when neither the flag nor the variable is set.
pub const DEFAULT_OUT_DIR: &str = "toytop-out";

pub const TRAJECTORY_HEADER: [&str; 12] =
    ["t", "u", "alpha_re", "alpha_im", "beta_re", "beta_im", "m1", "m2", "m3", "h", "l", "n"];

pub const TIP_HEADER: [&str; 6] = ["t", "u", "rho", "phi", "c_re", "c_im"];

/// Attitudes this far from unit norm are rescaled; farther ones are rejected.
const ATTITUDE_SLACK: f64 = 1e-6;

/// Closed-form comparisons of the aperiodic motion stop at this height.
const APERIODIC_CUTOFF: f64 = 1.0 - 1e-3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(#[from] TopError),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        CliError::Invalid { field: field.into(), message: message.into() }
    }

    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: err.to_string() }
    }

    /// 1 for bad input, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Invalid { .. } | CliError::Io { .. } => 1,
            CliError::Numerical(_) | CliError::CheckFailed(_) => 2,
        }
    }

    /// Machine-readable error record.
    pub fn record(&self) -> Value {
        let kind = match self {
            CliError::Parse { .. } => "parse",
            CliError::Invalid { .. } => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::CheckFailed(_) => "check",
            CliError::Io { .. } => "io",
        };
        let mut rec = json!({
            "status": "error",
            "kind": kind,
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        match self {
            CliError::Parse { line, column, .. } => {
                rec["line"] = json!(line);
                rec["column"] = json!(column);
            }
            CliError::Invalid { field, .. } => rec["field"] = json!(field),
            _ => {}
        }
        rec
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Integrate the equations of motion and write the trajectory.
    Simulate,
    /// First integrals, branch points and branch of the initial condition.
    Reduce,
    /// Loop, cusp or smooth tip curve.
    Classify,
    /// Trace the tip curve to CSV and SVG.
    TipCurve,
    /// Nutation half-period from quadrature and from the ODE.
    Period,
    /// Closed forms of the degenerate cases, cross-checked against the ODE.
    Degenerate,
    /// Conservation, residual, round-trip and period checks.
    Validate,
    /// Run a grid of configurations in parallel.
    Sweep,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum InitialCondition {
    AttitudeOmega { attitude: [f64; 4], omega: [f64; 3] },
    AttitudeMomentum { attitude: [f64; 4], momentum: [f64; 3] },
    Roots { e1: f64, e2: f64, e3: f64, branch: Branch, u0: f64, leg: Leg },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub t_end: f64,
    /// Bound on the relative drift of `h`, `l`, `n`.
    pub drift_tol: f64,
    /// Bound on the reduced-equation residual.
    pub residual_tol: f64,
    /// Bound on closed-form versus ODE deviations.
    pub deviation_tol: f64,
    /// Gap below which two branch points count as equal.
    pub degeneracy_tol: f64,
    /// Relative half-width of the cusp band.
    pub cusp_tol: f64,
    /// `e4` above which a generic configuration is flagged as near Lagrange.
    pub lagrange_e4: Option<f64>,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            dt: 1e-3,
            t_end: 10.0,
            drift_tol: 1e-8,
            residual_tol: 1e-7,
            deviation_tol: 1e-6,
            degeneracy_tol: 1e-8,
            cusp_tol: crate::tip_curve::CUSP_TOL,
            lagrange_e4: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSelection {
    pub trajectory: bool,
    pub tip_curve: bool,
    pub svg: bool,
    pub classification: bool,
    pub period: bool,
    pub degenerate: bool,
    /// Write every `stride`-th integration step.
    pub stride: usize,
    pub tip_periods: usize,
    pub tip_samples_per_leg: usize,
    /// Random draws for the round-trip check of `validate`.
    pub validate_draws: usize,
    /// Record the wall-clock time; off makes manifests byte-identical.
    pub wall_clock: bool,
}

impl Default for OutputSelection {
    fn default() -> Self {
        OutputSelection {
            trajectory: true,
            tip_curve: true,
            svg: true,
            classification: true,
            period: false,
            degenerate: false,
            stride: 10,
            tip_periods: 2,
            tip_samples_per_leg: 64,
            validate_draws: 100,
            wall_clock: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_sweep_command")]
    pub command: Command,
    /// Override key to list of values; the grid is their cartesian product.
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<f64>>,
}

fn default_sweep_command() -> Command {
    Command::Simulate
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub params: TopParams,
    pub initial: InitialCondition,
    pub integrator: IntegratorSettings,
    pub output: OutputSelection,
    pub seed: u64,
    pub sweep: Option<SweepSpec>,
    /// The document after overrides, used to derive sweep points.
    #[serde(skip)]
    pub source: toml::Table,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    params: RawParams,
    initial: RawInitial,
    #[serde(default)]
    integrator: IntegratorSettings,
    #[serde(default)]
    output: OutputSelection,
    #[serde(default)]
    seed: u64,
    sweep: Option<SweepSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "C")]
    c: f64,
    s: f64,
    p: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    attitude: Option<[f64; 4]>,
    omega: Option<[f64; 3]>,
    momentum: Option<[f64; 3]>,
    e1: Option<f64>,
    e2: Option<f64>,
    e3: Option<f64>,
    branch: Option<Branch>,
    u0: Option<f64>,
    leg: Option<Leg>,
}

/// A command-line value replacing one key of the document.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: toml::Value,
}

impl Override {
    pub fn new(key: &str, value: impl Into<toml::Value>) -> Self {
        Override { key: key.into(), value: value.into() }
    }
}

/// Document path of an override key; flag names mirror the key names.
pub fn override_path(key: &str) -> Option<[&'static str; 2]> {
    Some(match key {
        "A" => ["params", "A"],
        "C" => ["params", "C"],
        "s" => ["params", "s"],
        "p" => ["params", "p"],
        "e1" => ["initial", "e1"],
        "e2" => ["initial", "e2"],
        "e3" => ["initial", "e3"],
        "u0" => ["initial", "u0"],
        "branch" => ["initial", "branch"],
        "leg" => ["initial", "leg"],
        "dt" => ["integrator", "dt"],
        "t_end" => ["integrator", "t_end"],
        "stride" => ["output", "stride"],
        "seed" => ["", "seed"],
        _ => return None,
    })
}

fn apply_overrides(table: &mut toml::Table, overrides: &[Override]) -> CliResult<()> {
    for ov in overrides {
        let [section, key] = override_path(&ov.key).ok_or_else(|| CliError::invalid(&ov.key, "unknown override key"))?;
        let target = if section.is_empty() {
            &mut *table
        } else {
            let entry = table.entry(section).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            entry.as_table_mut().ok_or_else(|| CliError::invalid(section, "expected a table"))?
        };
        target.insert(key.into(), ov.value.clone());
    }
    Ok(())
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn parse_error(text: &str, err: &toml::de::Error) -> CliError {
    let (line, column) = err.span().map_or((0, 0), |s| line_col(text, s.start));
    CliError::Parse { line, column, message: err.message().to_string() }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    parse_config_with(text, &[])
}

/// Like [`parse_config`], with overrides applied before validation.
pub fn parse_config_with(text: &str, overrides: &[Override]) -> CliResult<RunConfig> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    if overrides.is_empty() {
        // deserializing from the text keeps line numbers in type errors
        let raw: RawConfig = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        return validate(raw, table);
    }
    apply_overrides(&mut table, overrides)?;
    config_from_table(table)
}

fn config_from_table(table: toml::Table) -> CliResult<RunConfig> {
    let raw: RawConfig = toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Parse { line: 0, column: 0, message: e.message().to_string() })?;
    validate(raw, table)
}

fn positive(field: &str, v: f64) -> CliResult<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn validate(raw: RawConfig, source: toml::Table) -> CliResult<RunConfig> {
    let rp = &raw.params;
    for (name, v) in [("params.A", rp.a), ("params.C", rp.c), ("params.s", rp.s), ("params.p", rp.p)] {
        positive(name, v)?;
    }
    let params = TopParams::new(rp.a, rp.c, rp.s, rp.p).map_err(|e| CliError::invalid("params", e.to_string()))?;
    let ig = &raw.integrator;
    positive("integrator.dt", ig.dt)?;
    positive("integrator.t_end", ig.t_end)?;
    for (name, v) in [
        ("integrator.drift_tol", ig.drift_tol),
        ("integrator.residual_tol", ig.residual_tol),
        ("integrator.deviation_tol", ig.deviation_tol),
        ("integrator.degeneracy_tol", ig.degeneracy_tol),
        ("integrator.cusp_tol", ig.cusp_tol),
    ] {
        positive(name, v)?;
    }
    if let Some(v) = ig.lagrange_e4 {
        positive("integrator.lagrange_e4", v)?;
    }
    let out = &raw.output;
    for (name, v) in [
        ("output.stride", out.stride),
        ("output.tip_periods", out.tip_periods),
        ("output.tip_samples_per_leg", out.tip_samples_per_leg),
    ] {
        if v == 0 {
            return Err(CliError::invalid(name, "must be at least 1"));
        }
    }
    if let Some(sw) = &raw.sweep {
        if sw.command == Command::Sweep {
            return Err(CliError::invalid("sweep.command", "a sweep cannot run sweeps"));
        }
        for (key, values) in &sw.grid {
            if override_path(key).is_none() || key == "branch" || key == "leg" {
                return Err(CliError::invalid(&format!("sweep.grid.{key}"), "not a numeric override key"));
            }
            if values.is_empty() {
                return Err(CliError::invalid(&format!("sweep.grid.{key}"), "needs at least one value"));
            }
        }
    }
    let initial = validate_initial(&raw.initial, &params)?;
    Ok(RunConfig {
        params,
        initial,
        integrator: raw.integrator,
        output: raw.output,
        seed: raw.seed,
        sweep: raw.sweep,
        source,
    })
}

fn validate_initial(ri: &RawInitial, params: &TopParams) -> CliResult<InitialCondition> {
    let roots_keys: Vec<&str> = [
        ("e1", ri.e1.is_some()),
        ("e2", ri.e2.is_some()),
        ("e3", ri.e3.is_some()),
        ("branch", ri.branch.is_some()),
        ("u0", ri.u0.is_some()),
        ("leg", ri.leg.is_some()),
    ]
    .iter()
    .filter(|(_, set)| *set)
    .map(|(k, _)| *k)
    .collect();
    let mut forms = Vec::new();
    if ri.omega.is_some() {
        forms.push("attitude + omega");
    }
    if ri.momentum.is_some() {
        forms.push("attitude + momentum");
    }
    if !roots_keys.is_empty() {
        forms.push("branch points");
    }
    match forms.len() {
        0 => return Err(CliError::invalid("initial", "no initial condition given")),
        1 => {}
        _ => {
            return Err(CliError::invalid(
                "initial",
                format!("exactly one initial-condition form is allowed, found {}", forms.join(" and ")),
            ))
        }
    }
    if ri.omega.is_some() || ri.momentum.is_some() {
        let attitude = ri.attitude.ok_or_else(|| CliError::invalid("initial.attitude", "required with omega or momentum"))?;
        let phi = attitude_from(attitude)?;
        let ic = match (ri.omega, ri.momentum) {
            (Some(omega), _) => InitialCondition::AttitudeOmega { attitude: attitude_array(&phi), omega },
            (_, Some(momentum)) => {
                let m = Su2Vector::from_array(momentum);
                momentum_to_omega(m, &phi, params).map_err(|e| CliError::invalid("initial.momentum", e.to_string()))?;
                InitialCondition::AttitudeMomentum { attitude: attitude_array(&phi), momentum }
            }
            _ => unreachable!(),
        };
        return Ok(ic);
    }
    if ri.attitude.is_some() {
        return Err(CliError::invalid("initial.attitude", "not used with the branch-point form"));
    }
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| CliError::invalid(&format!("initial.{name}"), "required in the branch-point form"))
    };
    let (e1, e2, e3) = (need(ri.e1, "e1")?, need(ri.e2, "e2")?, need(ri.e3, "e3")?);
    let branch = ri.branch.unwrap_or(Branch::Primary);
    let bp = BranchPoints::new(e1, e2, e3, params, branch).map_err(|e| CliError::invalid("initial", e.to_string()))?;
    constants_from_roots(&bp, params, branch).map_err(|e| CliError::invalid("initial.branch", e.to_string()))?;
    let u0 = ri.u0.unwrap_or(e1);
    if !(u0 >= e1 && u0 <= e2) {
        return Err(CliError::invalid("initial.u0", format!("must lie in [e1, e2] = [{e1}, {e2}], got {u0}")));
    }
    Ok(InitialCondition::Roots { e1, e2, e3, branch, u0, leg: ri.leg.unwrap_or(Leg::Rising) })
}

fn attitude_from(a: [f64; 4]) -> CliResult<SpecialUnitary> {
    let alpha = C64::new(a[0], a[1]);
    let beta = C64::new(a[2], a[3]);
    let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
    if !((norm - 1.0).abs() <= ATTITUDE_SLACK) {
        return Err(CliError::invalid("initial.attitude", format!("|α|² + |β|² must be 1, got {}", norm * norm)));
    }
    Ok(SpecialUnitary::from_alpha_beta(alpha / norm, beta / norm))
}

fn attitude_array(phi: &SpecialUnitary) -> [f64; 4] {
    [phi.alpha.re, phi.alpha.im, phi.beta.re, phi.beta.im]
}

/// The initial condition resolved into a state and its reduction.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub params: TopParams,
    pub state: TopState,
    pub consts: ReducedConstants,
    pub roots: std::result::Result<BranchPoints, TopError>,
}

pub fn resolve(config: &RunConfig) -> CliResult<Resolved> {
    let params = config.params;
    let (state, consts, roots) = match &config.initial {
        InitialCondition::AttitudeOmega { attitude, omega } => {
            let phi = attitude_from(*attitude)?;
            let state = state_from_omega(phi, Su2Vector::from_array(*omega), 0.0, &params)?;
            let consts = ReducedConstants::from_integrals(&first_integrals(&state, &params)?, &params);
            (state, consts, branch_points(&consts))
        }
        InitialCondition::AttitudeMomentum { attitude, momentum } => {
            let phi = attitude_from(*attitude)?;
            let state = TopState { phi, m: Su2Vector::from_array(*momentum), t: 0.0 };
            let consts = ReducedConstants::from_integrals(&first_integrals(&state, &params)?, &params);
            (state, consts, branch_points(&consts))
        }
        InitialCondition::Roots { e1, e2, e3, branch, u0, leg } => {
            let bp = BranchPoints::new(*e1, *e2, *e3, &params, *branch)?;
            let consts = constants_from_roots(&bp, &params, *branch)?;
            (initial_state(&consts, *u0, *leg)?, consts, Ok(bp))
        }
    };
    Ok(Resolved { params, state, consts, roots })
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// One row of a trajectory file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub u: f64,
    pub alpha: C64,
    pub beta: C64,
    pub m: [f64; 3],
    pub h: f64,
    pub l: f64,
    pub n: f64,
}

impl TrajectoryRow {
    pub fn from_state(state: &TopState, params: &TopParams) -> crate::error::Result<Self> {
        let fi = first_integrals(state, params)?;
        Ok(TrajectoryRow {
            t: state.t,
            u: state.phi.u(),
            alpha: state.phi.alpha,
            beta: state.phi.beta,
            m: state.m.to_array(),
            h: fi.h,
            l: fi.l,
            n: fi.n,
        })
    }

    fn values(&self) -> [f64; 12] {
        let [m1, m2, m3] = self.m;
        [self.t, self.u, self.alpha.re, self.alpha.im, self.beta.re, self.beta.im, m1, m2, m3, self.h, self.l, self.n]
    }

    fn from_values(v: &[f64]) -> Self {
        TrajectoryRow {
            t: v[0],
            u: v[1],
            alpha: C64::new(v[2], v[3]),
            beta: C64::new(v[4], v[5]),
            m: [v[6], v[7], v[8]],
            h: v[9],
            l: v[10],
            n: v[11],
        }
    }
}

fn tip_values(s: &TipSample) -> [f64; 6] {
    [s.t, s.u, s.rho, s.phi, s.c.re, s.c.im]
}

fn write_csv<const N: usize>(path: &Path, header: [&str; N], rows: impl Iterator<Item = [f64; N]>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|x| format_number(*x))).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_csv<const N: usize>(path: &Path, header: [&str; N]) -> CliResult<Vec<[f64; N]>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let found = r.headers().map_err(|e| CliError::io(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::io(path, format!("unexpected header {found:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let mut row = [0.0; N];
        for (slot, field) in row.iter_mut().zip(rec.iter()) {
            *slot = field.parse().map_err(|e| CliError::io(path, format!("bad number {field:?}: {e}")))?;
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> CliResult<()> {
    write_csv(path, TRAJECTORY_HEADER, rows.iter().map(|r| r.values()))
}

pub fn read_trajectory_csv(path: &Path) -> CliResult<Vec<TrajectoryRow>> {
    Ok(read_csv(path, TRAJECTORY_HEADER)?.iter().map(|v| TrajectoryRow::from_values(v)).collect())
}

pub fn write_tip_csv(path: &Path, samples: &[TipSample]) -> CliResult<()> {
    write_csv(path, TIP_HEADER, samples.iter().map(tip_values))
}

pub fn read_tip_csv(path: &Path) -> CliResult<Vec<TipSample>> {
    Ok(read_csv(path, TIP_HEADER)?
        .iter()
        .map(|v| TipSample { t: v[0], u: v[1], rho: v[2], phi: v[3], c: C64::new(v[4], v[5]) })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvgStyle {
    pub width_px: f64,
    pub stroke: String,
    /// Stroke width as a fraction of the larger viewbox side.
    pub stroke_frac: f64,
}

impl Default for SvgStyle {
    fn default() -> Self {
        SvgStyle { width_px: 640.0, stroke: "#1f4e79".into(), stroke_frac: 0.004 }
    }
}

/// Renders the tip curve as one polyline in an equal-aspect viewbox fitted
/// to the samples with a 5% margin. The origin is marked and the
/// self-intersection count goes into the metadata.
pub fn emit_tip_svg(samples: &[TipSample], style: &SvgStyle) -> crate::error::Result<String> {
    if samples.is_empty() {
        return Err(TopError::InvalidParameter("no tip samples to render".into()));
    }
    // screen y points down
    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.c.re, -s.c.im)).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let mut extent = (x1 - x0).max(y1 - y0);
    if !(extent > 0.0) {
        extent = pts[0].0.hypot(pts[0].1).max(1.0);
    }
    let margin = 0.05 * extent;
    let (vx, vy) = (x0 - margin, y0 - margin);
    let (vw, vh) = (x1 - x0 + 2.0 * margin, y1 - y0 + 2.0 * margin);
    let height_px = style.width_px * vh / vw;
    let stroke_w = style.stroke_frac * vw.max(vh);
    let crossings = self_intersections(samples);
    let f = format_number;
    let mut doc = String::new();
    doc.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"{}\" height=\"{}\" preserveAspectRatio=\"xMidYMid meet\">\n",
        f(vx), f(vy), f(vw), f(vh), f(style.width_px), f(height_px)
    ));
    doc.push_str(&format!(
        "<metadata>{}</metadata>\n",
        json!({ "samples": samples.len(), "self_intersections": crossings })
    ));
    if pts.len() == 1 {
        doc.push_str(&format!(
            "<circle class=\"sample\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>\n",
            f(pts[0].0), f(pts[0].1), f(4.0 * stroke_w), style.stroke
        ));
    } else {
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{},{}", f(x), f(y))).collect();
        doc.push_str(&format!(
            "<polyline class=\"tip\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" points=\"{}\"/>\n",
            style.stroke,
            f(stroke_w),
            coords.join(" ")
        ));
    }
    let r = 3.0 * stroke_w;
    doc.push_str(&format!(
        "<g class=\"origin\" stroke=\"#444444\" stroke-width=\"{}\"><line x1=\"{}\" y1=\"0\" x2=\"{}\" y2=\"0\"/><line x1=\"0\" y1=\"{}\" x2=\"0\" y2=\"{}\"/></g>\n",
        f(0.5 * stroke_w), f(-r), f(r), f(-r), f(r)
    ));
    doc.push_str("</svg>\n");
    Ok(doc)
}

/// Maximal conservation drifts and reduced residual along a trajectory.
///
/// Energy drift is relative to `T₀ + p`, momentum drifts to `|m₀|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftSummary {
    pub h: f64,
    pub l: f64,
    pub n: f64,
    pub reduced_residual: f64,
    pub drift_tol: f64,
    pub residual_tol: f64,
    pub within_tolerance: bool,
    pub steps: usize,
}

pub struct DriftTracker {
    params: TopParams,
    consts: ReducedConstants,
    h0: f64,
    l0: f64,
    n0: f64,
    energy_scale: f64,
    momentum_scale: f64,
    max: [f64; 4],
    steps: usize,
}

impl DriftTracker {
    pub fn new(initial: &TopState, params: &TopParams) -> crate::error::Result<Self> {
        let fi = first_integrals(initial, params)?;
        let omega = momentum_to_omega(initial.m, &initial.phi, params)?;
        let m0 = initial.m.norm();
        Ok(DriftTracker {
            params: *params,
            consts: ReducedConstants::from_integrals(&fi, params),
            h0: fi.h,
            l0: fi.l,
            n0: fi.n,
            energy_scale: kinetic_energy(&initial.phi, omega, params) + params.p,
            momentum_scale: if m0 > 0.0 { m0 } else { 1.0 },
            max: [0.0; 4],
            steps: 0,
        })
    }

    pub fn observe(&mut self, state: &TopState) -> crate::error::Result<TrajectoryRow> {
        let row = TrajectoryRow::from_state(state, &self.params)?;
        let d = [
            (row.h - self.h0).abs() / self.energy_scale,
            (row.l - self.l0).abs() / self.momentum_scale,
            (row.n - self.n0).abs() / self.momentum_scale,
            reduced_residual(state, &self.consts)?,
        ];
        for (m, v) in self.max.iter_mut().zip(d) {
            *m = m.max(v);
        }
        self.steps += 1;
        Ok(row)
    }

    pub fn summary(&self, settings: &IntegratorSettings) -> DriftSummary {
        let [h, l, n, res] = self.max;
        DriftSummary {
            h,
            l,
            n,
            reduced_residual: res,
            drift_tol: settings.drift_tol,
            residual_tol: settings.residual_tol,
            within_tolerance: h.max(l).max(n) < settings.drift_tol && res < settings.residual_tol,
            steps: self.steps,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: Command,
    pub version: String,
    pub config: RunConfig,
    pub wall_clock_seconds: Option<f64>,
    pub drift: Option<DriftSummary>,
    pub classification: Option<TipClass>,
    pub degeneracy: Option<DegeneracyKind>,
    pub results: Value,
    /// Emitted files, relative to the output directory.
    pub files: Vec<String>,
}

struct Run<'a> {
    config: &'a RunConfig,
    dir: &'a Path,
    files: Vec<String>,
    drift: Option<DriftSummary>,
    classification: Option<TipClass>,
    degeneracy: Option<DegeneracyKind>,
    results: serde_json::Map<String, Value>,
}

impl<'a> Run<'a> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.into());
        self.dir.join(name)
    }

    fn put(&mut self, key: &str, value: impl Serialize) {
        self.results.insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    fn roots(&self, resolved: &Resolved) -> CliResult<BranchPoints> {
        resolved.roots.clone().map_err(CliError::Numerical)
    }

    /// Integrates from `initial`, keeping every `stride`-th row.
    fn integrate(&mut self, initial: &TopState, t_end: f64) -> CliResult<Vec<TrajectoryRow>> {
        let cfg = self.config;
        let params = cfg.params;
        let mut tracker = DriftTracker::new(initial, &params)?;
        let mut rows = Vec::new();
        let mut err = None;
        let mut last = None;
        let mut k = 0usize;
        crate::dynamics::simulate_with(initial, cfg.integrator.dt, t_end, &params, |s| match tracker.observe(s) {
            Ok(row) => {
                if k.is_multiple_of(cfg.output.stride) {
                    rows.push(row);
                    last = None;
                } else {
                    last = Some(row);
                }
                k += 1;
                true
            }
            Err(e) => {
                err = Some(e);
                false
            }
        })?;
        if let Some(e) = err {
            return Err(e.into());
        }
        rows.extend(last);
        self.drift = Some(tracker.summary(&cfg.integrator));
        Ok(rows)
    }

    fn attach_classification(&mut self, bp: &BranchPoints, consts: &ReducedConstants) -> CliResult<TipClass> {
        let class = classify(bp, consts, self.config.integrator.cusp_tol)?;
        self.classification = Some(class);
        Ok(class)
    }

    fn detect(&mut self, bp: &BranchPoints) -> DegeneracyKind {
        let ig = &self.config.integrator;
        let kind = detect(bp, ig.degeneracy_tol, ig.lagrange_e4);
        self.degeneracy = Some(kind);
        kind
    }

    fn reduction_record(&mut self, resolved: &Resolved) {
        let c = &resolved.consts;
        self.put("constants", json!({ "l": c.l, "n": c.n, "h": c.h }));
        let (wp, wm) = c.w_pm1();
        self.put("w_plus", wp);
        self.put("w_minus", wm);
        self.put("e4", resolved.params.e4());
        match &resolved.roots {
            Ok(bp) => {
                self.put("roots", bp.roots());
                self.put("branch", bp.branch());
            }
            Err(e) => self.put("roots_error", e.to_string()),
        }
    }

    fn simulate(&mut self, resolved: &Resolved) -> CliResult<()> {
        let rows = self.integrate(&resolved.state, self.config.integrator.t_end)?;
        if self.config.output.trajectory {
            let p = self.path("trajectory.csv");
            write_trajectory_csv(&p, &rows)?;
        }
        self.put("rows", rows.len());
        if let Ok(bp) = resolved.roots.clone() {
            if self.config.output.classification {
                if let Ok(class) = classify(&bp, &resolved.consts, self.config.integrator.cusp_tol) {
                    self.classification = Some(class);
                }
            }
            if self.config.output.period {
                self.period(resolved)?;
            }
        }
        Ok(())
    }

    fn reduce(&mut self, resolved: &Resolved) -> CliResult<()> {
        self.reduction_record(resolved);
        let bp = self.roots(resolved)?;
        let kind = self.detect(&bp);
        if kind.kind == Degeneracy::Generic || kind.kind == Degeneracy::LagrangeLimit {
            self.put("half_period", nutation_half_period(&bp, &resolved.params)?);
        }
        Ok(())
    }

    fn classify(&mut self, resolved: &Resolved) -> CliResult<()> {
        let bp = self.roots(resolved)?;
        self.detect(&bp);
        let class = self.attach_classification(&bp, &resolved.consts)?;
        self.put("kind", class.kind);
        Ok(())
    }

    fn tip_curve(&mut self, resolved: &Resolved) -> CliResult<()> {
        let bp = self.roots(resolved)?;
        let out = &self.config.output;
        let samples = trace_curve(&bp, &resolved.consts, &resolved.params, out.tip_periods, out.tip_samples_per_leg)?;
        let crossings = self_intersections(&samples);
        if let Ok(class) = classify(&bp, &resolved.consts, self.config.integrator.cusp_tol) {
            self.classification = Some(class);
        }
        if self.config.output.tip_curve {
            let p = self.path("tip.csv");
            write_tip_csv(&p, &samples)?;
        }
        if self.config.output.svg {
            let svg = emit_tip_svg(&samples, &SvgStyle::default())?;
            let p = self.path("tip.svg");
            fs::write(&p, svg).map_err(|e| CliError::io(&p, e))?;
        }
        self.put("samples", samples.len());
        self.put("self_intersections", crossings);
        Ok(())
    }

    fn period(&mut self, resolved: &Resolved) -> CliResult<()> {
        let bp = self.roots(resolved)?;
        let quad = nutation_half_period(&bp, &resolved.params)?;
        let ode = measured_half_period(&resolved.consts, &bp, self.config.integrator.dt)?;
        if self.drift.is_none() {
            let start = initial_state(&resolved.consts, bp.e1, Leg::Rising)?;
            self.integrate(&start, ode)?;
        }
        self.put("half_period_quadrature", quad);
        self.put("half_period_ode", ode);
        self.put("half_period_relative_difference", (quad - ode).abs() / quad);
        Ok(())
    }

    fn degenerate(&mut self, resolved: &Resolved) -> CliResult<()> {
        let bp = self.roots(resolved)?;
        let kind = self.detect(&bp);
        let (params, consts) = (resolved.params, resolved.consts);
        let ig = self.config.integrator.clone();
        match kind.kind {
            Degeneracy::StablePrecession => {
                let rates = precession_rates(bp.e1, &consts)?;
                self.put("precession", rates);
                let start = initial_state(&consts, bp.e1, Leg::Rising)?;
                let rows = self.integrate(&start, ig.t_end)?;
                let dev = rows.iter().map(|r| (r.u - bp.e1).abs()).fold(0.0, f64::max);
                self.put("max_height_deviation", dev);
                self.write_ode(&rows)?;
            }
            Degeneracy::E3EqualsE4 => {
                let sol = e3e4_solution(&bp, &consts, &params)?;
                self.cross_check(&sol.state(0.0)?, |t| sol.state(t), f64::INFINITY)?;
            }
            Degeneracy::Aperiodic => {
                let sol = aperiodic_solution(&bp, &consts, &params)?;
                self.put("p_exponent", [sol.p_exp.re, sol.p_exp.im]);
                self.cross_check(&sol.state(0.0)?, |t| sol.state(t), APERIODIC_CUTOFF)?;
            }
            Degeneracy::LagrangeLimit => {
                let limit = lagrange_limit_time(bp.e1, bp.e2, bp.roots(), params.a, params.p)?;
                let full = time_between(&bp, &params, bp.e1, bp.e2)?;
                self.put("half_period", full);
                self.put("lagrange_half_period", limit);
                self.put("relative_difference", (full - limit).abs() / limit);
            }
            Degeneracy::Generic => self.put("closed_form", Value::Null),
        }
        Ok(())
    }

    fn write_ode(&mut self, rows: &[TrajectoryRow]) -> CliResult<()> {
        if self.config.output.trajectory {
            let p = self.path("ode.csv");
            write_trajectory_csv(&p, rows)?;
        }
        Ok(())
    }

    /// Integrates from the closed form's initial state and compares both at
    /// every kept row while `u` stays below `u_cutoff`.
    fn cross_check<F>(&mut self, start: &TopState, closed: F, u_cutoff: f64) -> CliResult<()>
    where
        F: Fn(f64) -> crate::error::Result<TopState>,
    {
        let params = self.config.params;
        let ode = self.integrate(start, self.config.integrator.t_end)?;
        let mut closed_rows = Vec::with_capacity(ode.len());
        let (mut du, mut dphi, mut group) = (0.0f64, 0.0f64, 0.0f64);
        for row in &ode {
            let s = closed(row.t)?;
            let c = TrajectoryRow::from_state(&s, &params)?;
            group = group.max(s.phi.group_residual());
            if row.u < u_cutoff {
                du = du.max((c.u - row.u).abs());
                dphi = dphi.max((c.alpha - row.alpha).norm()).max((c.beta - row.beta).norm());
            }
            closed_rows.push(c);
        }
        if self.config.output.trajectory {
            let p = self.path("closed_form.csv");
            write_trajectory_csv(&p, &closed_rows)?;
        }
        self.write_ode(&ode)?;
        let tol = self.config.integrator.deviation_tol;
        self.put("max_deviation_u", du);
        self.put("max_deviation_attitude", dphi);
        self.put("max_group_residual", group);
        self.put("deviation_tol", tol);
        self.put("within_tolerance", du < tol && dphi < tol);
        Ok(())
    }

    fn validate(&mut self, resolved: &Resolved) -> CliResult<()> {
        let cfg = self.config;
        let mut checks = Vec::new();
        let mut check = |name: &str, value: f64, tol: f64| {
            checks.push(json!({ "name": name, "value": value, "tolerance": tol, "pass": value < tol }));
        };
        self.integrate(&resolved.state, cfg.integrator.t_end)?;
        let d = self.drift.clone().expect("integrate sets the drift summary");
        check("drift_h", d.h, d.drift_tol);
        check("drift_l", d.l, d.drift_tol);
        check("drift_n", d.n, d.drift_tol);
        check("reduced_residual", d.reduced_residual, d.residual_tol);
        if let Ok(bp) = &resolved.roots {
            let back = constants_from_roots(bp, &resolved.params, bp.branch())?;
            let c = &resolved.consts;
            let scale = 1.0 + c.l.abs() + c.n.abs() + c.h.abs();
            let err = (back.l - c.l).abs().max((back.n - c.n).abs()).max((back.h - c.h).abs()) / scale;
            check("constants_round_trip", err, 1e-10);
            if detect(bp, cfg.integrator.degeneracy_tol, None).kind == Degeneracy::Generic {
                let quad = nutation_half_period(bp, &resolved.params)?;
                let ode = measured_half_period(&resolved.consts, bp, cfg.integrator.dt)?;
                check("half_period", (quad - ode).abs() / quad, cfg.integrator.deviation_tol);
            }
        }
        let worst = random_round_trips(&resolved.params, cfg.seed, cfg.output.validate_draws)?;
        check("random_round_trips", worst, 1e-10);
        let failed: Vec<String> = checks
            .iter()
            .filter(|c| c["pass"] == Value::Bool(false))
            .map(|c| c["name"].as_str().unwrap_or("").to_string())
            .collect();
        self.put("checks", checks);
        self.put("passed", failed.is_empty());
        Ok(())
    }
}

/// Largest relative `(l, n, h) → roots → (l, n, h)` error over seeded draws
/// of feasible roots `−1 ≤ e1 ≤ e2 ≤ 1 ≤ e3`.
pub fn random_round_trips(params: &TopParams, seed: u64, draws: usize) -> crate::error::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < draws {
        let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let e3 = rng.gen_range(1.0..1.0 + 3.0 * params.e4());
        let branch = Branch::ALL[rng.gen_range(0..4)];
        let Ok(bp) = BranchPoints::new(a.min(b), a.max(b), e3, params, branch) else { continue };
        let Ok(c) = constants_from_roots(&bp, params, branch) else { continue };
        let back = branch_points(&c)?;
        let again = constants_from_roots(&back, params, back.branch())?;
        let scale = 1.0 + c.l.abs() + c.n.abs() + c.h.abs();
        let err = (again.l - c.l).abs().max((again.n - c.n).abs()).max((again.h - c.h).abs()) / scale;
        worst = worst.max(err);
        done += 1;
    }
    Ok(worst)
}

/// Runs one command and writes its files and manifest into `dir`.
pub fn run(config: &RunConfig, command: Command, dir: &Path) -> CliResult<RunManifest> {
    let clock = Instant::now();
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    if command == Command::Sweep {
        return sweep(config, dir, clock);
    }
    let resolved = resolve(config)?;
    let mut r = Run {
        config,
        dir,
        files: Vec::new(),
        drift: None,
        classification: None,
        degeneracy: None,
        results: serde_json::Map::new(),
    };
    match command {
        Command::Simulate => r.simulate(&resolved)?,
        Command::Reduce => r.reduce(&resolved)?,
        Command::Classify => r.classify(&resolved)?,
        Command::TipCurve => r.tip_curve(&resolved)?,
        Command::Period => r.period(&resolved)?,
        Command::Degenerate => r.degenerate(&resolved)?,
        Command::Validate => r.validate(&resolved)?,
        Command::Sweep => unreachable!(),
    }
    if command == Command::Simulate && config.output.degenerate {
        if let Ok(bp) = &resolved.roots {
            r.detect(bp);
        }
    }
    let failed_check = r.results.get("passed") == Some(&Value::Bool(false));
    let manifest = finish(config, command, r.files, r.drift, r.classification, r.degeneracy, r.results.into(), clock, dir)?;
    if failed_check {
        return Err(CliError::CheckFailed("one or more validation checks failed; see manifest.json".into()));
    }
    Ok(manifest)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    config: &RunConfig,
    command: Command,
    mut files: Vec<String>,
    drift: Option<DriftSummary>,
    classification: Option<TipClass>,
    degeneracy: Option<DegeneracyKind>,
    results: Value,
    clock: Instant,
    dir: &Path,
) -> CliResult<RunManifest> {
    files.push("manifest.json".into());
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        wall_clock_seconds: config.output.wall_clock.then(|| clock.elapsed().as_secs_f64()),
        drift,
        classification,
        degeneracy,
        results,
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Grid points of a sweep as override lists, in lexicographic key order.
pub fn sweep_points(spec: &SweepSpec) -> Vec<Vec<Override>> {
    let mut points = vec![Vec::new()];
    for (key, values) in &spec.grid {
        points = points
            .into_iter()
            .flat_map(|base: Vec<Override>| {
                values.iter().map(move |v| {
                    let mut p = base.clone();
                    let value = if key == "stride" || key == "seed" {
                        toml::Value::Integer(*v as i64)
                    } else {
                        toml::Value::Float(*v)
                    };
                    p.push(Override { key: key.clone(), value });
                    p
                })
            })
            .collect();
    }
    points
}

fn sweep(config: &RunConfig, dir: &Path, clock: Instant) -> CliResult<RunManifest> {
    let spec = config.sweep.clone().ok_or_else(|| CliError::invalid("sweep", "the sweep command needs a [sweep] table"))?;
    let points = sweep_points(&spec);
    let outcomes: Vec<Value> = points
        .par_iter()
        .enumerate()
        .map(|(k, ovs)| {
            let name = format!("point_{k:04}");
            let sub = dir.join(&name);
            let mut table = config.source.clone();
            table.remove("sweep");
            let outcome = apply_overrides(&mut table, ovs)
                .and_then(|_| config_from_table(table))
                .and_then(|cfg| run(&cfg, spec.command, &sub));
            let grid: BTreeMap<&str, f64> =
                ovs.iter().map(|o| (o.key.as_str(), o.value.as_float().unwrap_or(f64::NAN))).collect();
            match outcome {
                Ok(m) => json!({ "dir": name, "grid": grid, "status": "ok", "drift": m.drift,
                                 "classification": m.classification, "results": m.results }),
                Err(e) => {
                    let _ = fs::create_dir_all(&sub).and_then(|_| {
                        fs::write(sub.join("error.json"), format!("{:#}\n", e.record())).map(|_| ())
                    });
                    json!({ "dir": name, "grid": grid, "status": "error", "error": e.record() })
                }
            }
        })
        .collect();
    let files = outcomes.iter().filter_map(|o| o["dir"].as_str()).map(|d| format!("{d}/")).collect();
    let failed = outcomes.iter().filter(|o| o["status"] == "error").count();
    let results = json!({ "command": spec.command, "points": outcomes, "failed": failed });
    finish(config, Command::Sweep, files, None, None, None, results, clock, dir)
}

/// Output directory: the flag, else the environment variable, else the default.
pub fn output_dir(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
    }
}

/// Reads, validates and runs a configuration file. On failure the error
/// record is also written to `error.json` in the output directory.
pub fn execute(config_path: &Path, command: Command, overrides: &[Override], dir: &Path) -> CliResult<RunManifest> {
    let outcome = fs::read_to_string(config_path)
        .map_err(|e| CliError::io(config_path, e))
        .and_then(|text| parse_config_with(&text, overrides))
        .and_then(|cfg| run(&cfg, command, dir));
    if let Err(e) = &outcome {
        if fs::create_dir_all(dir).is_ok() {
            let _ = fs::write(dir.join("error.json"), format!("{:#}\n", e.record()));
        }
    }
    outcome
}
