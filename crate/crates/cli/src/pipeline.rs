//! Subcommand pipelines.
//!
//! [`prepare`] validates the configuration and materializes the initial
//! data; nothing is computed or written before it succeeds. [`execute`]
//! returns every output file in memory together with the summary document.

use std::f64::consts::PI;
use std::sync::Arc;

use serde_json::{json, Value};

use gnslab::flows::{
    fd_evolve, ks_evolve, rate_fit, scale_track, Checkpoint, FlowControls, FlowStatus, RateModel, StepRecord,
    DIAGNOSTICS_HEADER, MASS_TOL, MIN_POINTS,
};
use gnslab::functionals::{total, FunctionalReport, ReportOptions, DEFAULT_TOL};
use gnslab::lift::{lift_report, lift_terms, BALANCE_TOL};
use gnslab::presets::{apply_bump, continuity_base, continuity_specs, perturbed_sigma, perturbed_v, Shape};
use gnslab::radial::{Kind, RadialDensity, DIVERGENCE_MARGIN};
use gnslab::stability::{continuity_probe, hls_fit, probe_fourth, probe_sixth, sweep, NORMALIZATION_TOL};
use gnslab::transport::{interpolation_check, w2_pairs, w2_radial, DEFAULT_LEVELS, MASS_MATCH_TOL};
use gnslab::{Density, Grid, Trajectory};

use crate::artifacts::{cell, num, sha256_hex, Artifacts, Table};
use crate::config::{default_class, DataSpec, ExperimentConfig, ProbeSpec};
use crate::data::{materialize, Datum};
use crate::failure::Failure;

/// Per-step tolerance of the monotonicity checks: `1e-8|x| + 1e-10`.
pub const MONOTONE_REL_TOL: f64 = 1e-8;
pub const MONOTONE_ABS_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyTarget {
    Monotone,
    W2,
    Interp,
    Continuity,
    Stability,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Deficit,
    Lift,
    Fit,
    EvolveFd,
    EvolveKs,
    Verify(VerifyTarget),
    Rates,
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::Deficit => "deficit".into(),
            Command::Lift => "lift".into(),
            Command::Fit => "fit".into(),
            Command::EvolveFd => "evolve-fd".into(),
            Command::EvolveKs => "evolve-ks".into(),
            Command::Rates => "rates".into(),
            Command::Verify(t) => format!(
                "verify {}",
                match t {
                    VerifyTarget::Monotone => "monotone",
                    VerifyTarget::W2 => "w2",
                    VerifyTarget::Interp => "interp",
                    VerifyTarget::Continuity => "continuity",
                    VerifyTarget::Stability => "stability",
                }
            ),
        }
    }

    /// Flow used by the command, if it evolves anything.
    fn flow(&self, cfg: &ExperimentConfig) -> Option<Flow> {
        match self {
            Command::EvolveFd => Some(Flow::Fd),
            Command::EvolveKs => Some(Flow::Ks),
            Command::Verify(VerifyTarget::Monotone) | Command::Rates => Some(cfg_flow(cfg)),
            Command::Verify(VerifyTarget::W2 | VerifyTarget::Interp) => Some(Flow::Fd),
            _ => None,
        }
    }

    /// Data used when the config lists none.
    fn default_data(&self) -> Vec<DataSpec> {
        match self {
            Command::Deficit | Command::Lift | Command::Fit => vec![DataSpec::V { lambda: 1.0 }],
            Command::Verify(VerifyTarget::Continuity | VerifyTarget::Stability) => vec![],
            _ => vec![DataSpec::Sigma {
                kappa: None,
                mass: None,
                dilation: 1.0,
            }],
        }
    }

    /// Probe kinds the command consumes.
    fn accepts(&self, p: &ProbeSpec) -> bool {
        match self {
            Command::Fit | Command::Verify(VerifyTarget::Stability) => {
                matches!(p, ProbeSpec::Sixth { .. } | ProbeSpec::Fourth { .. } | ProbeSpec::Hls { .. })
            }
            Command::Verify(VerifyTarget::Interp) => matches!(p, ProbeSpec::Interp { .. }),
            Command::Verify(VerifyTarget::Continuity) => matches!(p, ProbeSpec::Continuity { .. }),
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Fd,
    Ks,
}

impl Flow {
    fn tag(self) -> &'static str {
        match self {
            Flow::Fd => "fd",
            Flow::Ks => "ks",
        }
    }
}

fn cfg_flow(cfg: &ExperimentConfig) -> Flow {
    if cfg.run.flow == "ks" {
        Flow::Ks
    } else {
        Flow::Fd
    }
}

/// A validated experiment ready to run.
pub struct Prepared {
    pub command: Command,
    pub cfg: ExperimentConfig,
    pub grid: Arc<Grid>,
    pub data: Vec<Datum>,
    pub controls: FlowControls<f64>,
    /// SHA-256 of the config file as read, if one was given.
    pub source_sha256: Option<String>,
}

/// Everything a run produced.
pub struct Outcome {
    pub artifacts: Artifacts,
    pub summary: Value,
    /// Labels of runs that stopped before `t_end`, with the reason.
    pub incomplete: Vec<String>,
}

/// Validates `cfg` for `command` and builds the initial data.
pub fn prepare(command: Command, mut cfg: ExperimentConfig, source: Option<&[u8]>) -> Result<Prepared, Failure> {
    cfg.validate()?;
    for (i, p) in cfg.probes.iter().enumerate() {
        if !command.accepts(p) {
            return Err(Failure::field(
                &format!("probes[{i}]"),
                format!("probe '{}' is not used by {}", p.tag(), command.name()),
            ));
        }
    }
    if cfg.initial.is_empty() {
        cfg.initial = command.default_data();
    }
    let controls = cfg.run.controls.resolve();
    let grid = crate::data::make_grid(&cfg)?;
    let data = materialize(&cfg, &grid)?;
    if let Some(flow) = command.flow(&cfg) {
        if matches!(command, Command::Verify(VerifyTarget::W2 | VerifyTarget::Interp)) && cfg.run.flow != "fd" {
            return Err(Failure::field(
                "run.flow",
                format!("{} needs the fast diffusion flow (run.flow = \"fd\")", command.name()),
            ));
        }
        for d in &data {
            check_flow_input(flow, d).map_err(|e| e.context(&d.label))?;
        }
    }
    if command == Command::Rates {
        check_rate_window(&cfg, &controls)?;
    }
    Ok(Prepared {
        command,
        cfg,
        grid,
        data,
        controls,
        source_sha256: source.map(sha256_hex),
    })
}

fn check_flow_input(flow: Flow, d: &Datum) -> Result<(), Failure> {
    if flow == Flow::Fd {
        let rho = d.density();
        let m = total(&rho)?.value();
        let target = d.mass.unwrap_or(m);
        if !(((m - target) / target).abs() <= MASS_TOL) {
            return Err(Failure::validation(format!(
                "initial mass {m} differs from M = {target} by more than {MASS_TOL} relative"
            )));
        }
    }
    if !(d.kappa > 0.0 && d.kappa.is_finite()) {
        return Err(Failure::validation("kappa must be positive"));
    }
    Ok(())
}

fn rate_window(cfg: &ExperimentConfig) -> (f64, f64) {
    match cfg.rates.window {
        Some([lo, hi]) => (lo, hi),
        None => (1.0, cfg.run.t_end),
    }
}

fn check_rate_window(cfg: &ExperimentConfig, controls: &FlowControls<f64>) -> Result<(), Failure> {
    let (lo, hi) = rate_window(cfg);
    if !(lo >= 0.0 && lo < hi && hi <= cfg.run.t_end) {
        return Err(Failure::field(
            "rates.window",
            format!("rate window [{lo}, {hi}] leaves the run span [0, {}]", cfg.run.t_end),
        ));
    }
    let n = controls
        .sampling
        .times(cfg.run.t_end)
        .iter()
        .filter(|t| **t >= lo && **t <= hi)
        .count();
    if n < MIN_POINTS {
        return Err(Failure::field(
            "rates.window",
            format!("rate window [{lo}, {hi}] holds {n} samples, fewer than {MIN_POINTS}"),
        ));
    }
    Ok(())
}

/// Runs the prepared pipeline; `log` receives progress lines.
pub fn execute(p: &Prepared, log: &dyn Fn(&str)) -> Result<Outcome, Failure> {
    let mut out = Outcome {
        artifacts: Artifacts::default(),
        summary: json!({}),
        incomplete: Vec::new(),
    };
    let body = match p.command {
        Command::Deficit => deficit(p, &mut out)?,
        Command::Lift => lift(p, &mut out)?,
        Command::Fit => fit(p, &mut out)?,
        Command::EvolveFd | Command::EvolveKs => evolve(p, &mut out, log)?,
        Command::Verify(VerifyTarget::Monotone) => monotone(p, &mut out, log)?,
        Command::Verify(VerifyTarget::W2) => transport_bounds(p, &mut out, log, false)?,
        Command::Verify(VerifyTarget::Interp) => transport_bounds(p, &mut out, log, true)?,
        Command::Verify(VerifyTarget::Continuity) => continuity(p, &mut out)?,
        Command::Verify(VerifyTarget::Stability) => stability(p, &mut out)?,
        Command::Rates => rates(p, &mut out, log)?,
    };
    let mut summary = json!({
        "command": p.command.name(),
        "seed": p.cfg.seed,
        "probes": [],
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut summary, body) {
        dst.extend(src);
    }
    if p.cfg.output.wants("json") {
        out.artifacts.add_json("summary.json", &summary);
    }
    let manifest = manifest(p, &out.artifacts);
    out.artifacts.add_json("manifest.json", &manifest);
    out.summary = summary;
    Ok(out)
}

/// Config with the output directory blanked, so the hash names the experiment only.
fn canonical_config(cfg: &ExperimentConfig) -> Value {
    let mut c = cfg.clone();
    c.output.dir = Default::default();
    serde_json::to_value(&c).expect("config serializes")
}

fn manifest(p: &Prepared, files: &Artifacts) -> Value {
    let canonical = canonical_config(&p.cfg);
    let hash = sha256_hex(&serde_json::to_vec(&canonical).expect("serializes"));
    let g = p.cfg.grid;
    json!({
        "tool": "gnslab",
        "format_version": 1,
        "command": p.command.name(),
        "versions": { "gnslab": gnslab::VERSION, "gnslab-cli": env!("CARGO_PKG_VERSION") },
        "config_sha256": hash,
        "config_file_sha256": p.source_sha256,
        "seed": p.cfg.seed,
        "grid": { "r_max": g.r_max, "n_cells": g.n_cells, "stretch": g.stretch },
        "controls": serde_json::to_value(p.controls).expect("serializes"),
        "tolerances": {
            "functional": DEFAULT_TOL,
            "tail_divergence_margin": DIVERGENCE_MARGIN,
            "normalization": NORMALIZATION_TOL,
            "balance": BALANCE_TOL,
            "flow_mass": MASS_TOL,
            "monotone_rel": MONOTONE_REL_TOL,
            "monotone_abs": MONOTONE_ABS_TOL,
            "transport_mass_match": MASS_MATCH_TOL,
            "transport_levels": DEFAULT_LEVELS,
            "rate_min_points": MIN_POINTS,
            "disslem_t_max": DISSLEM_T_MAX,
        },
        "config": canonical,
        "files": files.listing(),
    })
}

fn csv_enabled(p: &Prepared) -> bool {
    p.cfg.output.wants("csv")
}

fn labels(p: &Prepared) -> Vec<Value> {
    p.data.iter().map(|d| json!(d.label)).collect()
}

// ---------------------------------------------------------------- deficit

fn deficit(p: &Prepared, out: &mut Outcome) -> Result<Value, Failure> {
    let reports: Vec<Result<FunctionalReport<f64>, Failure>> = sweep(&p.data, |d| {
        let opts = ReportOptions {
            kappa: d.kappa,
            mass: d.mass,
            ..ReportOptions::default()
        };
        FunctionalReport::evaluate(&d.density(), &opts).map_err(|e| Failure::from(e).context(&d.label))
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    if csv_enabled(p) {
        if let Some(first) = reports.first() {
            let mut text = format!("label,{}\n", first.csv_header());
            for (d, r) in p.data.iter().zip(&reports) {
                text.push_str(&format!("{},{}\n", d.label, r.csv_row()));
            }
            out.artifacts.add("deficit.csv", text.into_bytes());
        }
    }
    let data: Vec<Value> = p
        .data
        .iter()
        .zip(&reports)
        .map(|(d, r)| json!({ "label": d.label, "report": r.to_json() }))
        .collect();
    Ok(json!({ "data": data }))
}

// ---------------------------------------------------------------- lift

fn lift(p: &Prepared, out: &mut Outcome) -> Result<Value, Failure> {
    let rows = sweep(&p.data, |d| -> Result<_, Failure> {
        let u = d.profile();
        let (_, bal) = lift_report(&u).map_err(|e| Failure::from(e).context(&d.label))?;
        let raw = lift_terms(&u).map_err(|e| Failure::from(e).context(&d.label))?;
        Ok((bal, raw))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let header = [
        "label",
        "mu_balance",
        "gns_side",
        "sobolev_side",
        "residual",
        "f_norm4_4",
        "grad_f_sq",
        "excluded_fraction",
        "tol",
        "raw_gns_side",
        "raw_sobolev_side",
        "raw_correction",
        "raw_identity_residual",
    ];
    let mut t = Table::new(&header);
    let mut data = Vec::new();
    for (d, (b, r)) in p.data.iter().zip(&rows) {
        t.row(vec![
            d.label.clone(),
            cell(b.mu_balance),
            cell(b.gns_side),
            cell(b.sobolev_side),
            cell(b.residual),
            cell(b.f_norm4.powi(4)),
            cell(b.grad_f_sq),
            cell(b.excluded_fraction),
            cell(b.tol),
            cell(r.gns_side),
            cell(r.sobolev_side),
            cell(r.correction),
            cell(r.identity_residual),
        ]);
        data.push(json!({
            "label": d.label,
            "balanced": serde_json::to_value(b).expect("serializes"),
            "unbalanced": serde_json::to_value(r).expect("serializes"),
        }));
    }
    if csv_enabled(p) {
        out.artifacts.add("lift.csv", t.into_bytes());
    }
    let max = |f: &dyn Fn(&(gnslab::lift::LiftReport<f64>, gnslab::lift::LiftReport<f64>)) -> f64| {
        rows.iter().map(f).fold(0.0_f64, f64::max)
    };
    Ok(json!({
        "data": data,
        "max_residual": num(max(&|(b, _)| b.residual)),
        "max_identity_residual": num(max(&|(_, r)| r.identity_residual)),
    }))
}

// ---------------------------------------------------------------- fit

struct ProbeRow {
    label: String,
    probe: &'static str,
    param: f64,
    deficit: f64,
    distance: f64,
    exponent: f64,
    ratio: f64,
    fit: gnslab::Fit,
}

const PROBE_HEADER: [&str; 14] = [
    "label",
    "probe",
    "param",
    "deficit",
    "distance_l1",
    "exponent",
    "ratio",
    "lambda_star",
    "mu_star",
    "offset_star",
    "converged",
    "boundary_hit",
    "multimodal",
    "evaluations",
];

fn probe_cells(r: &ProbeRow) -> Vec<String> {
    vec![
        r.label.clone(),
        r.probe.to_string(),
        cell(r.param),
        cell(r.deficit),
        cell(r.distance),
        cell(r.exponent),
        cell(r.ratio),
        cell(r.fit.lambda_star),
        cell(r.fit.mu_star),
        cell(r.fit.offset_star),
        r.fit.converged.to_string(),
        r.fit.boundary_hit.to_string(),
        r.fit.multimodal.to_string(),
        r.fit.evaluations.to_string(),
    ]
}

fn run_probe(label: &str, d: &Datum, probe: &ProbeSpec) -> Result<ProbeRow, Failure> {
    let ctx = |e: gnslab::LabError| Failure::from(e).context(label);
    let (name, param, fit, sp) = match probe {
        ProbeSpec::Sixth { search_offset } => {
            let (f, s) = probe_sixth(&d.profile(), *search_offset).map_err(ctx)?;
            ("sixth", if *search_offset { 1.0 } else { 0.0 }, f, s)
        }
        ProbeSpec::Fourth { p } => {
            let (f, s) = probe_fourth(&d.profile(), *p).map_err(ctx)?;
            ("fourth", *p, f, s)
        }
        ProbeSpec::Hls { eps } => {
            let h = hls_fit(&d.density(), *eps).map_err(ctx)?;
            ("hls", *eps, h.fit, h.probe)
        }
        other => return Err(Failure::validation(format!("probe '{}' is not a fit probe", other.tag()))),
    };
    Ok(ProbeRow {
        label: label.to_string(),
        probe: name,
        param,
        deficit: sp.deficit,
        distance: sp.distance_l1,
        exponent: sp.exponent,
        ratio: sp.ratio,
        fit,
    })
}

fn probe_summary(spec: &ProbeSpec, rows: &[&ProbeRow]) -> Value {
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    json!({
        "spec": serde_json::to_value(spec).expect("serializes"),
        "count": rows.len(),
        "max_ratio": num(ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        "min_ratio": num(ratios.iter().cloned().fold(f64::INFINITY, f64::min)),
        "all_converged": rows.iter().all(|r| r.fit.converged),
    })
}

fn fit(p: &Prepared, out: &mut Outcome) -> Result<Value, Failure> {
    let jobs: Vec<(usize, usize)> = (0..p.cfg.probes.len())
        .flat_map(|k| (0..p.data.len()).map(move |i| (k, i)))
        .collect();
    let rows = sweep(&jobs, |(k, i)| run_probe(&p.data[*i].label, &p.data[*i], &p.cfg.probes[*k]));
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(&PROBE_HEADER);
    for r in &rows {
        t.row(probe_cells(r));
    }
    if csv_enabled(p) && !rows.is_empty() {
        out.artifacts.add("fit.csv", t.into_bytes());
    }
    let probes: Vec<Value> = p
        .cfg
        .probes
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let mine: Vec<&ProbeRow> = jobs.iter().zip(&rows).filter(|((kk, _), _)| *kk == k).map(|(_, r)| r).collect();
            probe_summary(spec, &mine)
        })
        .collect();
    Ok(json!({ "data": labels(p), "probes": probes }))
}

// ---------------------------------------------------------------- flows

fn run_flow(flow: Flow, d: &Datum, t_end: f64, controls: &FlowControls<f64>) -> Result<Trajectory, Failure> {
    let rho = d.density();
    let res = match flow {
        Flow::Fd => {
            let m = d.mass.map_or_else(|| total(&rho).map(|i| i.value()), Ok)?;
            fd_evolve(&rho, d.kappa, m, t_end, controls)
        }
        Flow::Ks => ks_evolve(&rho, d.kappa, t_end, controls),
    };
    res.map_err(|e| Failure::from(e).context(&d.label))
}

/// Largest increase of `key` between consecutive steps beyond the per-step tolerance.
pub fn worst_increase(steps: &[StepRecord<f64>], key: impl Fn(&StepRecord<f64>) -> f64) -> f64 {
    steps
        .windows(2)
        .map(|w| key(&w[1]) - key(&w[0]) - (MONOTONE_REL_TOL * key(&w[0]).abs() + MONOTONE_ABS_TOL))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Last time entering the dissipation-identity error; later, `D` decays
/// below the accuracy of its tail closure.
pub const DISSLEM_T_MAX: f64 = 1.0;

/// Worst relative gap between `−ΔF/Δt` and `(8π/M)·D` at the step midpoint,
/// over steps ending by [`DISSLEM_T_MAX`].
pub fn dissipation_identity_error(traj: &Trajectory) -> f64 {
    let k = 8.0 * PI / traj.meta.mass;
    traj.meta
        .steps
        .windows(2)
        .filter(|w| w[1].t <= DISSLEM_T_MAX * (1.0 + 1e-12))
        .map(|w| {
            let lhs = -(w[1].f - w[0].f) / w[1].dt;
            let rhs = k * 0.5 * (w[0].d + w[1].d);
            ((lhs - rhs) / rhs).abs()
        })
        .fold(0.0, f64::max)
}

/// `H(0) − H(T) − Σ D Δt`, dissipation at the step end.
pub fn entdec_slack(traj: &Trajectory) -> f64 {
    let s = &traj.meta.steps;
    match (s.first(), s.last()) {
        (Some(a), Some(b)) => a.h - b.h - s.iter().skip(1).map(|r| r.d * r.dt).sum::<f64>(),
        _ => f64::NAN,
    }
}

fn sup_drift(traj: &Trajectory, initial: &Density) -> f64 {
    traj.states
        .iter()
        .flat_map(|(_, s)| s.values().iter().zip(initial.values()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

/// Summary of one trajectory shared by every flow command.
fn run_record(flow: Flow, d: &Datum, traj: &Trajectory) -> Value {
    let s = &traj.meta.steps;
    let h_inc = worst_increase(s, |r| r.h);
    let f_inc = worst_increase(s, |r| r.f);
    let mut v = json!({
        "label": d.label,
        "flow": flow.tag(),
        "kappa": d.kappa,
        "mass": traj.meta.mass,
        "status": serde_json::to_value(&traj.status).expect("serializes"),
        "mass_regime": serde_json::to_value(traj.meta.mass_regime).expect("serializes"),
        "accepted_steps": traj.meta.accepted_steps,
        "rejected_steps": traj.meta.rejected_steps,
        "max_mass_drift": num(traj.meta.max_mass_drift),
        "sup_drift": num(sup_drift(traj, &d.density())),
        "h_worst_increase": num(h_inc.max(-f64::MAX)),
        "f_worst_increase": num(f_inc.max(-f64::MAX)),
        "h_monotone": h_inc <= 0.0,
        "f_monotone": f_inc <= 0.0,
        "h_start": num(s.first().map_or(f64::NAN, |r| r.h)),
        "h_end": num(s.last().map_or(f64::NAN, |r| r.h)),
        "f_start": num(s.first().map_or(f64::NAN, |r| r.f)),
        "f_end": num(s.last().map_or(f64::NAN, |r| r.f)),
        "t_end": num(traj.times.last().copied().unwrap_or(f64::NAN)),
    });
    match flow {
        Flow::Fd => v["disslem_error"] = num(dissipation_identity_error(traj)),
        Flow::Ks => v["entdec_slack"] = num(entdec_slack(traj)),
    }
    v
}

fn diagnostics_csv(traj: &Trajectory, stride: usize) -> Vec<u8> {
    let n = traj.diagnostics.len();
    let mut text = String::from(DIAGNOSTICS_HEADER);
    text.push('\n');
    for (i, d) in traj.diagnostics.iter().enumerate() {
        if i % stride == 0 || i + 1 == n {
            text.push_str(&d.csv_row());
            text.push('\n');
        }
    }
    text.into_bytes()
}

fn steps_csv(traj: &Trajectory) -> Vec<u8> {
    let mut t = Table::new(&["t", "dt", "iterations", "mass", "H", "F", "D"]);
    for r in &traj.meta.steps {
        t.row(vec![
            cell(r.t),
            cell(r.dt),
            r.iterations.to_string(),
            cell(r.mass),
            cell(r.h),
            cell(r.f),
            cell(r.d),
        ]);
    }
    t.into_bytes()
}

fn plot(xy: impl Iterator<Item = (f64, f64)>) -> Vec<u8> {
    let mut t = Table::new(&["x", "y"]);
    for (x, y) in xy {
        t.row(vec![cell(x), cell(y)]);
    }
    t.into_bytes()
}

/// Writes the per-run files of one trajectory under `runs/<label>/`.
fn trajectory_files(p: &Prepared, d: &Datum, traj: &Trajectory, out: &mut Outcome) {
    let dir = format!("runs/{}", d.label);
    if csv_enabled(p) {
        out.artifacts
            .add(format!("{dir}/diagnostics.csv"), diagnostics_csv(traj, p.cfg.output.stride));
        out.artifacts.add(format!("{dir}/steps.csv"), steps_csv(traj));
    }
    if p.cfg.output.wants("plot") {
        let diag = &traj.diagnostics;
        out.artifacts
            .add(format!("{dir}/plot_H.csv"), plot(diag.iter().map(|r| (r.t, r.h))));
        out.artifacts
            .add(format!("{dir}/plot_F.csv"), plot(diag.iter().map(|r| (r.t, r.f))));
        out.artifacts.add(
            format!("{dir}/plot_hls_deficit.csv"),
            plot(diag.iter().map(|r| (r.t, r.hls_deficit))),
        );
    }
    if p.cfg.output.checkpoints {
        if let Some((t, state)) = traj.states.last() {
            let cp = Checkpoint {
                state: state.clone(),
                t: *t,
                kappa: traj.meta.kappa,
                mass: traj.meta.mass,
            };
            out.artifacts.add(format!("{dir}/final.ckpt"), cp.to_text().into_bytes());
        }
    }
    if let FlowStatus::Aborted { t, reason } = &traj.status {
        out.incomplete.push(format!("{}: aborted at t = {t}: {reason}", d.label));
    }
}

fn run_all(p: &Prepared, flow: Flow, log: &dyn Fn(&str)) -> Result<Vec<Trajectory>, Failure> {
    let trajs = sweep(&p.data, |d| run_flow(flow, d, p.cfg.run.t_end, &p.controls));
    let trajs = trajs.into_iter().collect::<Result<Vec<_>, _>>()?;
    for (d, t) in p.data.iter().zip(&trajs) {
        log(&format!(
            "{} {}: {} steps, {:?}",
            flow.tag(),
            d.label,
            t.meta.accepted_steps,
            t.status
        ));
    }
    Ok(trajs)
}

fn evolve(p: &Prepared, out: &mut Outcome, log: &dyn Fn(&str)) -> Result<Value, Failure> {
    let flow = p.command.flow(&p.cfg).expect("evolve commands have a flow");
    let trajs = run_all(p, flow, log)?;
    let mut runs = Vec::new();
    for (d, traj) in p.data.iter().zip(&trajs) {
        trajectory_files(p, d, traj, out);
        let mut rec = run_record(flow, d, traj);
        rec["final"] = traj
            .diagnostics
            .last()
            .map_or(Value::Null, |r| serde_json::to_value(r).expect("serializes"));
        runs.push(rec);
    }
    Ok(json!({ "runs": runs }))
}

// ---------------------------------------------------------------- verify

fn monotone(p: &Prepared, out: &mut Outcome, log: &dyn Fn(&str)) -> Result<Value, Failure> {
    let flow = cfg_flow(&p.cfg);
    let trajs = run_all(p, flow, log)?;
    let header = [
        "label",
        "flow",
        "completed",
        "steps",
        "h_worst_increase",
        "f_worst_increase",
        "max_mass_drift",
        "disslem_error",
        "entdec_slack",
    ];
    let mut t = Table::new(&header);
    let mut runs = Vec::new();
    for (d, traj) in p.data.iter().zip(&trajs) {
        let s = &traj.meta.steps;
        let (dis, ent) = match flow {
            Flow::Fd => (dissipation_identity_error(traj), f64::NAN),
            Flow::Ks => (f64::NAN, entdec_slack(traj)),
        };
        t.row(vec![
            d.label.clone(),
            flow.tag().into(),
            traj.completed().to_string(),
            traj.meta.accepted_steps.to_string(),
            cell(worst_increase(s, |r| r.h)),
            cell(worst_increase(s, |r| r.f)),
            cell(traj.meta.max_mass_drift),
            cell(dis),
            cell(ent),
        ]);
        if let FlowStatus::Aborted { t, reason } = &traj.status {
            out.incomplete.push(format!("{}: aborted at t = {t}: {reason}", d.label));
        }
        runs.push(run_record(flow, d, traj));
    }
    if csv_enabled(p) {
        out.artifacts.add("monotone.csv", t.into_bytes());
    }
    let all = |key: &str| runs.iter().all(|r| r[key] == json!(true));
    let fold = |key: &str, init: f64, f: fn(f64, f64) -> f64| {
        runs.iter().map(|r| r[key].as_f64().unwrap_or(f64::NAN)).fold(init, f)
    };
    let mut checks = json!({
        "all_completed": trajs.iter().all(|t| t.completed()),
        "all_h_monotone": all("h_monotone"),
        "all_f_monotone": all("f_monotone"),
        "max_mass_drift": num(fold("max_mass_drift", 0.0, f64::max)),
    });
    match flow {
        Flow::Fd => checks["max_disslem_error"] = num(fold("disslem_error", 0.0, f64::max)),
        Flow::Ks => checks["min_entdec_slack"] = num(fold("entdec_slack", f64::INFINITY, f64::min)),
    }
    Ok(json!({ "runs": runs, "checks": checks }))
}

/// Uniform disks of radius `edges[k]`, exact in the cell measure.
fn disk(grid: &Arc<Grid>, k: usize, mass: f64) -> Result<(Density, f64), Failure> {
    let a = grid.edges()[k];
    let rho = mass / (PI * a * a);
    let values = (0..grid.len()).map(|i| if i < k { rho } else { 0.0 }).collect();
    Ok((RadialDensity::new(grid.clone(), values, Kind::Density)?, a))
}

/// `W₂²` of three uniform-disk pairs against `M(a − b)²/2`.
fn disk_anchors(p: &Prepared) -> Result<Vec<Value>, Failure> {
    let n = p.grid.len();
    // cell pairs chosen on 4096 cells, scaled to the configured grid
    let at = |k: usize| (k * n / 4096).clamp(1, n);
    let mass = p.cfg.run.mass;
    let pairs = [(at(1500), at(2000)), (at(1800), at(2600)), (at(2200), at(2200) + 1)];
    pairs
        .iter()
        .filter(|(a, b)| *b <= n && a != b)
        .map(|&(ka, kb)| {
            let (ra, a) = disk(&p.grid, ka, mass)?;
            let (rb, b) = disk(&p.grid, kb, mass)?;
            let w = w2_radial(&ra, &rb)?;
            let exact = mass * (a - b) * (a - b) / 2.0;
            Ok(json!({
                "radius_a": a,
                "radius_b": b,
                "w2_sq": num(w.value()),
                "exact": num(exact),
                "relative_error": num((w.value() / exact - 1.0).abs()),
            }))
        })
        .collect()
}

fn transport_bounds(p: &Prepared, out: &mut Outcome, log: &dyn Fn(&str), interp: bool) -> Result<Value, Failure> {
    let trajs = run_all(p, Flow::Fd, log)?;
    let (q, k_bound) = p
        .cfg
        .probes
        .iter()
        .find_map(|pr| match pr {
            ProbeSpec::Interp { q, k_bound } => Some((*q, *k_bound)),
            _ => None,
        })
        .unwrap_or((3.0, 1e4));
    let mut t = if interp {
        Table::new(&["label", "s", "t", "w2_sq", "lhs", "rhs", "slack"])
    } else {
        Table::new(&["label", "s", "t", "w2_sq", "h_bound", "slack", "divergent"])
    };
    let mut plot_rows = Vec::new();
    let mut runs = Vec::new();
    let mut min_slack = f64::INFINITY;
    let mut pairs_total = 0usize;
    for (d, traj) in p.data.iter().zip(&trajs) {
        let states: Vec<Density> = traj.states.iter().map(|(_, s)| s.clone()).collect();
        let times: Vec<f64> = traj.states.iter().map(|(t, _)| *t).collect();
        let h0 = traj.diagnostics[0].h;
        let pairs = w2_pairs(&states).map_err(|e| Failure::from(e).context(&d.label))?;
        let mut run_min = f64::INFINITY;
        if interp {
            let recs = sweep(&pairs, |((i, j), _)| interpolation_check(&states[*i], &states[*j], q, k_bound));
            for (((i, j), _), rec) in pairs.iter().zip(recs) {
                let rec = rec.map_err(|e| Failure::from(e).context(&d.label))?;
                run_min = run_min.min(rec.slack);
                t.row(vec![
                    d.label.clone(),
                    cell(times[*i]),
                    cell(times[*j]),
                    cell(rec.w2.value()),
                    cell(rec.lhs),
                    cell(rec.rhs),
                    cell(rec.slack),
                ]);
                plot_rows.push((rec.w2.value(), rec.lhs));
            }
        } else {
            for ((i, j), w) in &pairs {
                let bound = h0 * (times[*j] - times[*i]);
                let slack = bound - w.value();
                run_min = run_min.min(slack);
                t.row(vec![
                    d.label.clone(),
                    cell(times[*i]),
                    cell(times[*j]),
                    cell(w.value()),
                    cell(bound),
                    cell(slack),
                    w.divergent.to_string(),
                ]);
                plot_rows.push((times[*j] - times[*i], w.value()));
            }
        }
        pairs_total += pairs.len();
        min_slack = min_slack.min(run_min);
        runs.push(json!({
            "label": d.label,
            "pairs": pairs.len(),
            "h0": num(h0),
            "min_slack": num(run_min),
            "completed": traj.completed(),
        }));
        if let FlowStatus::Aborted { t, reason } = &traj.status {
            out.incomplete.push(format!("{}: aborted at t = {t}: {reason}", d.label));
        }
    }
    let name = if interp { "interp" } else { "w2" };
    if csv_enabled(p) {
        out.artifacts.add(format!("{name}.csv"), t.into_bytes());
    }
    if p.cfg.output.wants("plot") {
        out.artifacts.add(format!("plot_{name}.csv"), plot(plot_rows.into_iter()));
    }
    let mut body = json!({
        "runs": runs,
        "checks": { "pairs": pairs_total, "min_slack": num(min_slack), "all_hold": min_slack >= 0.0 },
    });
    if interp {
        body["probes"] = json!([{ "kind": "interp", "q": q, "k_bound": k_bound, "min_slack": num(min_slack) }]);
    } else {
        let anchors = disk_anchors(p)?;
        let worst = anchors
            .iter()
            .map(|a| a["relative_error"].as_f64().unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        body["anchors"] = json!(anchors);
        body["checks"]["max_anchor_error"] = num(worst);
    }
    Ok(body)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = pts
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = logs.len() as f64;
    if logs.len() < 2 {
        return f64::NAN;
    }
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn continuity(p: &Prepared, out: &mut Outcome) -> Result<Value, Failure> {
    let spec = p
        .cfg
        .probes
        .first()
        .cloned()
        .unwrap_or(ProbeSpec::Continuity {
            pairs: 50,
            mass: 1.0,
            class: default_class(),
        });
    let ProbeSpec::Continuity { pairs, mass, class } = spec.clone() else {
        unreachable!("prepare admits only continuity probes here")
    };
    let base = continuity_base(p.grid.clone(), mass)?;
    let specs = continuity_specs(pairs, p.cfg.seed);
    let recs = sweep(&specs, |s| -> Result<_, Failure> {
        let other = apply_bump(&base, s)?;
        Ok(continuity_probe(&base, &other, &class)?)
    });
    let recs = recs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(&[
        "index", "amplitude", "center", "width", "sign", "delta_f", "delta_s", "delta_u", "l1",
    ]);
    for (i, (s, r)) in specs.iter().zip(&recs).enumerate() {
        t.row(vec![
            i.to_string(),
            cell(s.amplitude),
            cell(s.center),
            cell(s.width),
            cell(s.sign),
            cell(r.delta_f),
            cell(r.delta_s),
            cell(r.delta_u),
            cell(r.l1),
        ]);
    }
    if csv_enabled(p) {
        out.artifacts.add("continuity.csv", t.into_bytes());
    }
    if p.cfg.output.wants("plot") {
        out.artifacts
            .add("plot_continuity.csv", plot(recs.iter().map(|r| (r.l1, r.delta_f))));
    }
    let slope = loglog_slope(&recs.iter().map(|r| (r.l1, r.delta_f)).collect::<Vec<_>>());
    // the L¹|log L¹| modulus is meaningful for L¹ < 1
    let small: Vec<_> = recs.iter().filter(|r| r.l1 > 0.0 && r.l1 < 1.0).collect();
    let c_entropy = small
        .iter()
        .map(|r| r.delta_s / (r.l1 * r.l1.ln().abs()))
        .fold(0.0, f64::max);
    Ok(json!({
        "probes": [{
            "spec": serde_json::to_value(&spec).expect("serializes"),
            "pairs": recs.len(),
            "loglog_slope": num(slope),
            "entropy_constant": num(c_entropy),
            "entropy_pairs": small.len(),
        }],
        "checks": {
            "loglog_slope": num(slope),
            "entropy_constant": num(c_entropy),
            "entropy_constant_finite": c_entropy.is_finite() && !small.is_empty(),
        },
    }))
}

fn stability(p: &Prepared, out: &mut Outcome) -> Result<Value, Failure> {
    let probes = if p.cfg.probes.is_empty() {
        vec![
            ProbeSpec::Sixth { search_offset: false },
            ProbeSpec::Fourth { p: 1.5 },
            ProbeSpec::Hls { eps: 0.1 },
        ]
    } else {
        p.cfg.probes.clone()
    };
    let shapes: Vec<Shape> = p
        .cfg
        .sweep
        .shapes
        .iter()
        .map(|s| s.parse::<Shape>())
        .collect::<Result<_, _>>()?;
    let mut data = Vec::new();
    for sh in &shapes {
        for eps in &p.cfg.sweep.eps {
            let label = format!("{sh}_{eps}");
            let u = perturbed_v(p.grid.clone(), *sh, *eps)?;
            let rho = perturbed_sigma(p.grid.clone(), p.cfg.run.kappa, p.cfg.run.mass, *sh, *eps)?;
            data.push((*sh, *eps, label, u, rho));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..probes.len())
        .flat_map(|k| (0..data.len()).map(move |i| (k, i)))
        .collect();
    let rows = sweep(&jobs, |(k, i)| {
        let (_, _, label, u, rho) = &data[*i];
        let d = match probes[*k] {
            ProbeSpec::Hls { .. } => rho,
            _ => u,
        };
        let datum = Datum {
            label: label.clone(),
            state: d.clone(),
            kappa: p.cfg.run.kappa,
            mass: None,
        };
        run_probe(label, &datum, &probes[*k])
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut header = vec!["shape", "eps"];
    header.extend_from_slice(&PROBE_HEADER);
    let mut t = Table::new(&header);
    for ((_, i), r) in jobs.iter().zip(&rows) {
        let (sh, eps, ..) = &data[*i];
        let mut cells = vec![sh.to_string(), cell(*eps)];
        cells.extend(probe_cells(r));
        t.row(cells);
    }
    if csv_enabled(p) {
        out.artifacts.add("stability.csv", t.into_bytes());
    }
    let mut summaries = Vec::new();
    let mut worst = 0.0_f64;
    for (k, spec) in probes.iter().enumerate() {
        let mut spreads = Vec::new();
        for sh in &shapes {
            let ratios: Vec<f64> = jobs
                .iter()
                .zip(&rows)
                .filter(|((kk, i), _)| *kk == k && data[*i].0 == *sh)
                .map(|(_, r)| r.ratio)
                .collect();
            let ok = ratios.iter().all(|r| r.is_finite() && *r > 0.0);
            let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let spread = if ok { max / min } else { f64::INFINITY };
            worst = worst.max(spread);
            spreads.push(json!({ "shape": sh.to_string(), "ratios": ratios.iter().map(|r| num(*r)).collect::<Vec<_>>(), "spread": num(spread) }));
        }
        summaries.push(json!({
            "spec": serde_json::to_value(spec).expect("serializes"),
            "shapes": spreads,
        }));
    }
    Ok(json!({ "probes": summaries, "checks": { "max_spread": num(worst) } }))
}

// ---------------------------------------------------------------- rates

fn rates(p: &Prepared, out: &mut Outcome, log: &dyn Fn(&str)) -> Result<Value, Failure> {
    let flow = cfg_flow(&p.cfg);
    let trajs = run_all(p, flow, log)?;
    let model: RateModel = p.cfg.rates.model.parse()?;
    let window = rate_window(&p.cfg);
    let mut rt = Table::new(&[
        "label", "model", "exponent", "prefactor", "residual", "window_lo", "window_hi", "points",
    ]);
    let mut runs = Vec::new();
    for (d, traj) in p.data.iter().zip(&trajs) {
        trajectory_files(p, d, traj, out);
        let series: Vec<(f64, f64)> = traj.diagnostics.iter().map(|r| (r.t, r.hls_deficit)).collect();
        let fit = rate_fit(&series, model, window).map_err(|e| Failure::from(e).context(&d.label))?;
        rt.row(vec![
            d.label.clone(),
            p.cfg.rates.model.clone(),
            cell(fit.exponent),
            cell(fit.prefactor),
            cell(fit.residual),
            cell(fit.window.0),
            cell(fit.window.1),
            fit.points.to_string(),
        ]);
        let track = scale_track(traj);
        let mut st = Table::new(&["t", "mu", "distance_l1", "converged", "decay_probe"]);
        for s in &track {
            st.row(vec![
                cell(s.t),
                cell(s.mu),
                cell(s.distance_l1),
                s.converged.to_string(),
                cell(s.decay_probe),
            ]);
        }
        if csv_enabled(p) {
            out.artifacts.add(format!("runs/{}/scale.csv", d.label), st.into_bytes());
        }
        let in_window: Vec<_> = track.iter().filter(|s| s.t >= window.0 && s.t <= window.1).collect();
        let gaps: Vec<f64> = in_window.iter().map(|s| s.mu - d.kappa).collect();
        let toward = gaps.iter().all(|g| g.is_finite())
            && gaps.windows(2).all(|w| w[1].abs() < w[0].abs() && w[1] * w[0] > 0.0);
        let probe_start = in_window.first().map_or(f64::NAN, |s| s.decay_probe);
        let probe_max = in_window.iter().map(|s| s.decay_probe).fold(f64::NEG_INFINITY, f64::max);
        let failures: Vec<String> = track
            .iter()
            .filter_map(|s| s.error.as_ref().map(|e| format!("t = {}: {e}", s.t)))
            .collect();
        let mut rec = run_record(flow, d, traj);
        rec["rate_fit"] = serde_json::to_value(fit).expect("serializes");
        rec["mu_start"] = num(in_window.first().map_or(f64::NAN, |s| s.mu));
        rec["mu_end"] = num(in_window.last().map_or(f64::NAN, |s| s.mu));
        rec["mu_monotone_toward_kappa"] = json!(toward);
        rec["decay_probe_start"] = num(probe_start);
        rec["decay_probe_max"] = num(probe_max);
        rec["scale_fit_failures"] = json!(failures);
        runs.push(rec);
    }
    if csv_enabled(p) {
        out.artifacts.add("rates.csv", rt.into_bytes());
    }
    Ok(json!({ "runs": runs, "window": [window.0, window.1] }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_slope_recovers_powers() {
        let pts: Vec<(f64, f64)> = (1..20).map(|k| k as f64 * 0.1).map(|x| (x, 3.0 * x.powf(1.5))).collect();
        assert!((loglog_slope(&pts) - 1.5).abs() < 1e-12);
        assert!(loglog_slope(&[(1.0, 1.0)]).is_nan());
    }

    #[test]
    fn command_names_match_the_cli() {
        assert_eq!(Command::Verify(VerifyTarget::W2).name(), "verify w2");
        assert_eq!(Command::EvolveKs.name(), "evolve-ks");
    }
}
