//! Conservative radial solvers for the fast diffusion equation
//! `∂_t σ = Δ√σ + 2√(π/(κM)) ∇·(xσ)` and the Keller–Segel system
//! `∂_t ρ = Δρ − ∇·(ρ∇c)`, `c = −(1/2π) log|·| ∗ ρ`, with per-sample
//! diagnostics, rate fits and scale tracking.
//!
//! Both solvers are finite-volume on the cells of a [`RadialGrid`]: the
//! state is the vector of cell averages, fluxes live on the interior edges,
//! the origin and `r_max` carry zero flux, so `2π Σ |cell_i| σ_i` is
//! conserved to round-off. Mass beyond `r_max` is frozen and reported once
//! as the truncation ledger.

mod checkpoint;
mod diagnostics;
mod fd;
mod ks;
mod rates;
mod tridiag;

use std::sync::Arc;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::functionals::total;
use crate::radial::{Kind, RadialDensity, RadialGrid};
use crate::scalar::{lit, Real};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use diagnostics::{diagnose, disk_fd_entropy, FlowDiagnostics, DIAGNOSTICS_HEADER};
pub use fd::fd_evolve;
pub use ks::{ks_evolve, CRITICAL_MASS};
pub use rates::{rate_fit, scale_track, RateFit, RateModel, ScaleSample, MIN_POINTS};
pub use tridiag::solve_tridiagonal;

/// Relative tolerance of the initial-mass precondition.
pub const MASS_TOL: f64 = 1e-6;

/// Diagnostic sample times: `0, Δ, 2Δ, …` up to `geometric_from`, then
/// `t_{k+1} = ratio · t_k`; `t_end` is always sampled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sampling<T> {
    pub uniform_dt: T,
    pub geometric_from: T,
    pub ratio: T,
}

impl<T: Real> Default for Sampling<T> {
    fn default() -> Self {
        Self {
            uniform_dt: lit(0.1),
            geometric_from: T::one(),
            ratio: lit(1.2),
        }
    }
}

impl<T: Real> Sampling<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.uniform_dt > T::zero() && self.uniform_dt.is_finite()) {
            return Err(LabError::invalid("sampling uniform_dt must be positive"));
        }
        if !(self.geometric_from >= T::zero() && self.geometric_from.is_finite()) {
            return Err(LabError::invalid("sampling geometric_from must be nonnegative"));
        }
        if !(self.ratio > T::one() && self.ratio.is_finite()) {
            return Err(LabError::invalid("sampling ratio must exceed 1"));
        }
        Ok(())
    }

    /// Sample times in `[0, t_end]`, strictly increasing.
    pub fn times(&self, t_end: T) -> Vec<T> {
        let mut out = vec![T::zero()];
        let mut k = 1usize;
        loop {
            let t = self.uniform_dt * T::from_usize_lossy(k);
            if t >= self.geometric_from.min(t_end) {
                break;
            }
            out.push(t);
            k += 1;
        }
        let mut t = self.geometric_from.max(self.uniform_dt);
        while t < t_end {
            if t > *out.last().expect("nonempty") {
                out.push(t);
            }
            t = t * self.ratio;
        }
        if t_end > *out.last().expect("nonempty") {
            out.push(t_end);
        }
        out
    }
}

/// Time-stepping and output controls shared by both solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowControls<T> {
    pub dt_initial: T,
    pub dt_max: T,
    /// Steps shorter than this abort the run.
    pub dt_min: T,
    /// Largest accepted `max_i |Δσ_i| / (σ_i + 1e-8 max σ)` per step.
    pub max_rel_change: T,
    /// Newton (fast diffusion) or Picard (Keller–Segel) tolerance on the
    /// relative update.
    pub solver_tol: T,
    pub solver_max_iter: usize,
    /// Keller–Segel only: fixed-point sweeps of the potential per step; `1`
    /// lags the potential, larger values converge it.
    pub picard_iters: usize,
    pub sampling: Sampling<T>,
    /// Keep every `state_stride`-th sampled state (diagnostics are kept for all).
    pub state_stride: usize,
    /// Record `H`, `F`, `D` after every accepted step.
    pub step_ledger: bool,
    /// Fit `σ_{μ,M}` at every sample (`mu_fit` column).
    pub fit_scale: bool,
}

impl<T: Real> Default for FlowControls<T> {
    fn default() -> Self {
        Self {
            dt_initial: lit(1e-5),
            dt_max: lit(1e-3),
            dt_min: lit(1e-12),
            max_rel_change: lit(0.05),
            solver_tol: lit(1e-11),
            solver_max_iter: 30,
            picard_iters: 2,
            sampling: Sampling::default(),
            state_stride: 1,
            step_ledger: true,
            fit_scale: true,
        }
    }
}

impl<T: Real> FlowControls<T> {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: T| x > T::zero() && x.is_finite();
        if !pos(self.dt_initial) || !pos(self.dt_max) || !pos(self.dt_min) {
            return Err(LabError::invalid("time steps must be positive"));
        }
        if self.dt_min > self.dt_max {
            return Err(LabError::invalid("dt_min must not exceed dt_max"));
        }
        if !pos(self.max_rel_change) || !pos(self.solver_tol) {
            return Err(LabError::invalid("step monitors must be positive"));
        }
        if self.solver_max_iter == 0 || self.picard_iters == 0 || self.state_stride == 0 {
            return Err(LabError::invalid("iteration counts and strides must be at least 1"));
        }
        self.sampling.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    FastDiffusion,
    KellerSegel,
}

/// Mass regime of a Keller–Segel run relative to `8π`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MassRegime {
    Subcritical,
    Critical,
    Supercritical,
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FlowStatus {
    Completed,
    /// Time-step underflow; the trajectory holds everything up to `t`.
    Aborted { t: f64, reason: String },
    /// Supercritical Keller–Segel run whose step collapsed.
    BlowUp { t: f64, peak: f64 },
}

/// One accepted step.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StepRecord<T> {
    pub t: T,
    pub dt: T,
    pub iterations: usize,
    pub mass: T,
    /// Disk `H_{κ,M}` in the cell measure (see [`disk_fd_entropy`]).
    pub h: T,
    pub f: T,
    pub d: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct SchemeMeta<T> {
    pub kind: FlowKind,
    pub kappa: T,
    pub mass: T,
    /// Initial mass beyond `r_max`, held fixed by the zero-flux wall.
    pub truncated_mass: T,
    /// Disk mass at `t = 0` in the cell measure.
    pub disk_mass0: T,
    /// `max_t |M_disk(t) − M_disk(0)| / M_disk(0)`.
    pub max_mass_drift: T,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub steps: Vec<StepRecord<T>>,
    pub mass_regime: Option<MassRegime>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowTrajectory<T> {
    pub times: Vec<T>,
    /// `(t, state)` for every `state_stride`-th sample.
    #[serde(skip)]
    pub states: Vec<(T, RadialDensity<T>)>,
    pub diagnostics: Vec<FlowDiagnostics<T>>,
    pub meta: SchemeMeta<T>,
    pub status: FlowStatus,
}

impl<T: Real> FlowTrajectory<T> {
    /// Diagnostics as CSV with header [`DIAGNOSTICS_HEADER`].
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from(DIAGNOSTICS_HEADER);
        out.push('\n');
        for d in &self.diagnostics {
            out.push_str(&d.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn completed(&self) -> bool {
        self.status == FlowStatus::Completed
    }

    pub fn final_state(&self) -> Option<&RadialDensity<T>> {
        self.states.last().map(|(_, s)| s)
    }
}

/// Outcome of one attempted step.
pub(crate) enum StepError {
    /// Solver failure or non-positive state: retry with a shorter step.
    Retry,
    /// Unrecoverable (structural) failure.
    Fatal(LabError),
}

/// A time discretization advancing cell values by `dt`.
pub(crate) trait Scheme<T: Real> {
    fn step(&mut self, state: &[T], dt: T, controls: &FlowControls<T>) -> std::result::Result<(Vec<T>, usize), StepError>;
}

pub(crate) fn disk_mass<T: Real>(grid: &RadialGrid<T>, values: &[T]) -> T {
    T::two_pi()
        * values
            .iter()
            .zip(grid.volumes())
            .fold(T::zero(), |acc, (v, w)| acc + *v * *w)
}

pub(crate) fn check_initial<T: Real>(sigma0: &RadialDensity<T>, mass: T, t_end: T) -> Result<T> {
    if sigma0.kind() != Kind::Density {
        return Err(LabError::invalid("flows evolve densities, not profiles"));
    }
    if !(t_end > T::zero() && t_end.is_finite()) {
        return Err(LabError::invalid("t_end must be positive"));
    }
    if !(mass > T::zero() && mass.is_finite()) {
        return Err(LabError::invalid("mass must be positive"));
    }
    let m0 = total(sigma0)?.value();
    if !m0.is_finite() {
        return Err(LabError::invalid("initial data must have finite mass"));
    }
    Ok(m0)
}

fn max_rel_change<T: Real>(old: &[T], new: &[T]) -> T {
    let peak = old.iter().fold(T::zero(), |m, v| m.max(*v));
    let floor = lit::<T>(1e-8) * peak;
    old.iter()
        .zip(new)
        .fold(T::zero(), |m, (a, b)| m.max((*b - *a).abs() / (*a + floor)))
}

/// Context handed to the shared driver.
pub(crate) struct RunSpec<T> {
    pub kind: FlowKind,
    pub kappa: T,
    pub mass: T,
    pub t_end: T,
    pub mass_regime: Option<MassRegime>,
}

/// Adaptive driver shared by both solvers.
pub(crate) fn drive<T: Real, S: Scheme<T>>(
    scheme: &mut S,
    sigma0: &RadialDensity<T>,
    spec: RunSpec<T>,
    controls: &FlowControls<T>,
) -> Result<FlowTrajectory<T>> {
    let grid: Arc<RadialGrid<T>> = sigma0.grid().clone();
    let sample_times = controls.sampling.times(spec.t_end);
    let mut state: Vec<T> = sigma0.values().to_vec();
    let disk_mass0 = disk_mass(&grid, &state);
    let truncated_mass = (spec.mass - disk_mass0).max(T::zero());
    let mut meta = SchemeMeta {
        kind: spec.kind,
        kappa: spec.kappa,
        mass: spec.mass,
        truncated_mass,
        disk_mass0,
        max_mass_drift: T::zero(),
        accepted_steps: 0,
        rejected_steps: 0,
        steps: Vec::new(),
        mass_regime: spec.mass_regime,
    };
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut diagnostics = Vec::new();
    let record = |t: T, values: &[T], times: &mut Vec<T>, states: &mut Vec<(T, RadialDensity<T>)>, diags: &mut Vec<FlowDiagnostics<T>>| -> Result<()> {
        let d = RadialDensity::new(grid.clone(), values.to_vec(), Kind::Density)?;
        diags.push(diagnose(&d, t, spec.kappa, spec.mass, controls.fit_scale)?);
        if times.len() % controls.state_stride == 0 {
            states.push((t, d));
        }
        times.push(t);
        Ok(())
    };
    record(T::zero(), &state, &mut times, &mut states, &mut diagnostics)?;

    let mut t = T::zero();
    let mut dt = controls.dt_initial.min(controls.dt_max);
    let mut status = FlowStatus::Completed;
    let half = lit::<T>(0.5);
    for &next in sample_times.iter().skip(1) {
        while t < next {
            let remaining = next - t;
            // avoid a sliver step right before the sample time
            let dt_try = if remaining <= dt * lit(1.5) { remaining } else { dt };
            let outcome = scheme.step(&state, dt_try, controls);
            let accepted = match outcome {
                Ok((new, iterations)) => {
                    let change = max_rel_change(&state, &new);
                    if change <= controls.max_rel_change && new.iter().all(|v| v.is_finite() && *v >= T::zero()) {
                        Some((new, iterations, change))
                    } else {
                        None
                    }
                }
                Err(StepError::Retry) => None,
                Err(StepError::Fatal(e)) => return Err(e),
            };
            match accepted {
                Some((new, iterations, change)) => {
                    state = new;
                    t = if dt_try == remaining { next } else { t + dt_try };
                    meta.accepted_steps += 1;
                    let m = disk_mass(&grid, &state);
                    let drift = ((m - disk_mass0) / disk_mass0).abs();
                    meta.max_mass_drift = meta.max_mass_drift.max(drift);
                    if controls.step_ledger {
                        let d = RadialDensity::new(grid.clone(), state.clone(), Kind::Density)?;
                        let (h, f, dd) = diagnostics::ledger_values(&d, spec.kappa, spec.mass)?;
                        meta.steps.push(StepRecord {
                            t,
                            dt: dt_try,
                            iterations,
                            mass: m,
                            h,
                            f,
                            d: dd,
                        });
                    }
                    if change < half * controls.max_rel_change && dt_try == dt {
                        dt = (dt * lit(1.25)).min(controls.dt_max);
                    }
                }
                None => {
                    meta.rejected_steps += 1;
                    dt = dt_try * half;
                    if dt < controls.dt_min {
                        let peak = state.iter().fold(T::zero(), |m, v| m.max(*v)).to_f64_lossy();
                        status = if spec.mass_regime == Some(MassRegime::Supercritical) {
                            FlowStatus::BlowUp {
                                t: t.to_f64_lossy(),
                                peak,
                            }
                        } else {
                            FlowStatus::Aborted {
                                t: t.to_f64_lossy(),
                                reason: format!(
                                    "time step fell below {} (peak density {peak})",
                                    controls.dt_min.to_f64_lossy()
                                ),
                            }
                        };
                        break;
                    }
                }
            }
        }
        if status != FlowStatus::Completed {
            break;
        }
        record(next, &state, &mut times, &mut states, &mut diagnostics)?;
    }
    // the final state is always kept
    if let Some(&last_t) = times.last() {
        if states.last().map(|(ts, _)| *ts != last_t).unwrap_or(true) {
            states.push((last_t, RadialDensity::new(grid.clone(), state, Kind::Density)?));
        }
    }
    Ok(FlowTrajectory {
        times,
        states,
        diagnostics,
        meta,
        status,
    })
}
