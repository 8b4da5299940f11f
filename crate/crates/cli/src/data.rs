//! Materialized initial data.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use gnslab::families::{sigma, v};
use gnslab::flows::read_checkpoint;
use gnslab::presets::{
    continuity_base, dilated_sigma, flow_corpus, lift_corpus, perturbed_sigma, perturbed_v, tail_matched, Shape,
};
use gnslab::radial::{Kind, RadialDensity, RadialGrid};
use gnslab::{Density, Grid};

use crate::config::{DataSpec, ExperimentConfig};
use crate::failure::Failure;

/// One labeled initial state with the steady state it is measured against.
#[derive(Clone, Debug)]
pub struct Datum {
    pub label: String,
    pub state: Density,
    /// Reference scale `κ` of `H_{κ,M}`.
    pub kappa: f64,
    /// Nominal mass; `None` means "as measured".
    pub mass: Option<f64>,
}

impl Datum {
    pub fn density(&self) -> Density {
        match self.state.kind() {
            Kind::Density => self.state.clone(),
            Kind::Profile => self.state.density_of(),
        }
    }

    pub fn profile(&self) -> Density {
        match self.state.kind() {
            Kind::Profile => self.state.clone(),
            Kind::Density => self.state.profile_of(),
        }
    }
}

fn fmt_param(x: f64) -> String {
    format!("{x}")
}

fn shape(s: &str) -> Result<Shape, Failure> {
    s.parse::<Shape>().map_err(Failure::from)
}

/// Builds every configured datum on `grid`; labels are made unique by suffixes.
pub fn materialize(cfg: &ExperimentConfig, grid: &Arc<Grid>) -> Result<Vec<Datum>, Failure> {
    let mut out = Vec::new();
    for (i, spec) in cfg.initial.iter().enumerate() {
        let at = format!("initial[{i}]");
        expand(cfg, grid, spec, &mut out).map_err(|e| e.context(&at))?;
    }
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for d in &mut out {
        let n = seen.entry(d.label.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            d.label = format!("{}_{}", d.label, n);
        }
    }
    Ok(out)
}

fn expand(cfg: &ExperimentConfig, grid: &Arc<Grid>, spec: &DataSpec, out: &mut Vec<Datum>) -> Result<(), Failure> {
    let g = grid.clone();
    match spec {
        DataSpec::V { lambda } => out.push(Datum {
            label: format!("v_lambda{}", fmt_param(*lambda)),
            state: RadialDensity::from_fn(g, Kind::Profile, |r| v(*lambda, r))?,
            kappa: 1.0 / (lambda * lambda),
            mass: Some(PI / (lambda * lambda)),
        }),
        DataSpec::Sigma { kappa, mass, dilation } => {
            let (k, m) = (cfg.kappa_or(*kappa), cfg.mass_or(*mass));
            let label = if *dilation == 1.0 {
                format!("sigma_kappa{}", fmt_param(k))
            } else {
                format!("sigma_kappa{}_dilated{}", fmt_param(k), fmt_param(*dilation))
            };
            // the undilated state is sampled exactly, not renormalized
            let state = if *dilation == 1.0 {
                RadialDensity::from_fn(g, Kind::Density, |r| sigma(k, m, r))?
            } else {
                dilated_sigma(g, *dilation, k, m)?
            };
            out.push(Datum {
                label,
                state,
                kappa: k,
                mass: Some(m),
            })
        }
        DataSpec::PerturbedV { shape: s, eps } => out.push(Datum {
            label: format!("perturbed_v_{s}_{}", fmt_param(*eps)),
            state: perturbed_v(g, shape(s)?, *eps)?,
            kappa: 1.0,
            mass: None,
        }),
        DataSpec::PerturbedSigma { shape: s, eps, kappa, mass } => {
            let (k, m) = (cfg.kappa_or(*kappa), cfg.mass_or(*mass));
            out.push(Datum {
                label: format!("perturbed_sigma_{s}_{}", fmt_param(*eps)),
                state: perturbed_sigma(g, k, m, shape(s)?, *eps)?,
                kappa: k,
                mass: Some(m),
            })
        }
        DataSpec::TailMatched { mu0, kappa, mass, r_blend } => {
            let (k, m) = (cfg.kappa_or(*kappa), cfg.mass_or(*mass));
            out.push(Datum {
                label: format!("tail_matched_{}", fmt_param(*mu0)),
                state: tail_matched(g, *mu0, k, m, *r_blend)?,
                kappa: k,
                mass: Some(m),
            })
        }
        DataSpec::Gaussian { mass } => {
            let m = cfg.mass_or(*mass);
            out.push(Datum {
                label: format!("gaussian_mass{}", fmt_param(m)),
                state: continuity_base(g, m)?,
                kappa: cfg.run.kappa,
                mass: Some(m),
            })
        }
        DataSpec::Checkpoint { path } => {
            let cp = read_checkpoint::<f64>(path)
                .map_err(|e| Failure::validation(format!("cannot load checkpoint: {}", crate::failure::lab_message(&e))))?;
            if cp.state.grid().spec() != grid.spec() {
                return Err(Failure::validation(format!(
                    "checkpoint {} lives on a different grid than the configured one",
                    path.display()
                )));
            }
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let state = RadialDensity::new(grid.clone(), cp.state.into_values(), Kind::Density)?;
            out.push(Datum {
                label: format!("checkpoint_{}", sanitize(&stem)),
                state,
                kappa: cp.kappa,
                mass: Some(cp.mass),
            })
        }
        DataSpec::Preset { name, kappa, mass } => {
            let (k, m) = (cfg.kappa_or(*kappa), cfg.mass_or(*mass));
            match name.as_str() {
                "lift_corpus" => {
                    for (i, u) in lift_corpus(g)?.into_iter().enumerate() {
                        out.push(Datum {
                            label: format!("lift_{i}"),
                            state: u,
                            kappa: 1.0,
                            mass: None,
                        });
                    }
                }
                "flow_corpus" => {
                    for (label, rho) in flow_corpus(g, k, m)? {
                        out.push(Datum {
                            label,
                            state: rho,
                            kappa: k,
                            mass: Some(m),
                        });
                    }
                }
                "eps_sweep_v" | "eps_sweep_sigma" => {
                    for s in &cfg.sweep.shapes {
                        for eps in &cfg.sweep.eps {
                            let sh = shape(s)?;
                            let (label, state, mass) = if name == "eps_sweep_v" {
                                (format!("v_{s}_{}", fmt_param(*eps)), perturbed_v(g.clone(), sh, *eps)?, None)
                            } else {
                                (
                                    format!("sigma_{s}_{}", fmt_param(*eps)),
                                    perturbed_sigma(g.clone(), k, m, sh, *eps)?,
                                    Some(m),
                                )
                            };
                            out.push(Datum {
                                label,
                                state,
                                kappa: k,
                                mass,
                            });
                        }
                    }
                }
                other => return Err(Failure::validation(format!("unknown preset '{other}'"))),
            }
        }
    }
    Ok(())
}

/// Keeps `[A-Za-z0-9._-]`, maps everything else to `_`.
pub fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

pub fn make_grid(cfg: &ExperimentConfig) -> Result<Arc<RadialGrid<f64>>, Failure> {
    Ok(Arc::new(RadialGrid::new(cfg.grid.spec()).map_err(|e| {
        Failure::field("grid", crate::failure::lab_message(&e))
    })?))
}
