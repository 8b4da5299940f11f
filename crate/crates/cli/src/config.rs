//! Experiment configuration.
//!
//! One TOML file with sections `grid`, `initial` (list), `run`, `probes`
//! (list), `sweep`, `rates` and `output`. Every field has a default, so an
//! empty file is a valid configuration. Parsing rejects unknown keys;
//! [`ExperimentConfig::validate`] checks every numerical precondition before
//! any computation starts.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gnslab::flows::{FlowControls, RateModel, Sampling};
use gnslab::presets::{Shape, EPS_SWEEP};
use gnslab::radial::GridSpec;
use gnslab::stability::DensityClass;

use crate::failure::Failure;

const CRITICAL_MASS: f64 = 8.0 * PI;

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of every random corpus.
    pub seed: u64,
    pub grid: GridConfig,
    pub initial: Vec<DataSpec>,
    pub run: RunConfig,
    pub probes: Vec<ProbeSpec>,
    pub sweep: SweepConfig,
    pub rates: RatesConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub r_max: f64,
    pub n_cells: usize,
    pub stretch: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            r_max: 1e3,
            n_cells: 4096,
            stretch: 3.0,
        }
    }
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec<f64> {
        GridSpec::new(self.r_max, self.n_cells, self.stretch)
    }
}

/// One initial datum, or a named corpus expanding into several.
///
/// Omitted `kappa` and `mass` fall back to the `run` section.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Profile `v_λ`.
    V {
        #[serde(default = "one")]
        lambda: f64,
    },
    /// `σ_{s²κ,M}`, the steady state dilated by `s = dilation`.
    Sigma {
        kappa: Option<f64>,
        mass: Option<f64>,
        #[serde(default = "one")]
        dilation: f64,
    },
    /// Profile `v + ε b`.
    PerturbedV { shape: String, eps: f64 },
    /// `σ_{κ,M}(1 + ε b)` at mass `M`.
    PerturbedSigma {
        shape: String,
        eps: f64,
        kappa: Option<f64>,
        mass: Option<f64>,
    },
    /// `σ_{μ₀,M}` blended into the `σ_{κ,M}` tail past `r_blend`.
    TailMatched {
        mu0: f64,
        kappa: Option<f64>,
        mass: Option<f64>,
        #[serde(default = "ten")]
        r_blend: f64,
    },
    /// `(M/π) e^{−r²}`.
    Gaussian { mass: Option<f64> },
    /// A state written by `evolve-fd` or `evolve-ks`.
    Checkpoint { path: PathBuf },
    /// `lift_corpus`, `flow_corpus`, `eps_sweep_v` or `eps_sweep_sigma`.
    Preset {
        name: String,
        kappa: Option<f64>,
        mass: Option<f64>,
    },
}

pub const PRESETS: [&str; 4] = ["lift_corpus", "flow_corpus", "eps_sweep_v", "eps_sweep_sigma"];

fn one() -> f64 {
    1.0
}

fn ten() -> f64 {
    10.0
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `fd` or `ks`; used by `verify` and `rates`.
    pub flow: String,
    pub kappa: f64,
    pub mass: f64,
    pub t_end: f64,
    pub controls: ControlsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            flow: "fd".into(),
            kappa: 1.0,
            mass: CRITICAL_MASS,
            t_end: 1.0,
            controls: ControlsConfig::default(),
        }
    }
}

/// Overrides of [`FlowControls`]; omitted fields keep the solver defaults.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ControlsConfig {
    pub dt_initial: Option<f64>,
    pub dt_max: Option<f64>,
    pub dt_min: Option<f64>,
    pub max_rel_change: Option<f64>,
    pub solver_tol: Option<f64>,
    pub solver_max_iter: Option<usize>,
    pub picard_iters: Option<usize>,
    pub state_stride: Option<usize>,
    pub fit_scale: Option<bool>,
    pub sample_dt: Option<f64>,
    pub geometric_from: Option<f64>,
    pub geometric_ratio: Option<f64>,
}

impl ControlsConfig {
    pub fn resolve(&self) -> FlowControls<f64> {
        let d = FlowControls::<f64>::default();
        let s = Sampling::<f64>::default();
        FlowControls {
            dt_initial: self.dt_initial.unwrap_or(d.dt_initial),
            dt_max: self.dt_max.unwrap_or(d.dt_max),
            dt_min: self.dt_min.unwrap_or(d.dt_min),
            max_rel_change: self.max_rel_change.unwrap_or(d.max_rel_change),
            solver_tol: self.solver_tol.unwrap_or(d.solver_tol),
            solver_max_iter: self.solver_max_iter.unwrap_or(d.solver_max_iter),
            picard_iters: self.picard_iters.unwrap_or(d.picard_iters),
            sampling: Sampling {
                uniform_dt: self.sample_dt.unwrap_or(s.uniform_dt),
                geometric_from: self.geometric_from.unwrap_or(s.geometric_from),
                ratio: self.geometric_ratio.unwrap_or(s.ratio),
            },
            state_stride: self.state_stride.unwrap_or(d.state_stride),
            step_ledger: true,
            fit_scale: self.fit_scale.unwrap_or(d.fit_scale),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeSpec {
    /// Nearest `v_{λ,x₀}` in `L¹` of `u⁶`, ratio at exponent 1/2.
    Sixth {
        #[serde(default)]
        search_offset: bool,
    },
    /// Nearest `v_λ` in `L¹` of `u⁴`, ratio at exponent `(p − 1)/(4p)`.
    Fourth {
        #[serde(default = "default_p")]
        p: f64,
    },
    /// Nearest `σ_{μ,M}`, ratio at exponent `(1 − ε)/20`.
    Hls {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    /// Interpolation bound between sampled flow states.
    Interp {
        #[serde(default = "default_q")]
        q: f64,
        #[serde(default = "default_k")]
        k_bound: f64,
    },
    /// Seeded bump corpus around `(M/π)e^{−r²}` inside a density class.
    Continuity {
        #[serde(default = "default_pairs")]
        pairs: usize,
        #[serde(default = "one")]
        mass: f64,
        #[serde(default = "default_class")]
        class: DensityClass,
    },
}

fn default_p() -> f64 {
    1.5
}
fn default_eps() -> f64 {
    0.1
}
fn default_q() -> f64 {
    3.0
}
fn default_k() -> f64 {
    1e4
}
fn default_pairs() -> usize {
    50
}
pub fn default_class() -> DensityClass {
    DensityClass {
        p: 1.5,
        q: 3.0,
        a: 1e3,
        b: 1e3,
    }
}

impl ProbeSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            ProbeSpec::Sixth { .. } => "sixth",
            ProbeSpec::Fourth { .. } => "fourth",
            ProbeSpec::Hls { .. } => "hls",
            ProbeSpec::Interp { .. } => "interp",
            ProbeSpec::Continuity { .. } => "continuity",
        }
    }
}

/// Perturbation sweep of `verify stability`.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub shapes: Vec<String>,
    pub eps: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            shapes: Shape::ALL.iter().map(|s| s.to_string()).collect(),
            eps: EPS_SWEEP.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RatesConfig {
    /// `power_law` or `log_decay`.
    pub model: String,
    /// Fit window; defaults to `[1, t_end]`.
    pub window: Option<[f64; 2]>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            model: "power_law".into(),
            window: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Keep every `stride`-th diagnostics row in CSV output.
    pub stride: usize,
    /// Any of `csv`, `json`, `plot`.
    pub formats: Vec<String>,
    /// Write the final state of every run as a checkpoint.
    pub checkpoints: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("gnslab-out"),
            stride: 1,
            formats: vec!["csv".into(), "json".into()],
            checkpoints: true,
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

fn positive(x: f64, field: &str, what: &str) -> Result<(), Failure> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Failure::field(field, format!("{what} must be positive")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::validation(format!("config: {}", e.message().trim())))
    }

    /// Reads `path`; relative checkpoint paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::validation(format!("cannot read config {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Failure::validation(format!("config {} is not UTF-8", path.display())))?;
        let mut cfg = Self::parse(text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for d in &mut cfg.initial {
            if let DataSpec::Checkpoint { path } = d {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok((cfg, bytes))
    }

    pub fn kappa_or(&self, k: Option<f64>) -> f64 {
        k.unwrap_or(self.run.kappa)
    }

    pub fn mass_or(&self, m: Option<f64>) -> f64 {
        m.unwrap_or(self.run.mass)
    }

    /// Checks every parameter range; the error names the offending field.
    pub fn validate(&self) -> Result<(), Failure> {
        self.grid
            .spec()
            .validate()
            .map_err(|e| Failure::field("grid", crate::failure::lab_message(&e)))?;
        positive(self.run.kappa, "run.kappa", "kappa")?;
        positive(self.run.mass, "run.mass", "mass")?;
        positive(self.run.t_end, "run.t_end", "t_end")?;
        if !matches!(self.run.flow.as_str(), "fd" | "ks") {
            return Err(Failure::field(
                "run.flow",
                format!("unknown flow '{}' (expected fd or ks)", self.run.flow),
            ));
        }
        self.run
            .controls
            .resolve()
            .validate()
            .map_err(|e| Failure::field("run.controls", crate::failure::lab_message(&e)))?;
        for (i, d) in self.initial.iter().enumerate() {
            self.validate_data(d, &format!("initial[{i}]"))?;
        }
        for (i, p) in self.probes.iter().enumerate() {
            validate_probe(p, &format!("probes[{i}]"))?;
        }
        for s in &self.sweep.shapes {
            s.parse::<Shape>()
                .map_err(|e| Failure::field("sweep.shapes", crate::failure::lab_message(&e)))?;
        }
        if self.sweep.eps.is_empty() {
            return Err(Failure::field("sweep.eps", "sweep needs at least one amplitude"));
        }
        for e in &self.sweep.eps {
            positive(*e, "sweep.eps", "sweep amplitudes")?;
        }
        self.rates
            .model
            .parse::<RateModel>()
            .map_err(|e| Failure::field("rates.model", crate::failure::lab_message(&e)))?;
        if let Some([lo, hi]) = self.rates.window {
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return Err(Failure::field("rates.window", "rate window must satisfy 0 ≤ lo < hi"));
            }
        }
        if self.output.stride == 0 {
            return Err(Failure::field("output.stride", "output stride must be at least 1"));
        }
        for f in &self.output.formats {
            if !matches!(f.as_str(), "csv" | "json" | "plot") {
                return Err(Failure::field(
                    "output.formats",
                    format!("unknown output format '{f}' (expected csv, json or plot)"),
                ));
            }
        }
        Ok(())
    }

    fn validate_data(&self, d: &DataSpec, at: &str) -> Result<(), Failure> {
        let field = |name: &str| format!("{at}.{name}");
        let kappa_mass = |k: &Option<f64>, m: &Option<f64>| -> Result<(), Failure> {
            positive(self.kappa_or(*k), &field("kappa"), "kappa")?;
            positive(self.mass_or(*m), &field("mass"), "mass")
        };
        let shape = |s: &str| {
            s.parse::<Shape>()
                .map(|_| ())
                .map_err(|e| Failure::field(&field("shape"), crate::failure::lab_message(&e)))
        };
        match d {
            DataSpec::V { lambda } => positive(*lambda, &field("lambda"), "lambda"),
            DataSpec::Sigma { kappa, mass, dilation } => {
                kappa_mass(kappa, mass)?;
                positive(*dilation, &field("dilation"), "dilation")
            }
            DataSpec::PerturbedV { shape: s, eps } => {
                shape(s)?;
                finite(*eps, &field("eps"))
            }
            DataSpec::PerturbedSigma { shape: s, eps, kappa, mass } => {
                shape(s)?;
                kappa_mass(kappa, mass)?;
                if !(*eps > -1.0 && eps.is_finite()) {
                    return Err(Failure::field(&field("eps"), "eps must exceed -1 to keep the density positive"));
                }
                Ok(())
            }
            DataSpec::TailMatched { mu0, kappa, mass, r_blend } => {
                positive(*mu0, &field("mu0"), "mu0")?;
                kappa_mass(kappa, mass)?;
                positive(*r_blend, &field("r_blend"), "r_blend")
            }
            DataSpec::Gaussian { mass } => positive(self.mass_or(*mass), &field("mass"), "mass"),
            DataSpec::Checkpoint { .. } => Ok(()),
            DataSpec::Preset { name, kappa, mass } => {
                if !PRESETS.contains(&name.as_str()) {
                    return Err(Failure::field(
                        &field("name"),
                        format!("unknown preset '{name}' (expected one of {})", PRESETS.join(", ")),
                    ));
                }
                kappa_mass(kappa, mass)
            }
        }
    }
}

fn finite(x: f64, field: &str) -> Result<(), Failure> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Failure::field(field, "value must be finite"))
    }
}

fn validate_probe(p: &ProbeSpec, at: &str) -> Result<(), Failure> {
    let field = |name: &str| format!("{at}.{name}");
    match p {
        ProbeSpec::Sixth { .. } => Ok(()),
        ProbeSpec::Fourth { p } => {
            if *p > 1.0 && *p < 2.0 {
                Ok(())
            } else {
                Err(Failure::field(&field("p"), format!("p = {p} must lie in (1, 2)")))
            }
        }
        ProbeSpec::Hls { eps } => {
            if *eps > 0.0 && *eps < 1.0 {
                Ok(())
            } else {
                Err(Failure::field(&field("eps"), format!("eps = {eps} must lie in (0, 1)")))
            }
        }
        ProbeSpec::Interp { q, k_bound } => {
            if !(*q > 2.0 && q.is_finite()) {
                return Err(Failure::field(&field("q"), format!("q = {q} must exceed 2")));
            }
            positive(*k_bound, &field("k_bound"), "k_bound")
        }
        ProbeSpec::Continuity { pairs, mass, class } => {
            if *pairs < 3 {
                return Err(Failure::field(&field("pairs"), "continuity needs at least 3 pairs"));
            }
            positive(*mass, &field("mass"), "mass")?;
            if !(class.p > 0.0 && class.q > 1.0 && class.a > 0.0 && class.b > 0.0) {
                return Err(Failure::field(&field("class"), "class needs p > 0, q > 1, A > 0 and B > 0"));
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_valid() {
        let c = ExperimentConfig::parse("").unwrap();
        c.validate().unwrap();
        assert_eq!(c.grid, GridConfig::default());
        assert!(c.probes.is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("[grid]\nr_maxx = 3.0\n").is_err());
        assert!(ExperimentConfig::parse("[[initial]]\nfamily = \"v\"\nkappa = 1.0\n").is_err());
    }

    #[test]
    fn negative_kappa_names_the_precondition() {
        let c = ExperimentConfig::parse("[run]\nkappa = -1.0\n").unwrap();
        let e = c.validate().unwrap_err();
        assert!(e.message().contains("kappa must be positive"), "{e:?}");
    }

    #[test]
    fn data_and_probes_parse() {
        let text = r#"
            [[initial]]
            family = "sigma"
            dilation = 1.2
            [[initial]]
            family = "preset"
            name = "flow_corpus"
            [[probes]]
            kind = "fourth"
            p = 1.25
        "#;
        let c = ExperimentConfig::parse(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.initial.len(), 2);
        assert_eq!(c.probes, vec![ProbeSpec::Fourth { p: 1.25 }]);
    }

    #[test]
    fn bad_ranges_are_caught() {
        for (text, needle) in [
            ("[[probes]]\nkind = \"fourth\"\np = 2.5\n", "must lie in (1, 2)"),
            ("[[initial]]\nfamily = \"preset\"\nname = \"nope\"\n", "unknown preset"),
            ("[[initial]]\nfamily = \"perturbed_v\"\nshape = \"square\"\neps = 0.1\n", "unknown perturbation shape"),
            ("[grid]\nn_cells = 2\n", "grid"),
            ("[output]\nformats = [\"xml\"]\n", "unknown output format"),
        ] {
            let e = ExperimentConfig::parse(text).unwrap().validate().unwrap_err();
            assert!(e.to_string().contains(needle), "{text}: {e}");
        }
    }
}
