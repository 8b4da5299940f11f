//! Command-line front end of the `gnslab` workspace.
//!
//! Every subcommand reads one TOML experiment config, validates it fully,
//! computes everything in memory and only then writes its output directory.
//! Exit codes: 0 success, 2 invalid input, 3 numerical or I/O failure.

pub mod artifacts;
pub mod config;
pub mod data;
pub mod failure;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

pub use artifacts::Artifacts;
pub use config::ExperimentConfig;
pub use failure::{Failure, EXIT_FAILURE, EXIT_VALIDATION};
pub use pipeline::{Command, VerifyTarget};

#[derive(Debug, Parser)]
#[command(name = "gnslab", version, about = "Radial functional inequalities and nonlinear flows in the plane")]
pub struct Cli {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    /// Seed overriding `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Grid as `r_max,n_cells,stretch`, overriding `[grid]`.
    #[arg(long, global = true, value_name = "R,N,S")]
    pub grid: Option<String>,
    /// Suppress progress lines on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Functional report with deficits for each initial datum.
    Deficit,
    /// Sobolev lift identity and balanced scale.
    Lift,
    /// Optimizer fits and stability ratios of the configured probes.
    Fit,
    /// Evolve by the fast diffusion flow.
    EvolveFd,
    /// Evolve by the Keller-Segel flow.
    EvolveKs,
    /// Check a structural property.
    Verify {
        #[command(subcommand)]
        what: VerifySub,
    },
    /// Decay rates and scale tracking along a flow.
    Rates,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum VerifySub {
    /// Monotonicity of the entropy and free energy.
    Monotone,
    /// Wasserstein bounds between flow snapshots.
    W2,
    /// Interpolation inequality between flow snapshots.
    Interp,
    /// Continuity of the functionals under L¹ perturbations.
    Continuity,
    /// Stability ratios over the perturbation sweep.
    Stability,
}

impl Sub {
    pub fn command(&self) -> Command {
        match self {
            Sub::Deficit => Command::Deficit,
            Sub::Lift => Command::Lift,
            Sub::Fit => Command::Fit,
            Sub::EvolveFd => Command::EvolveFd,
            Sub::EvolveKs => Command::EvolveKs,
            Sub::Rates => Command::Rates,
            Sub::Verify { what } => Command::Verify(match what {
                VerifySub::Monotone => VerifyTarget::Monotone,
                VerifySub::W2 => VerifyTarget::W2,
                VerifySub::Interp => VerifyTarget::Interp,
                VerifySub::Continuity => VerifyTarget::Continuity,
                VerifySub::Stability => VerifyTarget::Stability,
            }),
        }
    }
}

/// Result of a successful invocation.
#[derive(Debug)]
pub struct Report {
    pub out_dir: PathBuf,
    pub artifacts: Artifacts,
    pub summary: Value,
    /// Runs that stopped early; a non-empty list makes the exit code 3.
    pub incomplete: Vec<String>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.incomplete.is_empty() {
            0
        } else {
            EXIT_FAILURE
        }
    }
}

fn parse_grid(text: &str) -> Result<(f64, usize, f64), Failure> {
    let bad = || Failure::field("--grid", format!("expected 'r_max,n_cells,stretch', got '{text}'"));
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [r, n, s] = parts.as_slice() else {
        return Err(bad());
    };
    Ok((
        r.parse().map_err(|_| bad())?,
        n.parse().map_err(|_| bad())?,
        s.parse().map_err(|_| bad())?,
    ))
}

/// Effective config: file (or defaults) with the command-line overrides applied.
pub fn effective_config(cli: &Cli) -> Result<(ExperimentConfig, Option<Vec<u8>>), Failure> {
    let (mut cfg, raw) = match &cli.config {
        Some(path) => {
            let (c, raw) = ExperimentConfig::load(path)?;
            (c, Some(raw))
        }
        None => (ExperimentConfig::default(), None),
    };
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(g) = &cli.grid {
        let (r_max, n_cells, stretch) = parse_grid(g)?;
        cfg.grid.r_max = r_max;
        cfg.grid.n_cells = n_cells;
        cfg.grid.stretch = stretch;
    }
    Ok((cfg, raw))
}

/// Runs one parsed invocation; writes the output directory on success only.
pub fn run(cli: &Cli) -> Result<Report, Failure> {
    let (cfg, raw) = effective_config(cli)?;
    let out_dir = cfg.output.dir.clone();
    artifacts::check_output_dir(&out_dir)?;
    let prepared = pipeline::prepare(cli.command.command(), cfg, raw.as_deref())?;
    let quiet = cli.quiet;
    let log = move |line: &str| {
        if !quiet {
            eprintln!("{line}");
        }
    };
    let outcome = pipeline::execute(&prepared, &log)?;
    outcome.artifacts.write_all(&out_dir)?;
    Ok(Report {
        out_dir,
        artifacts: outcome.artifacts,
        summary: outcome.summary,
        incomplete: outcome.incomplete,
    })
}

/// Parses `args`, runs, reports on stdout/stderr and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let f = Failure::validation(e.to_string().lines().next().unwrap_or("invalid arguments").to_string());
            eprintln!("{}", f.report());
            return f.exit_code();
        }
    };
    match run(&cli) {
        Ok(report) => {
            let code = report.exit_code();
            let status = if code == 0 { "ok" } else { "incomplete" };
            let line = json!({
                "status": status,
                "exit_code": code,
                "command": cli.command.command().name(),
                "out_dir": report.out_dir.display().to_string(),
                "files": report.artifacts.len(),
                "incomplete": report.incomplete,
            });
            println!("{line}");
            code
        }
        Err(f) => {
            eprintln!("{}", f.report());
            f.exit_code()
        }
    }
}
