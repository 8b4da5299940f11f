//! Numerical laboratory for the planar Gagliardo–Nirenberg–Sobolev inequality
//! `π‖u‖₆⁶ ≤ ‖∇u‖₂²‖u‖₄⁴` and the logarithmic Hardy–Littlewood–Sobolev
//! inequality: deficit functionals, nearest-optimizer fits, the 4D Sobolev
//! lift, radial fast-diffusion and critical-mass Keller–Segel solvers, and
//! radial Wasserstein distances.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`, which is what the experiments use.

pub mod error;
pub mod families;
pub mod flows;
pub mod functionals;
pub mod lift;
pub mod minimize;
pub mod presets;
pub mod radial;
pub mod scalar;
pub mod stability;
pub mod transport;

pub use error::{LabError, Result};
pub use scalar::Real;

pub type Grid = radial::RadialGrid<f64>;
pub type Density = radial::RadialDensity<f64>;
pub type Fit = stability::OptimizerFit<f64>;
pub type Controls = flows::FlowControls<f64>;
pub type Trajectory = flows::FlowTrajectory<f64>;
pub type Quantiles = transport::QuantileProfile<f64>;

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
