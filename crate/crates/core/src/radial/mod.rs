//! Grids, quadrature, differentiation and resampling for rotationally
//! symmetric functions on the plane.

mod density;
mod fornberg;
mod grid;
mod tail;

pub use density::{grad_sq, grad_sq_integral, grad_sq_values, integrate, resample, Kind, RadialDensity, Resampled};
pub use grid::{make_grid, GridSpec, RadialGrid};
pub use tail::{Integral, PowerTail, DIVERGENCE_MARGIN};
