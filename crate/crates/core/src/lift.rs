//! The 4D Sobolev lift `f(x, y) = 1/(F(y) + |x|²)`, `F = u^{-2}`.
//!
//! Only the reduced planar integrals are evaluated:
//! `‖∇f‖₂² = (π/3)∫|∇F|²F^{-3} + (2π/3)∫F^{-2}` and
//! `‖f‖₄² = ((π/3)∫F^{-3})^{1/2}`. For a balanced profile
//! (`√2‖∇u‖₂ = ‖u‖₄²`) the GNS deficit equals
//! `√3((1/4π)√(3/2)‖∇f‖₂² − ‖f‖₄²)`; in general the two sides differ by
//! `(1/(2√2))(√2‖∇u‖₂ − ‖u‖₄²)²`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::functionals::{gns_deficit, GnsDeficit, GnsNorms, DEFAULT_TOL};
use crate::radial::{grad_sq, Kind, RadialDensity};
use crate::scalar::{lit, Real};

/// Cells with `u` below this floor are excluded from the lift integrals.
pub const PROFILE_FLOOR: f64 = 1e-12;
/// Largest tolerated area fraction of excluded cells.
pub const MAX_EXCLUDED_FRACTION: f64 = 1e-6;
/// Relative tolerance of the balance precondition of [`lift_identity`].
pub const BALANCE_TOL: f64 = 1e-6;

/// Output of [`balance_normalize`].
#[derive(Clone, Debug)]
pub struct Balanced<T> {
    /// `ũ(y) = a μ^{1/3} u(μy)` on the source grid scaled by `1/μ`.
    pub profile: RadialDensity<T>,
    pub mu: T,
    /// `a = (‖v‖₆⁶/‖u‖₆⁶)^{1/6}`.
    pub amplitude: T,
    /// `δ_GNS[ũ] / δ_GNS[u] = a³`.
    pub deficit_factor: T,
}

/// Rescales `u` so that `‖ũ‖₆⁶ = π/2` and `√2‖∇ũ‖₂ = ‖ũ‖₄²`.
///
/// The dilation is applied exactly by rescaling the grid, so no
/// interpolation error enters.
pub fn balance_normalize<T: Real>(u: &RadialDensity<T>) -> Result<Balanced<T>> {
    if u.kind() != Kind::Profile {
        return Err(LabError::invalid("balance_normalize expects a profile"));
    }
    let (g, l4, l6) = GnsNorms::of_profile(u)?.values();
    if !(l6 > T::zero()) {
        return Err(LabError::invalid("cannot normalize an identically zero profile"));
    }
    let peak = u.max_value();
    if !(grad_sq(u)? > T::epsilon() * peak * peak) {
        return Err(LabError::invalid("cannot balance a profile with zero gradient"));
    }
    if !(g.is_finite() && l4.is_finite() && l6.is_finite()) {
        return Err(LabError::numerical("profile norms are not finite"));
    }
    let two = lit::<T>(2.0);
    let amplitude = (T::FRAC_PI_2() / l6).powf(lit(1.0 / 6.0));
    let mu = (amplitude * amplitude * l4 / (two * g)).powf(lit(0.75));
    if !(mu.is_finite() && mu > T::zero()) {
        return Err(LabError::numerical("balance scale is not finite"));
    }
    let grid = Arc::new(u.grid().scaled(mu.recip())?);
    let c = amplitude * mu.cbrt();
    let values = u.values().iter().map(|x| c * *x).collect();
    Ok(Balanced {
        profile: RadialDensity::new(grid, values, Kind::Profile)?,
        mu,
        amplitude,
        deficit_factor: amplitude * amplitude * amplitude,
    })
}

/// Both sides of the lift identity and the terms they are built from.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LiftReport<T> {
    /// Balancing scale `μ` (1 when evaluated on an already balanced input).
    pub mu_balance: T,
    /// `δ_GNS[u]`.
    pub gns_side: T,
    /// `√3((1/4π)√(3/2)‖∇f‖₂² − ‖f‖₄²)`.
    pub sobolev_side: T,
    /// `|gns_side − sobolev_side|`.
    pub residual: T,
    /// `(1/(2√2))(√2‖∇u‖₂ − ‖u‖₄²)²`, zero for balanced input.
    pub correction: T,
    /// `|gns_side − (sobolev_side − correction)|`.
    pub identity_residual: T,
    /// `‖∇f‖₂²`
    pub grad_f_sq: T,
    /// `‖f‖₄`
    pub f_norm4: T,
    /// Area fraction of the grid disk in cells below [`PROFILE_FLOOR`].
    pub excluded_fraction: T,
    /// Propagated quadrature error of the two sides.
    pub tol: T,
}

/// Lift terms of an arbitrary profile (balanced or not).
pub fn lift_terms<T: Real>(u: &RadialDensity<T>) -> Result<LiftReport<T>> {
    if u.kind() != Kind::Profile {
        return Err(LabError::invalid("the lift expects a profile"));
    }
    let gns: GnsDeficit<T> = gns_deficit(u)?;
    let grid = u.grid();
    let floor = lit::<T>(PROFILE_FLOOR);
    let keep: Vec<bool> = u.values().iter().map(|x| *x >= floor).collect();
    let area: Vec<T> = keep
        .iter()
        .map(|k| if *k { T::zero() } else { T::one() })
        .collect();
    let excluded_fraction =
        grid.integrate_values(&area)? / (T::PI() * grid.r_max() * grid.r_max());
    if excluded_fraction > lit::<T>(MAX_EXCLUDED_FRACTION) {
        return Err(LabError::Domain(format!(
            "profile vanishes on {} of the disk area (limit {MAX_EXCLUDED_FRACTION})",
            excluded_fraction.to_f64_lossy()
        )));
    }

    // F = u^{-2}; excluded cells carry a large finite placeholder so the
    // derivative stencils stay finite, their integrands are dropped below
    let big = floor.powi(-2);
    let f_vals: Vec<T> = u
        .values()
        .iter()
        .zip(&keep)
        .map(|(x, k)| if *k { x.powi(-2) } else { big })
        .collect();
    let df = grid.derivative(&f_vals)?;
    let du = grid.derivative(u.values())?;
    let four = lit::<T>(4.0);
    let grad_term: Vec<T> = (0..grid.len())
        .map(|i| {
            if !keep[i] {
                return T::zero();
            }
            let v = df[i] * df[i] * f_vals[i].powi(-3);
            // a stencil reaching into an excluded cell: chain rule instead
            if v.is_finite() && v < big {
                v
            } else {
                four * du[i] * du[i]
            }
        })
        .collect();
    let inv2: Vec<T> = f_vals
        .iter()
        .zip(&keep)
        .map(|(f, k)| if *k { f.powi(-2) } else { T::zero() })
        .collect();
    let inv3: Vec<T> = f_vals
        .iter()
        .zip(&keep)
        .map(|(f, k)| if *k { f.powi(-3) } else { T::zero() })
        .collect();
    let i_grad = grid.integral(&grad_term)?;
    let i2 = grid.integral(&inv2)?;
    let i3 = grid.integral(&inv3)?;
    for (name, i) in [("∫|∇F|²F⁻³", &i_grad), ("∫F⁻²", &i2), ("∫F⁻³", &i3)] {
        if i.divergent || !i.value().is_finite() {
            return Err(LabError::numerical(format!("lift integral {name} diverges")));
        }
    }

    let pi = T::PI();
    let three = lit::<T>(3.0);
    let two = lit::<T>(2.0);
    let grad_f_sq = pi / three * i_grad.value() + two * pi / three * i2.value();
    let f_sq = (pi / three * i3.value()).sqrt();
    let sobolev_side =
        three.sqrt() * ((four * pi).recip() * (lit::<T>(1.5)).sqrt() * grad_f_sq - f_sq);
    let (g, l4, _) = gns.norms.values();
    let gap = (two * g).sqrt() - l4.sqrt();
    let correction = gap * gap / (two * two.sqrt());
    let gns_side = gns.value;
    let sob_err = (i_grad.error * lit(0.25) + i2.error) / (two * two.sqrt())
        + (pi / i3.value().max(T::min_positive_value())).sqrt() * i3.error / two;
    Ok(LiftReport {
        mu_balance: T::one(),
        gns_side,
        sobolev_side,
        residual: (gns_side - sobolev_side).abs(),
        correction,
        identity_residual: (gns_side - (sobolev_side - correction)).abs(),
        grad_f_sq,
        f_norm4: f_sq.sqrt(),
        excluded_fraction,
        tol: gns.tol + sob_err + lit(DEFAULT_TOL),
    })
}

/// Lift identity for a balanced profile.
pub fn lift_identity<T: Real>(u: &RadialDensity<T>) -> Result<LiftReport<T>> {
    let rep = lift_terms(u)?;
    let d = gns_deficit(u)?;
    let (g, l4, _) = d.norms.values();
    let lhs = (lit::<T>(2.0) * g).sqrt();
    let rhs = l4.sqrt();
    if (lhs - rhs).abs() > lit::<T>(BALANCE_TOL) * rhs {
        return Err(LabError::invalid(format!(
            "profile is not balanced: √2‖∇u‖₂ = {}, ‖u‖₄² = {}",
            lhs.to_f64_lossy(),
            rhs.to_f64_lossy()
        )));
    }
    Ok(rep)
}

/// [`balance_normalize`] followed by [`lift_identity`]; the report carries
/// the balancing scale.
pub fn lift_report<T: Real>(u: &RadialDensity<T>) -> Result<(Balanced<T>, LiftReport<T>)> {
    let b = balance_normalize(u)?;
    let mut rep = lift_identity(&b.profile)?;
    rep.mu_balance = b.mu;
    Ok((b, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::v;
    use crate::radial::make_grid;

    #[test]
    fn rejects_densities_and_constants() {
        let g = Arc::new(make_grid(10.0_f64, 64, 2.0).unwrap());
        let s = RadialDensity::new(g.clone(), vec![1.0; 64], Kind::Density).unwrap();
        assert!(balance_normalize(&s).is_err());
        let c = RadialDensity::new(g, vec![1.0; 64], Kind::Profile).unwrap();
        let e = balance_normalize(&c);
        assert!(matches!(e, Err(LabError::InvalidArgument(_))), "{e:?}");
    }

    #[test]
    fn vanishing_on_positive_measure_is_a_domain_error() {
        let g = Arc::new(make_grid(1e3_f64, 1024, 3.0).unwrap());
        let u = RadialDensity::from_fn(g.clone(), Kind::Profile, |r| {
            if r < 500.0 {
                v(1.0, r)
            } else {
                0.0
            }
        })
        .unwrap();
        assert!(matches!(lift_terms(&u), Err(LabError::Domain(_))));
        let w = RadialDensity::from_fn(g, Kind::Profile, |r| v(1.0, r)).unwrap();
        assert_eq!(lift_terms(&w).unwrap().excluded_fraction, 0.0);
    }
}
