use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::RadialGrid;
use super::tail::{fit_tail, Integral, PowerTail};
use crate::error::{LabError, Result};
use crate::scalar::{lit, Real};

/// What a set of radial values represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// A mass density `ρ` or `σ`.
    Density,
    /// A GNS profile `u = σ^{1/4}`.
    Profile,
}

/// Nonnegative values at the cell centers of a shared [`RadialGrid`].
#[derive(Clone, Debug)]
pub struct RadialDensity<T> {
    grid: Arc<RadialGrid<T>>,
    values: Vec<T>,
    kind: Kind,
}

impl<T: Real> RadialDensity<T> {
    pub fn new(grid: Arc<RadialGrid<T>>, values: Vec<T>, kind: Kind) -> Result<Self> {
        grid.check_len(&values)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::invalid(format!("non-finite value in cell {i}")));
        }
        if let Some(i) = values.iter().position(|v| *v < T::zero()) {
            return Err(LabError::invalid(format!(
                "negative value {} in cell {i}",
                values[i]
            )));
        }
        Ok(Self { grid, values, kind })
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: Arc<RadialGrid<T>>, kind: Kind, f: impl Fn(T) -> T) -> Result<Self> {
        let values = grid.centers().iter().map(|r| f(*r)).collect();
        Self::new(grid, values, kind)
    }

    pub fn grid(&self) -> &Arc<RadialGrid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    /// Same grid, new values of the same kind.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(self.grid.clone(), values, self.kind)
    }

    /// `σ = u⁴` (identity on densities).
    pub fn density_of(&self) -> Self {
        match self.kind {
            Kind::Density => self.clone(),
            Kind::Profile => Self {
                grid: self.grid.clone(),
                values: self.values.iter().map(|u| u.powi(4)).collect(),
                kind: Kind::Density,
            },
        }
    }

    /// `u = σ^{1/4}` (identity on profiles).
    pub fn profile_of(&self) -> Self {
        match self.kind {
            Kind::Profile => self.clone(),
            Kind::Density => Self {
                grid: self.grid.clone(),
                values: self.values.iter().map(|s| s.sqrt().sqrt()).collect(),
                kind: Kind::Profile,
            },
        }
    }

    pub fn map(&self, kind: Kind, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(
            self.grid.clone(),
            self.values.iter().map(|v| f(*v)).collect(),
            kind,
        )
    }

    pub fn scale(&self, factor: T) -> Result<Self> {
        self.with_values(self.values.iter().map(|v| *v * factor).collect())
    }

    /// Values of `f(r, value)` for every cell.
    pub fn pointwise(&self, f: impl Fn(T, T) -> T) -> Vec<T> {
        self.grid
            .centers()
            .iter()
            .zip(&self.values)
            .map(|(r, v)| f(*r, *v))
            .collect()
    }

    pub fn max_value(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(*v))
    }
}

/// `∫_{R²} f dx` over the truncated disk: `2π Σ f_i w_i`.
pub fn integrate<T: Real>(f: &RadialDensity<T>) -> T {
    T::two_pi()
        * f.values
            .iter()
            .zip(f.grid.quad_weights())
            .fold(T::zero(), |acc, (v, w)| acc + *v * *w)
}

/// Squared radial derivative `|∇u|²` at the cell centers.
pub fn grad_sq_values<T: Real>(u: &RadialDensity<T>) -> Result<Vec<T>> {
    if u.grid.len() < 3 {
        return Err(LabError::invalid("gradient needs at least 3 cells"));
    }
    Ok(u.grid.derivative(&u.values)?.into_iter().map(|d| d * d).collect())
}

/// `‖∇u‖₂²` over the truncated disk.
pub fn grad_sq<T: Real>(u: &RadialDensity<T>) -> Result<T> {
    if u.kind != Kind::Profile {
        return Err(LabError::invalid("grad_sq expects a profile"));
    }
    let g = grad_sq_values(u)?;
    u.grid.integrate_values(&g)
}

/// `‖∇u‖₂²` with tail closure. The tail law is fitted to `|∇u|²`; when that
/// fit fails (a boundary layer in the outer cells, as left by zero-flux
/// evolution) it is fitted to `u` and differentiated instead:
/// `u ∝ r^{-a}` gives `|∇u|² ∝ r^{-2a-2}`.
pub fn grad_sq_integral<T: Real>(u: &RadialDensity<T>) -> Result<Integral<T>> {
    let g = grad_sq_values(u)?;
    let direct = u.grid.integral(&g)?;
    if !direct.divergent && direct.value().is_finite() && direct.tail_exponent.is_some() {
        return Ok(direct);
    }
    u.grid.integral_with_closure(&g, &u.values, |t| {
        let a = t.exponent;
        let r = t.r_max;
        PowerTail {
            exponent: lit::<T>(2.0) * a + lit(2.0),
            value_at_r_max: a * a * t.value_at_r_max * t.value_at_r_max / (r * r),
            r_max: r,
        }
        .mass()
    })
}

/// Result of [`resample`].
#[derive(Clone, Debug)]
pub struct Resampled<T> {
    pub density: RadialDensity<T>,
    /// `(∫ target − ∫ source)/∫ source` over the respective truncated disks.
    pub relative_mass_change: T,
}

/// Monotone piecewise-cubic Hermite interpolation onto the centers of
/// `target`, clamped at zero. Slopes come from the fourth-order centered
/// stencils and are limited only where they would break monotonicity.
/// Beyond the source disk the fitted power-law tail is used.
pub fn resample<T: Real>(f: &RadialDensity<T>, target: Arc<RadialGrid<T>>) -> Result<Resampled<T>> {
    if *f.grid == *target {
        return Ok(Resampled {
            density: RadialDensity::new(target, f.values.clone(), f.kind)?,
            relative_mass_change: T::zero(),
        });
    }
    let src = &f.grid;
    let x = src.centers();
    let y = &f.values;
    let n = x.len();
    let mut slope = src.derivative(y)?;
    // Fritsch–Carlson limiting
    for k in 0..n - 1 {
        let h = x[k + 1] - x[k];
        let delta = (y[k + 1] - y[k]) / h;
        if delta == T::zero() {
            slope[k] = T::zero();
            slope[k + 1] = T::zero();
            continue;
        }
        let a = slope[k] / delta;
        let b = slope[k + 1] / delta;
        if a < T::zero() {
            slope[k] = T::zero();
        }
        if b < T::zero() {
            slope[k + 1] = T::zero();
        }
        let (a, b) = (a.max(T::zero()), b.max(T::zero()));
        let s = a * a + b * b;
        if s > lit(9.0) {
            let tau = lit::<T>(3.0) / s.sqrt();
            slope[k] = tau * a * delta;
            slope[k + 1] = tau * b * delta;
        }
    }
    let tail = fit_tail(src, y);
    let eval = |r: T| -> T {
        if r <= x[0] {
            return y[0];
        }
        if r >= x[n - 1] {
            return match &tail {
                Some(t) => t.value_at(r),
                None if r <= src.r_max() => y[n - 1],
                None => T::zero(),
            };
        }
        let k = x.partition_point(|c| *c <= r) - 1;
        let h = x[k + 1] - x[k];
        let t = (r - x[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = three * t2 - two * t3;
        let h11 = t3 - t2;
        h00 * y[k] + h10 * h * slope[k] + h01 * y[k + 1] + h11 * h * slope[k + 1]
    };
    let values: Vec<T> = target
        .centers()
        .iter()
        .map(|r| eval(*r).max(T::zero()))
        .collect();
    let density = RadialDensity::new(target, values, f.kind)?;
    let before = integrate(f);
    let after = integrate(&density);
    let relative_mass_change = if before == T::zero() {
        T::zero()
    } else {
        (after - before) / before
    };
    Ok(Resampled {
        density,
        relative_mass_change,
    })
}
