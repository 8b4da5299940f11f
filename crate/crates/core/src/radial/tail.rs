use serde::Serialize;

use super::grid::RadialGrid;
use crate::error::Result;
use crate::scalar::{lit, Real};

/// Integrands decaying no faster than `r^{-(2 + DIVERGENCE_MARGIN)}` are
/// treated as non-integrable at infinity.
pub const DIVERGENCE_MARGIN: f64 = 1e-3;

/// Power-law model `f(r) = f_R (r/R)^{-exponent}` for `r > R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerTail<T> {
    pub exponent: T,
    pub value_at_r_max: T,
    pub r_max: T,
}

impl<T: Real> PowerTail<T> {
    /// Fits the law through two positive samples `(r1, f1)`, `(r2, f2)`, `r1 < r2`.
    pub fn through(r1: T, f1: T, r2: T, f2: T, r_max: T) -> Option<Self> {
        if !(f1 > T::zero() && f2 > T::zero()) || r2 <= r1 {
            return None;
        }
        let exponent = (f1 / f2).ln() / (r2 / r1).ln();
        if !exponent.is_finite() {
            return None;
        }
        let value_at_r_max = f2 * (r_max / r2).powf(-exponent);
        Some(Self {
            exponent,
            value_at_r_max,
            r_max,
        })
    }

    pub fn is_integrable(&self) -> bool {
        self.exponent > lit::<T>(2.0 + DIVERGENCE_MARGIN)
    }

    /// `2π R² f_R`, the common prefactor of all tail moments.
    fn scale(&self) -> T {
        T::two_pi() * self.r_max * self.r_max * self.value_at_r_max
    }

    /// `∫_{|x|>R} f dx`, `None` when the tail is not integrable.
    pub fn mass(&self) -> Option<T> {
        self.is_integrable()
            .then(|| self.scale() / (self.exponent - lit(2.0)))
    }

    /// `∫_{R<|x|<r} f dx` for any `r >= R` (finite even for divergent tails).
    pub fn mass_up_to(&self, r: T) -> T {
        let b = self.exponent - lit(2.0);
        let x = r / self.r_max;
        if b.abs() < lit(1e-12) {
            self.scale() * x.ln()
        } else {
            self.scale() * (T::one() - x.powf(-b)) / b
        }
    }

    /// `∫_{|x|>R} f log|x| dx`.
    pub fn log_moment(&self) -> Option<T> {
        let b = self.exponent - lit(2.0);
        self.is_integrable()
            .then(|| self.scale() * (self.r_max.ln() / b + T::one() / (b * b)))
    }

    /// `∫_{|x|>R} f log f dx`.
    pub fn entropy(&self) -> Option<T> {
        let b = self.exponent - lit(2.0);
        self.is_integrable().then(|| {
            self.scale() / b * self.value_at_r_max.ln() - self.exponent * self.scale() / (b * b)
        })
    }

    /// `∬_{|x|,|y|>R} f(x) f(y) log max(|x|,|y|) dx dy`.
    pub fn self_interaction(&self) -> Option<T> {
        let b = self.exponent - lit(2.0);
        self.mass()
            .map(|m| m * m * (self.r_max.ln() + lit::<T>(1.5) / b))
    }

    pub fn value_at(&self, r: T) -> T {
        self.value_at_r_max * (r / self.r_max).powf(-self.exponent)
    }
}

/// Integral over the plane split into the resolved part and a power-law tail closure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Integral<T> {
    /// Truncated value over the grid disk.
    pub truncated: T,
    /// Extrapolated contribution of `|x| > r_max` (zero when the samples vanish).
    pub tail: T,
    /// The integrand decays too slowly to be integrable at infinity.
    pub divergent: bool,
    /// Decay exponent fitted to the outer samples, if any.
    pub tail_exponent: Option<T>,
    /// Estimated absolute error (quadrature plus tail model).
    pub error: T,
}

impl<T: Real> Integral<T> {
    /// Truncated value plus tail closure (`+∞` when divergent).
    pub fn value(&self) -> T {
        if self.divergent {
            T::infinity()
        } else {
            self.truncated + self.tail
        }
    }
}

/// Tail law fitted to the last cells of `f`.
pub(crate) fn fit_tail<T: Real>(grid: &RadialGrid<T>, f: &[T]) -> Option<PowerTail<T>> {
    let n = grid.len();
    let c = grid.centers();
    PowerTail::through(c[n - 2], f[n - 2], c[n - 1], f[n - 1], grid.r_max())
}

/// Tail law fitted further inward; the spread between the two fits bounds the
/// model error.
pub(crate) fn fit_tail_wide<T: Real>(grid: &RadialGrid<T>, f: &[T]) -> Option<PowerTail<T>> {
    let n = grid.len();
    let c = grid.centers();
    let k = n.saturating_sub(1 + (n / 64).max(2));
    PowerTail::through(c[k], f[k], c[n - 1], f[n - 1], grid.r_max())
}

impl<T: Real> RadialGrid<T> {
    /// Planar integral with tail closure and an error estimate.
    pub fn integral(&self, f: &[T]) -> Result<Integral<T>> {
        let truncated = self.integrate_values(f)?;
        // the midpoint rule is one order lower; their gap bounds the quadrature error
        let quad_err = (truncated - self.integrate_midpoint(f)).abs();
        let n = self.len();
        let vanishing = f[n - 1] == T::zero() || f[n - 2] == T::zero();
        if vanishing {
            return Ok(Integral {
                truncated,
                tail: T::zero(),
                divergent: false,
                tail_exponent: None,
                error: quad_err,
            });
        }
        let Some(tail) = fit_tail(self, f) else {
            // sign-changing or irregular outer samples: no closure
            return Ok(Integral {
                truncated,
                tail: T::zero(),
                divergent: false,
                tail_exponent: None,
                error: quad_err + f[n - 1].abs() * self.r_max() * self.r_max(),
            });
        };
        match tail.mass() {
            None => Ok(Integral {
                truncated,
                tail: T::zero(),
                divergent: true,
                tail_exponent: Some(tail.exponent),
                error: T::infinity(),
            }),
            Some(m) => {
                let spread = fit_tail_wide(self, f)
                    .and_then(|t| t.mass())
                    .map(|m2| (m2 - m).abs())
                    .unwrap_or(m.abs());
                Ok(Integral {
                    truncated,
                    tail: m,
                    divergent: false,
                    tail_exponent: Some(tail.exponent),
                    error: quad_err + spread,
                })
            }
        }
    }
}

impl<T: Real> RadialGrid<T> {
    /// Planar integral of `f` whose tail beyond `r_max` is closed through a
    /// power law fitted to `model` (the density `f` is built from).
    /// `closure` maps the fitted law to the tail contribution, `None` when
    /// that contribution diverges.
    pub fn integral_with_closure(
        &self,
        f: &[T],
        model: &[T],
        closure: impl Fn(&PowerTail<T>) -> Option<T>,
    ) -> Result<Integral<T>> {
        self.check_len(model)?;
        let truncated = self.integrate_values(f)?;
        let quad_err = (truncated - self.integrate_midpoint(f)).abs();
        let n = self.len();
        let plain = |error: T| Integral {
            truncated,
            tail: T::zero(),
            divergent: false,
            tail_exponent: None,
            error,
        };
        if model[n - 1] == T::zero() || model[n - 2] == T::zero() {
            return Ok(plain(quad_err));
        }
        let Some(tail) = fit_tail(self, model) else {
            return Ok(plain(quad_err + f[n - 1].abs() * self.r_max() * self.r_max()));
        };
        match closure(&tail) {
            None => Ok(Integral {
                truncated,
                tail: T::zero(),
                divergent: true,
                tail_exponent: Some(tail.exponent),
                error: T::infinity(),
            }),
            Some(t) => {
                let spread = fit_tail_wide(self, model)
                    .and_then(|w| closure(&w))
                    .map(|t2| (t2 - t).abs())
                    .unwrap_or(t.abs());
                Ok(Integral {
                    truncated,
                    tail: t,
                    divergent: false,
                    tail_exponent: Some(tail.exponent),
                    error: quad_err + spread,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::make_grid;
    use std::f64::consts::PI;

    #[test]
    fn exact_power_law_moments() {
        let t = PowerTail {
            exponent: 4.0_f64,
            value_at_r_max: 2.0,
            r_max: 10.0,
        };
        // ∫_10^∞ 2π r 2 (r/10)^-4 dr = 2π·2·10^4 / (2·10^2)
        assert!((t.mass().unwrap() - 2.0 * PI * 2.0 * 100.0 / 2.0).abs() < 1e-9);
        assert!((t.mass_up_to(1e12) - t.mass().unwrap()).abs() < 1e-6);
        let weak = PowerTail {
            exponent: 2.0,
            ..t
        };
        assert!(weak.mass().is_none());
        assert!(weak.mass_up_to(100.0) > 0.0);
    }

    #[test]
    fn tail_closure_recovers_full_plane_integral() {
        let g = make_grid(100.0_f64, 1024, 3.0).unwrap();
        // (1+r²)^{-2} integrates to π over the plane
        let f: Vec<f64> = g.centers().iter().map(|r| (1.0 + r * r).powi(-2)).collect();
        let i = g.integral(&f).unwrap();
        assert!(!i.divergent);
        assert!((i.truncated - PI).abs() > 1e-5);
        assert!((i.value() - PI).abs() < 1e-7, "{}", i.value() - PI);
    }

    #[test]
    fn slow_decay_is_flagged() {
        let g = make_grid(100.0_f64, 512, 3.0).unwrap();
        let f: Vec<f64> = g.centers().iter().map(|r| 1.0 / (1.0 + r * r)).collect();
        let i = g.integral(&f).unwrap();
        assert!(i.divergent);
        assert!(i.value().is_infinite());
    }
}
