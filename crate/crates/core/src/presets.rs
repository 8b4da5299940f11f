//! Named perturbation recipes and seeded corpora shared by tests, the CLI and
//! the acceptance suite.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::families::{sigma, v};
use crate::functionals::total;
use crate::radial::{Kind, RadialDensity, RadialGrid};
use crate::scalar::{lit, Real};

/// Perturbation shape `b(r)`; all decay faster than any optimizer tail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// `e^{−r²}`
    Gaussian,
    /// `e^{−(r−2)²}`
    Ring,
    /// `r e^{−r}`
    Ramp,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Gaussian, Shape::Ring, Shape::Ramp];

    pub fn eval<T: Real>(self, r: T) -> T {
        match self {
            Shape::Gaussian => (-r * r).exp(),
            Shape::Ring => {
                let s = r - lit(2.0);
                (-s * s).exp()
            }
            Shape::Ramp => r * (-r).exp(),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Gaussian => "gaussian",
            Shape::Ring => "ring",
            Shape::Ramp => "ramp",
        })
    }
}

impl FromStr for Shape {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Shape::Gaussian),
            "ring" => Ok(Shape::Ring),
            "ramp" => Ok(Shape::Ramp),
            other => Err(LabError::invalid(format!(
                "unknown perturbation shape '{other}' (expected gaussian, ring or ramp)"
            ))),
        }
    }
}

/// Amplitudes of the stability sweep.
pub const EPS_SWEEP: [f64; 3] = [0.05, 0.025, 0.0125];

/// Profile `v + ε b`.
pub fn perturbed_v<T: Real>(grid: Arc<RadialGrid<T>>, shape: Shape, eps: T) -> Result<RadialDensity<T>> {
    RadialDensity::from_fn(grid, Kind::Profile, |r| v(T::one(), r) + eps * shape.eval(r))
}

/// `d` rescaled to total mass `mass`.
pub fn with_mass<T: Real>(d: &RadialDensity<T>, mass: T) -> Result<RadialDensity<T>> {
    let m = total(d)?.value();
    if !(m > T::zero() && m.is_finite()) {
        return Err(LabError::invalid("cannot renormalize a density without positive finite mass"));
    }
    d.scale(mass / m)
}

/// `σ_{κ,M}(1 + ε b)` renormalized to mass `M`; the tail stays that of `σ_{κ,M}`.
pub fn perturbed_sigma<T: Real>(
    grid: Arc<RadialGrid<T>>,
    kappa: T,
    mass: T,
    shape: Shape,
    eps: T,
) -> Result<RadialDensity<T>> {
    let raw = RadialDensity::from_fn(grid, Kind::Density, |r| {
        sigma(kappa, mass, r) * (T::one() + eps * shape.eval(r))
    })?;
    with_mass(&raw, mass)
}

/// `σ_{μ₀,M}` in the core blended into the `σ_{κ,M}` tail past `r_blend`,
/// renormalized to mass `M`.
pub fn tail_matched<T: Real>(
    grid: Arc<RadialGrid<T>>,
    mu0: T,
    kappa: T,
    mass: T,
    r_blend: T,
) -> Result<RadialDensity<T>> {
    let raw = RadialDensity::from_fn(grid, Kind::Density, |r| {
        let w = (T::one() + (r / r_blend).powi(4)).recip();
        w * sigma(mu0, mass, r) + (T::one() - w) * sigma(kappa, mass, r)
    })?;
    with_mass(&raw, mass)
}

/// `σ_{s²κ,M}`, the steady state dilated by `s` (mass preserved).
pub fn dilated_sigma<T: Real>(grid: Arc<RadialGrid<T>>, s: T, kappa: T, mass: T) -> Result<RadialDensity<T>> {
    let mu = s * s * kappa;
    let raw = RadialDensity::from_fn(grid, Kind::Density, |r| sigma(mu, mass, r))?;
    with_mass(&raw, mass)
}

/// The ten perturbations of `v` used for the lift identity.
pub fn lift_corpus<T: Real>(grid: Arc<RadialGrid<T>>) -> Result<Vec<RadialDensity<T>>> {
    let mut out = Vec::with_capacity(10);
    let mk = |f: &dyn Fn(T) -> T| RadialDensity::from_fn(grid.clone(), Kind::Profile, f);
    let one = T::one();
    for eps in [0.05, 0.1, 0.2] {
        let e = lit::<T>(eps);
        out.push(mk(&|r| v(one, r) + e * (-r * r).exp())?);
    }
    for eps in [0.1, 0.3] {
        let e = lit::<T>(eps);
        out.push(mk(&|r| v(one, r) * (one + e * r * r / (one + r * r)))?);
    }
    for eps in [0.05, 0.15] {
        let e = lit::<T>(eps);
        out.push(mk(&|r| {
            let s = r - lit(2.0);
            v(one, r) + e * r * r * (-s * s).exp()
        })?);
    }
    for (a, b) in [(0.5, 0.5), (0.7, 0.3)] {
        let (a, b) = (lit::<T>(a), lit::<T>(b));
        out.push(mk(&|r| a * v(one, r) + b * v(lit(3.0), r))?);
    }
    out.push(mk(&|r| {
        v(one, r) * (one + lit::<T>(0.2) * (r * lit(1.5)).sin() / (one + r))
    })?);
    Ok(out)
}

/// Ten initial data for the monotonicity suite: dilations, bump and
/// tail-matched perturbations of `σ_{κ,M}`.
pub fn flow_corpus<T: Real>(grid: Arc<RadialGrid<T>>, kappa: T, mass: T) -> Result<Vec<(String, RadialDensity<T>)>> {
    let mut out = Vec::with_capacity(10);
    for s in [0.8, 1.2, 1.5] {
        out.push((format!("dilated_{s}"), dilated_sigma(grid.clone(), lit(s), kappa, mass)?));
    }
    for shape in Shape::ALL {
        for eps in [0.2, 0.5] {
            out.push((
                format!("{shape}_{eps}"),
                perturbed_sigma(grid.clone(), kappa, mass, shape, lit(eps))?,
            ));
        }
    }
    out.push((
        "tail_matched_1.44".into(),
        tail_matched(grid.clone(), lit::<T>(1.44) * kappa, kappa, mass, lit(10.0))?,
    ));
    Ok(out)
}

/// One random mass-preserving perturbation of the continuity base density.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BumpSpec {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub sign: f64,
}

/// Base density of the continuity corpus: `(M/π) e^{−r²}` (not a steady state).
pub fn continuity_base<T: Real>(grid: Arc<RadialGrid<T>>, mass: T) -> Result<RadialDensity<T>> {
    RadialDensity::from_fn(grid, Kind::Density, |r| mass / T::PI() * (-r * r).exp())
}

/// `n` seeded bump specs with amplitudes log-uniform in `[1e-4, 1e-1]`.
pub fn continuity_specs(n: usize, seed: u64) -> Vec<BumpSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| BumpSpec {
            amplitude: 10f64.powf(rng.gen_range(-4.0..-1.0)),
            center: rng.gen_range(0.0..2.0),
            width: rng.gen_range(0.3..1.0),
            sign: if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
        })
        .collect()
}

/// `base·(1 + s·a·e^{−(r−c)²/w²})` renormalized to the base mass.
pub fn apply_bump<T: Real>(base: &RadialDensity<T>, spec: &BumpSpec) -> Result<RadialDensity<T>> {
    let m = total(base)?.value();
    let (a, c, w) = (lit::<T>(spec.sign * spec.amplitude), lit::<T>(spec.center), lit::<T>(spec.width));
    let vals = base.pointwise(|r, x| {
        let s = (r - c) / w;
        x * (T::one() + a * (-s * s).exp())
    });
    let raw = RadialDensity::new(base.grid().clone(), vals, Kind::Density)?;
    with_mass(&raw, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::make_grid;

    #[test]
    fn shapes_round_trip_through_names() {
        for s in Shape::ALL {
            assert_eq!(s.to_string().parse::<Shape>().unwrap(), s);
        }
        assert!("square".parse::<Shape>().is_err());
    }

    #[test]
    fn specs_are_seeded() {
        let a = continuity_specs(5, 7);
        let b = continuity_specs(5, 7);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert!(a.iter().all(|s| (1e-4..=1e-1).contains(&s.amplitude)));
    }

    #[test]
    fn corpora_preserve_mass() {
        let g = Arc::new(make_grid(1e3_f64, 1024, 3.0).unwrap());
        let m = 8.0 * std::f64::consts::PI;
        for (name, d) in flow_corpus(g.clone(), 1.0, m).unwrap() {
            let got = total(&d).unwrap().value();
            assert!((got / m - 1.0).abs() < 1e-12, "{name}");
        }
        assert_eq!(lift_corpus(g).unwrap().len(), 10);
    }
}
