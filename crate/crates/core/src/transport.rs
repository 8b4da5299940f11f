//! Radial 2-Wasserstein distance by monotone rearrangement, and the
//! interpolation bound between `L²` distance, gradients and `W₂`.
//!
//! Densities are read as cell averages: the cumulative mass is the exact
//! prefix sum `2π Σ ρ_i |cell_i|`, and inside a cell `m` is linear in `r²`.
//! Both conventions match the finite-volume flow solvers, so the mass a
//! trajectory conserves is the mass transported here.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::functionals::total_of;
use crate::radial::{grad_sq_integral, Kind, RadialDensity};
use crate::scalar::{lit, Real};

/// Default number of mass levels.
pub const DEFAULT_LEVELS: usize = 4096;

/// Relative mass mismatch tolerated between transported densities.
pub const MASS_MATCH_TOL: f64 = 1e-6;

/// Successive dyadic blocks next to `m = M` whose contributions shrink by
/// less than this factor signal a non-integrable quantile gap.
const DIVERGENCE_RATIO: f64 = 0.75;

/// Generalized inverse `Q(m) = inf{r : m(r) ≥ m}` on a uniform mass ladder.
#[derive(Clone, Debug, Serialize)]
pub struct QuantileProfile<T> {
    /// Total (disk) mass `M`.
    pub mass: T,
    /// `k M / L`, `k = 0..=L`.
    pub mass_levels: Vec<T>,
    /// `Q` at each level; `Q(0) = 0`, nondecreasing, at most `r_max`.
    pub radii: Vec<T>,
}

impl<T: Real> QuantileProfile<T> {
    pub fn levels(&self) -> usize {
        self.mass_levels.len() - 1
    }
}

/// Quantile profile of `rho` on `levels` uniform mass cells.
pub fn radial_quantile_with<T: Real>(rho: &RadialDensity<T>, levels: usize) -> Result<QuantileProfile<T>> {
    if rho.kind() != Kind::Density {
        return Err(LabError::invalid("radial_quantile expects a density"));
    }
    if levels < 8 {
        return Err(LabError::invalid("the mass ladder needs at least 8 levels"));
    }
    if rho.values().iter().any(|x| *x < T::zero()) {
        return Err(LabError::invalid("radial_quantile needs a nonnegative density"));
    }
    let g = rho.grid();
    let edges = g.edges();
    let mut cum = Vec::with_capacity(g.len() + 1);
    let mut acc = T::zero();
    cum.push(acc);
    for (v, w) in rho.values().iter().zip(g.volumes()) {
        acc = acc + T::two_pi() * *v * *w;
        cum.push(acc);
    }
    let mass = acc;
    if !(mass > T::zero() && mass.is_finite()) {
        return Err(LabError::invalid("radial_quantile needs positive finite mass"));
    }
    let step = mass / T::from_usize_lossy(levels);
    let mut mass_levels = Vec::with_capacity(levels + 1);
    let mut radii = Vec::with_capacity(levels + 1);
    let mut cell = 0;
    for k in 0..=levels {
        let m = if k == levels { mass } else { step * T::from_usize_lossy(k) };
        mass_levels.push(m);
        if k == 0 {
            radii.push(T::zero());
            continue;
        }
        // first cell whose upper cumulative reaches m
        while cell + 1 < g.len() && cum[cell + 1] < m {
            cell += 1;
        }
        let (lo, hi) = (cum[cell], cum[cell + 1]);
        let frac = if hi > lo { ((m - lo) / (hi - lo)).max(T::zero()).min(T::one()) } else { T::one() };
        let (a, b) = (edges[cell], edges[cell + 1]);
        let r = (a * a + frac * (b * b - a * a)).sqrt();
        // keep Q nondecreasing under round-off
        let prev = *radii.last().unwrap();
        radii.push(r.max(prev));
    }
    Ok(QuantileProfile {
        mass,
        mass_levels,
        radii,
    })
}

/// [`radial_quantile_with`] on the default ladder.
pub fn radial_quantile<T: Real>(rho: &RadialDensity<T>) -> Result<QuantileProfile<T>> {
    radial_quantile_with(rho, DEFAULT_LEVELS)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct W2Result<T> {
    /// `∫ (Q_ρ − Q_σ)² dm` over every ladder cell except the last.
    pub w2_sq: T,
    /// Contribution of the last ladder cell, `m ∈ [M − M/L, M]`.
    pub last_cell: T,
    /// The quantile gap is not square-integrable at `m → M` in the
    /// continuum limit; the last cell is then left out of [`Self::value`].
    pub divergent: bool,
    pub levels: usize,
    pub mass: T,
}

impl<T: Real> W2Result<T> {
    /// `W₂²`, with the last cell included only when the gap converges.
    pub fn value(&self) -> T {
        if self.divergent {
            self.w2_sq
        } else {
            self.w2_sq + self.last_cell
        }
    }

    /// Bound on what [`Self::value`] leaves out.
    pub fn dropped_bound(&self) -> T {
        if self.divergent {
            self.last_cell
        } else {
            T::zero()
        }
    }
}

/// `W₂²` between two quantile profiles on the same ladder.
pub fn w2_from_quantiles<T: Real>(a: &QuantileProfile<T>, b: &QuantileProfile<T>) -> Result<W2Result<T>> {
    let levels = a.levels();
    if b.levels() != levels {
        return Err(LabError::invalid(format!(
            "quantile ladders differ: {} vs {} levels",
            levels,
            b.levels()
        )));
    }
    let rel = (a.mass - b.mass).abs() / a.mass.max(b.mass);
    if rel > lit(MASS_MATCH_TOL) {
        return Err(LabError::invalid(format!(
            "mass mismatch: {} vs {}",
            a.mass.to_f64_lossy(),
            b.mass.to_f64_lossy()
        )));
    }
    let dm = (a.mass + b.mass) * lit(0.5) / T::from_usize_lossy(levels);
    let half = lit::<T>(0.5);
    let gap_sq: Vec<T> = a.radii.iter().zip(&b.radii).map(|(x, y)| (*x - *y) * (*x - *y)).collect();
    // trapezoid per ladder cell: exact when the squared gap is linear in m
    let cells: Vec<T> = gap_sq.windows(2).map(|w| (w[0] + w[1]) * half * dm).collect();
    let w2_sq = cells[..levels - 1].iter().fold(T::zero(), |s, c| s + *c);
    let last_cell = cells[levels - 1];
    Ok(W2Result {
        w2_sq,
        last_cell,
        divergent: diverges(&cells, w2_sq + last_cell),
        levels,
        mass: (a.mass + b.mass) * half,
    })
}

/// Contributions of dyadic level blocks `[1 − 2^{-j}, 1 − 2^{-j-1}]·M`
/// decay geometrically for a square-integrable gap and stay flat for the
/// `1/(M − m)` gap of mismatched power tails.
fn diverges<T: Real>(cells: &[T], total: T) -> bool {
    let n = cells.len();
    let mut blocks = Vec::new();
    let mut start = 0;
    let mut width = n / 2;
    while width >= 1 && start + width < n {
        blocks.push(cells[start..start + width].iter().fold(T::zero(), |s, c| s + *c));
        start += width;
        width /= 2;
    }
    if blocks.len() < 4 || !(total > T::zero()) {
        return false;
    }
    let k = blocks.len();
    let tail = blocks[k - 1] + blocks[k - 2];
    // negligible top blocks cannot diverge at ladder resolution
    if tail <= total * lit(1e-10) {
        return false;
    }
    let r = lit::<T>(DIVERGENCE_RATIO);
    blocks[k - 1] > r * blocks[k - 2] && blocks[k - 2] > r * blocks[k - 3]
}

/// `W₂²(ρ, σ)` on a ladder of `levels` cells.
pub fn w2_radial_with<T: Real>(rho: &RadialDensity<T>, sigma: &RadialDensity<T>, levels: usize) -> Result<W2Result<T>> {
    let (a, b) = rayon::join(|| radial_quantile_with(rho, levels), || radial_quantile_with(sigma, levels));
    w2_from_quantiles(&a?, &b?)
}

/// `W₂²(ρ, σ)` on the default ladder.
pub fn w2_radial<T: Real>(rho: &RadialDensity<T>, sigma: &RadialDensity<T>) -> Result<W2Result<T>> {
    w2_radial_with(rho, sigma, DEFAULT_LEVELS)
}

/// `W₂²` for every pair `(i, j)`, `i < j`, of `states`, in row-major order.
pub fn w2_pairs<T: Real>(states: &[RadialDensity<T>]) -> Result<Vec<((usize, usize), W2Result<T>)>> {
    let qs = states.par_iter().map(radial_quantile).collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..qs.len())
        .flat_map(|i| (i + 1..qs.len()).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| w2_from_quantiles(&qs[i], &qs[j]).map(|w| ((i, j), w)))
        .collect()
}

/// Both sides of the interpolation bound for one pair.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct InterpolationRecord<T> {
    pub q: T,
    pub k_bound: T,
    /// `‖σ₀ − σ₁‖₂²`
    pub lhs: T,
    pub rhs: T,
    /// `rhs − lhs`
    pub slack: T,
    pub w2: W2Result<T>,
    /// `‖∇σ₀^{1/4}‖₂`, `‖∇σ₁^{1/4}‖₂`
    pub grad: (T, T),
    pub mass: T,
}

/// Evaluates
/// `‖σ₀ − σ₁‖₂² ≤ (g₀ + g₁)(2^{5/2} + 2^{9/2}K) W^{(4q−3)/(4q+2)}
///   + 16 M^{(q−1)/q} K^{(q+2)/(2q)} W^{(q−1)/(2q+1)}`,
/// `g_i = ‖∇σ_i^{1/4}‖₂`, `W = W₂(σ₀, σ₁)`.
pub fn interpolation_check<T: Real>(
    sigma0: &RadialDensity<T>,
    sigma1: &RadialDensity<T>,
    q: T,
    k_bound: T,
) -> Result<InterpolationRecord<T>> {
    if !(q > lit(2.0) && q.is_finite()) {
        return Err(LabError::invalid("interpolation bound needs q > 2"));
    }
    if !(k_bound > T::zero()) {
        return Err(LabError::invalid("K must be positive"));
    }
    if **sigma0.grid() != **sigma1.grid() {
        return Err(LabError::invalid("interpolation check needs both densities on one grid"));
    }
    for (name, s) in [("σ₀", sigma0), ("σ₁", sigma1)] {
        let norm = total_of(s, |_, x| x.powf(q + T::one()))?.value();
        if !(norm <= k_bound) {
            return Err(LabError::invalid(format!(
                "K bound violated: ‖{name}‖_{{q+1}}^{{q+1}} = {} > K = {}",
                norm.to_f64_lossy(),
                k_bound.to_f64_lossy()
            )));
        }
    }
    let w2 = w2_radial(sigma0, sigma1)?;
    let w = w2.value().max(T::zero()).sqrt();
    let grad = |s: &RadialDensity<T>| -> Result<T> {
        let g = grad_sq_integral(&s.profile_of())?.value();
        if !g.is_finite() {
            return Err(LabError::Numerical("‖∇σ^{1/4}‖₂ is not finite".into()));
        }
        Ok(g.max(T::zero()).sqrt())
    };
    let (g0, g1) = (grad(sigma0)?, grad(sigma1)?);
    let diff: Vec<T> = sigma0
        .values()
        .iter()
        .zip(sigma1.values())
        .map(|(a, b)| (*a - *b) * (*a - *b))
        .collect();
    // r⁻⁴ tails leave an r⁻⁸ gap whose mass past r_max is below round-off,
    // while a fitted closure on the gap is at the mercy of the outer cells
    let lhs = sigma0.grid().integrate_values(&diff)?;
    let mass = w2.mass;
    let (one, two, three, four) = (T::one(), lit::<T>(2.0), lit::<T>(3.0), lit::<T>(4.0));
    let first = (g0 + g1)
        * (two.powf(lit(2.5)) + two.powf(lit(4.5)) * k_bound)
        * w.powf((four * q - three) / (four * q + two));
    let second = lit::<T>(16.0)
        * mass.powf((q - one) / q)
        * k_bound.powf((q + two) / (two * q))
        * w.powf((q - one) / (two * q + one));
    let rhs = first + second;
    Ok(InterpolationRecord {
        q,
        k_bound,
        lhs,
        rhs,
        slack: rhs - lhs,
        w2,
        grad: (g0, g1),
        mass,
    })
}
