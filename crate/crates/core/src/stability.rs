//! Nearest-optimizer fits in `L¹` and the stability ratios built on them.
//!
//! * sixth powers: `inf_{λ, x₀} ‖u⁶ − λ² v⁶_{λ,x₀}‖₁`, exponent `1/2`;
//! * fourth powers: `inf_λ ‖u⁴ − λ² v_λ⁴‖₁`, exponent `(p − 1)/(4p)`;
//! * Log-HLS: `inf_μ ‖ρ − σ_{μ,M}‖₁`, exponent `(1 − ε)/20`.
//!
//! Searches run over `log λ` (or `log μ`) with [`minimize_scan`]; the
//! offset `|x₀|` is searched by an outer golden section with the model
//! averaged over [`ANGULAR_NODES`] directions per radius.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::families::{offset_distance, sigma, v, Family, ANGULAR_NODES};
use crate::functionals::{
    dissipation, entropy, fd_entropy, log_hls, log_interaction, moments_entropy, total, total_of,
};
use crate::minimize::{golden, minimize_scan, SearchOptions};
use crate::radial::{Kind, RadialDensity, RadialGrid};
use crate::scalar::{lit, Real};

/// Search interval of `λ`.
pub const LAMBDA_BRACKET: (f64, f64) = (1e-3, 1e3);
/// Largest center offset searched.
pub const OFFSET_CAP: f64 = 10.0;
/// Relative tolerance of the normalization preconditions.
pub const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct OptimizerFit<T> {
    pub family: Family,
    pub lambda_star: T,
    /// `1/λ*²`, the σ-family scale equivalent to `λ*`.
    pub mu_star: T,
    pub offset_star: T,
    pub distance_l1: T,
    /// Search interval in parameter units (`λ` or `μ`).
    pub bracket: (T, T),
    pub evaluations: usize,
    pub converged: bool,
    pub multimodal: bool,
    pub boundary_hit: bool,
    /// The offset search ended on `|x₀| = OFFSET_CAP`.
    pub offset_boundary_hit: bool,
    pub metadata: FitMetadata<T>,
}

/// Input diagnostics recorded alongside a fit.
#[derive(Clone, Debug, Default, Serialize)]
pub struct FitMetadata<T> {
    /// Entropy `S` of `u⁴`.
    pub entropy_s: Option<T>,
    /// First moment `N₁` of `u⁴`.
    pub moment_n1: Option<T>,
    /// Entropy-based lower bound on `λ` (logged only, never enforced):
    /// `−log λ ≤ (2/π)(S + N₁) + 4/e + log 2`.
    pub lambda_floor: Option<T>,
}

/// `L¹` distance objective between fixed target values and a family member.
///
/// Both sides follow power laws past `r_max`; the tail of `|target − model|`
/// is taken as the difference of their separately fitted tails, which stays
/// well defined when the two agree to round-off.
struct L1Objective<'a, T> {
    grid: &'a RadialGrid<T>,
    target: Vec<T>,
    target_tail: Option<T>,
    model: Model<T>,
}

#[derive(Clone, Copy)]
enum Model<T> {
    /// `λ² v_λ⁶`
    Sixth,
    /// `λ² v_λ⁴`
    Fourth,
    /// `σ_{μ,M}` with parameter `μ`.
    Sigma { mass: T },
}

fn tail_of<T: Real>(grid: &RadialGrid<T>, f: &[T]) -> Option<T> {
    grid.integral(f)
        .ok()
        .filter(|i| !i.divergent && i.tail.is_finite())
        .map(|i| i.tail)
}

impl<'a, T: Real> L1Objective<'a, T> {
    fn new(grid: &'a RadialGrid<T>, target: Vec<T>, model: Model<T>) -> Self {
        let target_tail = tail_of(grid, &target);
        Self {
            grid,
            target,
            target_tail,
            model,
        }
    }

    fn model_at(&self, p: T, dist: T) -> T {
        match self.model {
            Model::Sixth => p * p * v(p, dist).powi(6),
            Model::Fourth => p * p * v(p, dist).powi(4),
            Model::Sigma { mass } => sigma(p, mass, dist),
        }
    }

    fn distance(&self, p: T, offset: T) -> T {
        let n_ang = ANGULAR_NODES;
        let inv = T::from_usize_lossy(n_ang).recip();
        let model: Vec<T> = self
            .grid
            .centers()
            .iter()
            .map(|r| {
                if offset == T::zero() {
                    self.model_at(p, *r)
                } else {
                    (0..n_ang).fold(T::zero(), |acc, k| {
                        acc + self.model_at(p, offset_distance(*r, offset, k, n_ang))
                    }) * inv
                }
            })
            .collect();
        let diff: Vec<T> = model.iter().zip(&self.target).map(|(m, t)| (*t - *m).abs()).collect();
        let Ok(truncated) = self.grid.integrate_values(&diff) else {
            return T::infinity();
        };
        let tail = match (self.target_tail, tail_of(self.grid, &model)) {
            (Some(a), Some(b)) => (a - b).abs(),
            _ => T::zero(),
        };
        truncated + tail
    }

    /// Best parameter for a fixed offset, searched over `log p` in `[lo, hi]`.
    fn fit_at(&self, offset: T, lo: T, hi: T, opts: &SearchOptions) -> crate::minimize::Search<T> {
        minimize_scan(|s: T| self.distance(s.exp(), offset), lo.ln(), hi.ln(), opts)
    }
}

fn relative_gap<T: Real>(x: T, target: T) -> T {
    ((x - target) / target).abs()
}

fn fit_from_search<T: Real>(
    family: Family,
    s: &crate::minimize::Search<T>,
    param_is_mu: bool,
    bracket: (T, T),
) -> OptimizerFit<T> {
    let p = s.best.x.exp();
    let (lambda, mu) = if param_is_mu {
        (p.sqrt().recip(), p)
    } else {
        (p, (p * p).recip())
    };
    OptimizerFit {
        family,
        lambda_star: lambda,
        mu_star: mu,
        offset_star: T::zero(),
        distance_l1: s.best.fx,
        bracket,
        evaluations: s.evaluations,
        converged: s.converged,
        multimodal: s.multimodal,
        boundary_hit: s.boundary_hit,
        offset_boundary_hit: false,
        metadata: FitMetadata::default(),
    }
}

fn lambda_bracket<T: Real>() -> (T, T) {
    (lit(LAMBDA_BRACKET.0), lit(LAMBDA_BRACKET.1))
}

/// `inf_{λ, x₀} ‖u⁶ − λ² v⁶_{λ,x₀}‖₁` for a profile with `‖u‖₆⁶ = π/2`.
pub fn fit_nearest_sixth<T: Real>(u: &RadialDensity<T>, search_offset: bool) -> Result<OptimizerFit<T>> {
    if u.kind() != Kind::Profile {
        return Err(LabError::invalid("fit_nearest_sixth expects a profile"));
    }
    let l6 = total_of(u, |_, x| x.powi(6))?.value();
    if relative_gap(l6, T::FRAC_PI_2()) > lit(NORMALIZATION_TOL) {
        return Err(LabError::invalid(format!(
            "‖u‖₆⁶ = {} must equal π/2 (normalize first)",
            l6.to_f64_lossy()
        )));
    }
    let obj = L1Objective::new(u.grid(), u.values().iter().map(|x| x.powi(6)).collect(), Model::Sixth);
    let opts = SearchOptions::default();
    let (lo, hi) = lambda_bracket::<T>();
    let centered = obj.fit_at(T::zero(), lo, hi, &opts);
    let mut fit = fit_from_search(Family::V, &centered, false, (lo, hi));
    if !search_offset {
        return Ok(fit);
    }

    // inner searches are local around the centered optimum
    let local = SearchOptions {
        scan_points: 9,
        ..opts
    };
    let span = lit::<T>(1.0);
    let centre = centered.best.x;
    let (llo, lhi) = ((centre - span).exp().max(lo), (centre + span).exp().min(hi));
    let mut evaluations = centered.evaluations;
    let mut inner = |d: T| {
        let s = obj.fit_at(d, llo, lhi, &local);
        evaluations += s.evaluations;
        s
    };
    let outer = golden(|d: T| inner(d).best.fx, T::zero(), lit(OFFSET_CAP), lit(1e-4), 100);
    let best_offset = inner(outer.x);
    if best_offset.best.fx < centered.best.fx {
        let mut off = fit_from_search(Family::V, &best_offset, false, (lo, hi));
        off.offset_star = outer.x;
        off.offset_boundary_hit = lit::<T>(OFFSET_CAP) - outer.x <= lit(1e-3);
        off.converged = off.converged && outer.converged && !off.offset_boundary_hit;
        fit = off;
    }
    fit.evaluations = evaluations + outer.evaluations;
    Ok(fit)
}

/// `inf_λ ‖u⁴ − λ² v_λ⁴‖₁` for a profile with `‖u‖₄⁴ = π`.
pub fn fit_nearest_fourth<T: Real>(u: &RadialDensity<T>) -> Result<OptimizerFit<T>> {
    if u.kind() != Kind::Profile {
        return Err(LabError::invalid("fit_nearest_fourth expects a profile"));
    }
    let sigma_u = u.density_of();
    let l4 = total(&sigma_u)?.value();
    if relative_gap(l4, T::PI()) > lit(NORMALIZATION_TOL) {
        return Err(LabError::invalid(format!(
            "‖u‖₄⁴ = {} must equal π (normalize first)",
            l4.to_f64_lossy()
        )));
    }
    let obj = L1Objective::new(u.grid(), sigma_u.values().to_vec(), Model::Fourth);
    let (lo, hi) = lambda_bracket::<T>();
    let s = obj.fit_at(T::zero(), lo, hi, &SearchOptions::default());
    let mut fit = fit_from_search(Family::V, &s, false, (lo, hi));
    let me = moments_entropy(&sigma_u, &[1.0], &[])?;
    let ent = me.entropy_s.value();
    let n1 = me.n_p[0].value.value();
    fit.metadata = FitMetadata {
        entropy_s: Some(ent),
        moment_n1: Some(n1),
        lambda_floor: Some(step6_lambda_floor(ent, n1)),
    };
    Ok(fit)
}

/// `exp(−[(2/π)(S + N₁) + 4/e + log 2])`.
pub fn step6_lambda_floor<T: Real>(entropy_s: T, n1: T) -> T {
    let two = lit::<T>(2.0);
    let bound = two / T::PI() * (entropy_s + n1) + lit::<T>(4.0) / T::E() + two.ln();
    (-bound).exp()
}

/// `inf_μ ‖ρ − σ_{μ,M}‖₁` with `M` the mass of `ρ`.
pub fn fit_nearest_sigma<T: Real>(rho: &RadialDensity<T>) -> Result<OptimizerFit<T>> {
    if rho.kind() != Kind::Density {
        return Err(LabError::invalid("the σ-family fit expects a density"));
    }
    let mass = total(rho)?.value();
    if !(mass > T::zero() && mass.is_finite()) {
        return Err(LabError::invalid("the σ-family fit needs positive finite mass"));
    }
    let obj = L1Objective::new(rho.grid(), rho.values().to_vec(), Model::Sigma { mass });
    let (llo, lhi) = lambda_bracket::<T>();
    let (lo, hi) = ((lhi * lhi).recip(), (llo * llo).recip());
    let s = obj.fit_at(T::zero(), lo, hi, &SearchOptions::default());
    Ok(fit_from_search(Family::Sigma, &s, true, (lo, hi)))
}

/// `ratio = distance / deficit^exponent`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StabilityProbe<T> {
    pub deficit: T,
    pub distance_l1: T,
    pub exponent: T,
    pub ratio: T,
}

impl<T: Real> StabilityProbe<T> {
    pub fn new(deficit: T, distance_l1: T, exponent: T) -> Self {
        let ratio = if deficit > T::zero() {
            distance_l1 / deficit.powf(exponent)
        } else if distance_l1 == T::zero() {
            T::zero()
        } else {
            T::infinity()
        };
        Self {
            deficit,
            distance_l1,
            exponent,
            ratio,
        }
    }
}

/// Exponent `(p − 1)/(4p)` of the fourth-power estimate.
pub fn fourth_exponent(p: f64) -> f64 {
    (p - 1.0) / (4.0 * p)
}

/// Exponent `(1 − ε)/20` of the Log-HLS estimate.
pub fn hls_exponent(eps: f64) -> f64 {
    (1.0 - eps) / 20.0
}

fn scaled_profile<T: Real>(u: &RadialDensity<T>, power: i32, target: T) -> Result<RadialDensity<T>> {
    let norm = total_of(u, |_, x| x.powi(power))?.value();
    if !(norm > T::zero() && norm.is_finite()) {
        return Err(LabError::invalid(format!("‖u‖_{power} must be positive and finite")));
    }
    u.scale((target / norm).powf(T::from_i32(power).expect("small int").recip()))
}

/// `u` scaled so that `‖u‖₆⁶ = π/2`.
pub fn normalize_sixth<T: Real>(u: &RadialDensity<T>) -> Result<RadialDensity<T>> {
    scaled_profile(u, 6, T::FRAC_PI_2())
}

/// `u` scaled so that `‖u‖₄⁴ = π`.
pub fn normalize_fourth<T: Real>(u: &RadialDensity<T>) -> Result<RadialDensity<T>> {
    scaled_profile(u, 4, T::PI())
}

/// Sixth-power probe of a raw profile (normalized internally).
pub fn probe_sixth<T: Real>(u: &RadialDensity<T>, search_offset: bool) -> Result<(OptimizerFit<T>, StabilityProbe<T>)> {
    let un = normalize_sixth(u)?;
    let d = crate::functionals::gns_deficit(&un)?.value;
    let fit = fit_nearest_sixth(&un, search_offset)?;
    let probe = StabilityProbe::new(d, fit.distance_l1, lit(0.5));
    Ok((fit, probe))
}

/// Fourth-power probe of a raw profile (normalized internally).
pub fn probe_fourth<T: Real>(u: &RadialDensity<T>, p: f64) -> Result<(OptimizerFit<T>, StabilityProbe<T>)> {
    if !(p > 1.0 && p < 2.0) {
        return Err(LabError::invalid(format!("p = {p} must lie in (1, 2)")));
    }
    let un = normalize_fourth(u)?;
    let d = crate::functionals::gns_deficit(&un)?.value;
    let fit = fit_nearest_fourth(&un)?;
    let probe = StabilityProbe::new(d, fit.distance_l1, lit(fourth_exponent(p)));
    Ok((fit, probe))
}

/// Log-HLS probe with the hypotheses `F`, `H_{μ*,M}`, `D` recorded.
#[derive(Clone, Debug, Serialize)]
pub struct HlsFit<T> {
    pub fit: OptimizerFit<T>,
    pub probe: StabilityProbe<T>,
    pub free_energy: T,
    /// `H_{μ*,M}[ρ]`, `+∞` when the tail makes it diverge.
    pub fd_entropy: T,
    /// `H_{μ*,M}[ρ]` over the grid disk only.
    pub fd_entropy_truncated: T,
    pub dissipation: T,
}

/// `σ`-family fit, `δ_HLS` and the ratio at exponent `(1 − ε)/20`.
pub fn hls_fit<T: Real>(rho: &RadialDensity<T>, eps: f64) -> Result<HlsFit<T>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LabError::invalid(format!("ε = {eps} must lie in (0, 1)")));
    }
    let fit = fit_nearest_sigma(rho)?;
    let hls = log_hls(rho)?;
    let deficit = hls.deficit.max(T::zero());
    let probe = StabilityProbe::new(deficit, fit.distance_l1, lit(hls_exponent(eps)));
    let h = fd_entropy(rho, fit.mu_star, hls.mass)?;
    let d = dissipation(rho)?;
    Ok(HlsFit {
        fit,
        probe,
        free_energy: hls.value,
        fd_entropy: h.value,
        fd_entropy_truncated: h.truncated,
        dissipation: d.direct,
    })
}

/// `‖u⁶ − λ² v⁶_{λ,x₀}‖₁` with `|x₀| = offset`.
pub fn sixth_distance<T: Real>(u: &RadialDensity<T>, lambda: T, offset: T) -> T {
    L1Objective::new(u.grid(), u.values().iter().map(|x| x.powi(6)).collect(), Model::Sixth)
        .distance(lambda, offset)
}

/// `‖u⁴ − λ² v_λ⁴‖₁`.
pub fn fourth_distance<T: Real>(u: &RadialDensity<T>, lambda: T) -> T {
    L1Objective::new(u.grid(), u.values().iter().map(|x| x.powi(4)).collect(), Model::Fourth)
        .distance(lambda, T::zero())
}

/// `‖ρ − σ_{μ,M}‖₁`.
pub fn sigma_distance<T: Real>(rho: &RadialDensity<T>, mu: T, mass: T) -> T {
    L1Objective::new(rho.grid(), rho.values().to_vec(), Model::Sigma { mass })
        .distance(mu, T::zero())
}

/// The class `M_{2,p,q,A,B}`: `∫|x|^p ρ ≤ A` and `∫ρ^q ≤ B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityClass {
    pub p: f64,
    pub q: f64,
    pub a: f64,
    pub b: f64,
}

impl DensityClass {
    /// Checks membership; the error names the violated bound.
    pub fn verify<T: Real>(&self, rho: &RadialDensity<T>) -> Result<()> {
        if !(self.p > 0.0 && self.q > 1.0) {
            return Err(LabError::invalid("class needs p > 0 and q > 1"));
        }
        let pp = lit::<T>(self.p);
        let qq = lit::<T>(self.q);
        let moment = total_of(rho, |r, x| r.powf(pp) * x)?.value().to_f64_lossy();
        if !(moment <= self.a) {
            return Err(LabError::invalid(format!(
                "moment bound violated: ∫|x|^{} ρ = {moment} > A = {}",
                self.p, self.a
            )));
        }
        let lq = total_of(rho, |_, x| x.powf(qq))?.value().to_f64_lossy();
        if !(lq <= self.b) {
            return Err(LabError::invalid(format!(
                "L^q bound violated: ∫ρ^{} = {lq} > B = {}",
                self.q, self.b
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContinuityRecord<T> {
    /// `|F[ρ] − F[σ]|`
    pub delta_f: T,
    /// `|∫ρ log ρ − ∫σ log σ|`
    pub delta_s: T,
    /// `|U[ρ] − U[σ]|` with `U = (2/M)∬ρ(x) log|x−y| ρ(y)`.
    pub delta_u: T,
    /// `‖ρ − σ‖₁`
    pub l1: T,
    pub class: DensityClass,
}

/// Differences of `F`, its entropy and interaction parts against `‖ρ − σ‖₁`.
pub fn continuity_probe<T: Real>(
    rho: &RadialDensity<T>,
    other: &RadialDensity<T>,
    class: &DensityClass,
) -> Result<ContinuityRecord<T>> {
    class.verify(rho)?;
    class.verify(other)?;
    if *rho.grid() != *other.grid() {
        return Err(LabError::Structural("densities live on different grids".into()));
    }
    let m1 = total(rho)?.value();
    let m2 = total(other)?.value();
    if relative_gap(m2, m1) > lit(NORMALIZATION_TOL) {
        return Err(LabError::invalid(format!(
            "masses differ: {} vs {}",
            m1.to_f64_lossy(),
            m2.to_f64_lossy()
        )));
    }
    let parts = |d: &RadialDensity<T>, m: T| -> Result<(T, T)> {
        let s = entropy(d)?.value();
        let u = lit::<T>(2.0) / m * log_interaction(d)?.value();
        Ok((s, u))
    };
    let (s1, u1) = parts(rho, m1)?;
    let (s2, u2) = parts(other, m2)?;
    let diff: Vec<T> = rho
        .values()
        .iter()
        .zip(other.values())
        .map(|(a, b)| (*a - *b).abs())
        .collect();
    let l1 = rho.grid().integral(&diff)?;
    Ok(ContinuityRecord {
        delta_f: ((s1 + u1) - (s2 + u2)).abs(),
        delta_s: (s1 - s2).abs(),
        delta_u: (u1 - u2).abs(),
        l1: if l1.divergent { l1.truncated } else { l1.value() },
        class: *class,
    })
}

/// Runs `f` over a corpus in parallel, preserving order.
pub fn sweep<I: Sync, O: Send>(items: &[I], f: impl Fn(&I) -> O + Sync + Send) -> Vec<O> {
    items.par_iter().map(f).collect()
}
