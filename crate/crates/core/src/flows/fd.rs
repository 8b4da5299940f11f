//! Fast diffusion `∂_t σ = (1/r)∂_r[r(∂_r√σ + c rσ)]`, `c = 2√(π/(κM))`.
//!
//! Unknown `s = √σ`. With `φ = 1/s − c r²/2` the flux is `−r s² ∂_r φ` and
//! the steady states `σ_{κ,M}` are exactly the `φ ≡ const` states. The edge
//! flux
//! `G = (r_e/h)[(s_{i+1} − s_i) + β s_i s_{i+1}]`, `β = c(c_{i+1}² − c_i²)/2`,
//! is `−r_e s_i s_{i+1} (φ_{i+1} − φ_i)/h`, so sampled steady states carry
//! zero flux to round-off and the scheme is the discrete gradient flow of
//! `Σ |cell_i| (c c_i² σ_i/2 − 2√σ_i)`. Steps are backward Euler solved by
//! Newton with a tridiagonal Jacobian.

use super::tridiag::solve_tridiagonal;
use super::{check_initial, drive, FlowControls, FlowKind, FlowTrajectory, RunSpec, Scheme, StepError, MASS_TOL};
use crate::error::{LabError, Result};
use crate::radial::RadialDensity;
use crate::scalar::{lit, Real};

pub(crate) struct FdScheme<T> {
    volumes: Vec<T>,
    /// `r_e / (c_{i+1} − c_i)` per interior edge.
    a: Vec<T>,
    beta: Vec<T>,
}

impl<T: Real> FdScheme<T> {
    pub(crate) fn new(grid: &crate::radial::RadialGrid<T>, kappa: T, mass: T) -> Self {
        let c = lit::<T>(2.0) * (T::PI() / (kappa * mass)).sqrt();
        let centers = grid.centers();
        let edges = grid.edges();
        let n = centers.len();
        let mut a = Vec::with_capacity(n - 1);
        let mut beta = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let h = centers[i + 1] - centers[i];
            a.push(edges[i + 1] / h);
            beta.push(c * (centers[i + 1] * centers[i + 1] - centers[i] * centers[i]) * lit(0.5));
        }
        Self {
            volumes: grid.volumes().to_vec(),
            a,
            beta,
        }
    }

    fn flux(&self, s: &[T], e: usize) -> T {
        self.a[e] * ((s[e + 1] - s[e]) + self.beta[e] * s[e] * s[e + 1])
    }

    /// Residual `|cell_i|(s_i² − σ_i) − Δt(G_{i+½} − G_{i−½})`.
    fn residual(&self, s: &[T], old: &[T], dt: T) -> Vec<T> {
        let n = s.len();
        let fluxes: Vec<T> = (0..n - 1).map(|e| self.flux(s, e)).collect();
        (0..n)
            .map(|i| {
                let right = if i + 1 < n { fluxes[i] } else { T::zero() };
                let left = if i > 0 { fluxes[i - 1] } else { T::zero() };
                self.volumes[i] * (s[i] * s[i] - old[i]) - dt * (right - left)
            })
            .collect()
    }
}

impl<T: Real> Scheme<T> for FdScheme<T> {
    fn step(&mut self, state: &[T], dt: T, controls: &FlowControls<T>) -> std::result::Result<(Vec<T>, usize), StepError> {
        let n = state.len();
        let mut s: Vec<T> = state.iter().map(|x| x.sqrt()).collect();
        let (mut lower, mut diag, mut upper) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
        for it in 1..=controls.solver_max_iter {
            let r = self.residual(&s, state, dt);
            for i in 0..n {
                diag[i] = lit::<T>(2.0) * self.volumes[i] * s[i];
                lower[i] = T::zero();
                upper[i] = T::zero();
            }
            for e in 0..n - 1 {
                let (a, b) = (self.a[e], self.beta[e]);
                let dg_left = a * (b * s[e + 1] - T::one());
                let dg_right = a * (T::one() + b * s[e]);
                // row e: −Δt G_e, row e+1: +Δt G_e
                diag[e] = diag[e] - dt * dg_left;
                upper[e] = upper[e] - dt * dg_right;
                diag[e + 1] = diag[e + 1] + dt * dg_right;
                lower[e + 1] = lower[e + 1] + dt * dg_left;
            }
            let rhs: Vec<T> = r.iter().map(|x| -*x).collect();
            let delta = solve_tridiagonal(&lower, &diag, &upper, &rhs).map_err(|_| StepError::Retry)?;
            // damp so that s stays positive
            let mut alpha = T::one();
            for i in 0..n {
                if delta[i] < T::zero() && s[i] > T::zero() {
                    alpha = alpha.min(lit::<T>(0.9) * s[i] / -delta[i]);
                }
            }
            let mut rel = T::zero();
            for i in 0..n {
                let next = (s[i] + alpha * delta[i]).max(T::zero());
                if !next.is_finite() {
                    return Err(StepError::Retry);
                }
                let scale = s[i].max(T::min_positive_value());
                rel = rel.max((next - s[i]).abs() / scale);
                s[i] = next;
            }
            if rel <= controls.solver_tol && alpha == T::one() {
                return Ok((s.iter().map(|x| *x * *x).collect(), it));
            }
        }
        Err(StepError::Retry)
    }
}

/// Integrates the fast diffusion equation from `sigma0` to `t_end`.
///
/// `sigma0` must carry mass `M` (tail closure included) to within
/// [`MASS_TOL`].
pub fn fd_evolve<T: Real>(
    sigma0: &RadialDensity<T>,
    kappa: T,
    mass: T,
    t_end: T,
    controls: &FlowControls<T>,
) -> Result<FlowTrajectory<T>> {
    controls.validate()?;
    if !(kappa > T::zero() && kappa.is_finite()) {
        return Err(LabError::invalid("kappa must be positive"));
    }
    let m0 = check_initial(sigma0, mass, t_end)?;
    if ((m0 - mass) / mass).abs() > lit(MASS_TOL) {
        return Err(LabError::invalid(format!(
            "initial mass {} differs from M = {} by more than {MASS_TOL} relative",
            m0.to_f64_lossy(),
            mass.to_f64_lossy()
        )));
    }
    let mut scheme = FdScheme::new(sigma0.grid(), kappa, mass);
    drive(
        &mut scheme,
        sigma0,
        RunSpec {
            kind: FlowKind::FastDiffusion,
            kappa,
            mass,
            t_end,
            mass_regime: None,
        },
        controls,
    )
}
