//! Scalar functionals of radial densities: norms, the GNS deficit, the
//! Log-HLS functional and its deficit, the fast-diffusion entropy
//! `H_{κ,M}`, the dissipation `D`, the entropy `S` and radial moments.
//!
//! Every integral carries a tail closure beyond `r_max` and an error
//! estimate; deficits are reported together with the tolerance they are
//! meaningful to.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{LabError, Result};
use crate::families::{hls_minimum, sigma as sigma_family};
use crate::radial::{grad_sq_integral, Integral, Kind, PowerTail, RadialDensity};
use crate::scalar::{lit, Real};

/// Absolute tolerance floor added to every propagated quadrature error.
pub const DEFAULT_TOL: f64 = 1e-6;

fn finite<T: Real>(x: T, what: &str) -> Result<T> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(LabError::numerical(format!("{what} is not finite")))
    }
}

fn require_kind<T: Real>(f: &RadialDensity<T>, kind: Kind, op: &str) -> Result<()> {
    if f.kind() != kind {
        return Err(LabError::invalid(format!("{op} expects a {kind:?} input")));
    }
    Ok(())
}

/// `∫ f dx` over the plane with tail closure.
pub fn total<T: Real>(f: &RadialDensity<T>) -> Result<Integral<T>> {
    f.grid().integral(f.values())
}

/// `∫ g(r, f) dx` for a pointwise transform `g`, with the tail closed
/// through the fitted decay of the transformed values.
pub fn total_of<T: Real>(f: &RadialDensity<T>, g: impl Fn(T, T) -> T) -> Result<Integral<T>> {
    f.grid().integral(&f.pointwise(g))
}

/// The three norms entering the GNS inequality for a profile `u`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GnsNorms<T> {
    /// `‖∇u‖₂²`
    pub grad_u_sq: Integral<T>,
    /// `‖u‖₄⁴`
    pub l4_4: Integral<T>,
    /// `‖u‖₆⁶`
    pub l6_6: Integral<T>,
}

impl<T: Real> GnsNorms<T> {
    pub fn of_profile(u: &RadialDensity<T>) -> Result<Self> {
        require_kind(u, Kind::Profile, "GNS norms")?;
        Ok(Self {
            grad_u_sq: grad_sq_integral(u)?,
            l4_4: total_of(u, |_, x| x.powi(4))?,
            l6_6: total_of(u, |_, x| x.powi(6))?,
        })
    }

    pub fn values(&self) -> (T, T, T) {
        (self.grad_u_sq.value(), self.l4_4.value(), self.l6_6.value())
    }
}

/// `δ_GNS` from the three norms.
pub fn gns_from_norms<T: Real>(grad: T, l4: T, l6: T) -> T {
    (grad * l4).sqrt() - (T::PI() * l6).sqrt()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GnsDeficit<T> {
    pub value: T,
    pub norms: GnsNorms<T>,
    /// First-order propagation of the norm errors plus [`DEFAULT_TOL`].
    pub tol: T,
}

/// `δ_GNS[u] = ‖∇u‖₂‖u‖₄² − √π‖u‖₆³`.
pub fn gns_deficit<T: Real>(u: &RadialDensity<T>) -> Result<GnsDeficit<T>> {
    let norms = GnsNorms::of_profile(u)?;
    gns_deficit_from(norms)
}

pub fn gns_deficit_from<T: Real>(norms: GnsNorms<T>) -> Result<GnsDeficit<T>> {
    let (g, l4, l6) = norms.values();
    let g = finite(g, "‖∇u‖₂²")?;
    let l4 = finite(l4, "‖u‖₄⁴")?;
    let l6 = finite(l6, "‖u‖₆⁶")?;
    let value = finite(gns_from_norms(g, l4, l6), "GNS deficit")?;
    let half = lit::<T>(0.5);
    let tiny = T::min_positive_value();
    let tol = half * (l4 / g.max(tiny)).sqrt() * norms.grad_u_sq.error
        + half * (g / l4.max(tiny)).sqrt() * norms.l4_4.error
        + half * (T::PI() / l6.max(tiny)).sqrt() * norms.l6_6.error
        + lit(DEFAULT_TOL);
    Ok(GnsDeficit { value, norms, tol })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LogHls<T> {
    /// `F[ρ]`
    pub value: T,
    /// `F[ρ] − C(M)`
    pub deficit: T,
    pub mass: T,
    /// `∫ ρ log ρ`
    pub entropy: T,
    /// `∬ ρ(x) ρ(y) log|x − y|`
    pub interaction: T,
    pub hls_minimum: T,
    pub error: T,
}

/// `∬ ρ(x)ρ(y) log max(|x|,|y|) dx dy = 2∫ ρ(x) log|x| m(|x|) dx` with the
/// cumulative mass `m`, tail closed analytically.
pub fn log_interaction<T: Real>(rho: &RadialDensity<T>) -> Result<Integral<T>> {
    let grid = rho.grid();
    let m = grid.cumulative_at_centers(rho.values())?;
    let two = lit::<T>(2.0);
    let f: Vec<T> = grid
        .centers()
        .iter()
        .zip(rho.values())
        .zip(&m)
        .map(|((r, p), mi)| two * *p * r.ln() * *mi)
        .collect();
    let m_r = *grid.cumulative_at_edges(rho.values())?.last().expect("nonempty grid");
    grid.integral_with_closure(&f, rho.values(), |t: &PowerTail<T>| {
        Some(two * m_r * t.log_moment()? + t.self_interaction()?)
    })
}

/// `∫ ρ log ρ` (with `0 log 0 = 0`), tail closed analytically.
pub fn entropy<T: Real>(rho: &RadialDensity<T>) -> Result<Integral<T>> {
    let f = rho.pointwise(|_, p| if p > T::zero() { p * p.ln() } else { T::zero() });
    rho.grid()
        .integral_with_closure(&f, rho.values(), |t: &PowerTail<T>| t.entropy())
}

/// `F[ρ] = ∫ρ log ρ + (2/M)∬ρ(x) log|x−y| ρ(y)` and the deficit `F − C(M)`.
pub fn log_hls<T: Real>(rho: &RadialDensity<T>) -> Result<LogHls<T>> {
    require_kind(rho, Kind::Density, "log_hls")?;
    let mass = total(rho)?;
    if !(mass.value() > T::zero()) {
        return Err(LabError::invalid("log_hls needs positive mass"));
    }
    let ent = entropy(rho)?;
    let inter = log_interaction(rho)?;
    let m = finite(mass.value(), "mass")?;
    let e = finite(ent.value(), "entropy")?;
    let i = finite(inter.value(), "log interaction")?;
    let two = lit::<T>(2.0);
    let value = e + two / m * i;
    let c = hls_minimum(m);
    let error = ent.error + two / m * inter.error + (two * i / (m * m)).abs() * mass.error;
    Ok(LogHls {
        value,
        deficit: value - c,
        mass: m,
        entropy: e,
        interaction: i,
        hls_minimum: c,
        error: error + lit(DEFAULT_TOL),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FdEntropy<T> {
    /// Truncated value plus tail closure; `+∞` when divergent.
    pub value: T,
    /// Value over the grid disk only.
    pub truncated: T,
    pub divergent: bool,
    /// `(H(R) − H(R₁)) / log(R/R₁)` with `R₁ ≈ R/10`: the coefficient of
    /// logarithmic growth in the domain radius.
    pub growth_rate: T,
    pub kappa: T,
    pub mass: T,
    pub error: T,
}

/// `H_{κ,M}[σ] = ∫ (√σ − √σ_{κ,M})² / √σ_{κ,M}`.
pub fn fd_entropy<T: Real>(sigma: &RadialDensity<T>, kappa: T, mass: T) -> Result<FdEntropy<T>> {
    require_kind(sigma, Kind::Density, "fd_entropy")?;
    if !(kappa > T::zero() && kappa.is_finite()) {
        return Err(LabError::invalid("kappa must be positive"));
    }
    if !(mass > T::zero() && mass.is_finite()) {
        return Err(LabError::invalid("mass must be positive"));
    }
    // gaps within a few ulps of √σ_κ are rounding, not mismatch; left in, they
    // fake a non-integrable tail on exact steady states
    let floor = lit::<T>(4.0) * T::epsilon();
    let f = sigma.pointwise(|r, s| {
        let sk = sigma_family(kappa, mass, r).sqrt();
        let d = s.sqrt() - sk;
        if d.abs() <= floor * sk {
            T::zero()
        } else {
            d * d / sk
        }
    });
    let grid = sigma.grid();
    let int = grid.integral(&f)?;
    let cum = grid.cumulative_at_edges(&f)?;
    let edges = grid.edges();
    let r = grid.r_max();
    let k = edges
        .partition_point(|e| *e < r / lit(10.0))
        .clamp(1, edges.len() - 2);
    let growth_rate = (int.truncated - cum[k]) / (r / edges[k]).ln();
    Ok(FdEntropy {
        value: int.value(),
        truncated: int.truncated,
        divergent: int.divergent,
        growth_rate,
        kappa,
        mass,
        error: int.error,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Dissipation<T> {
    /// `(1/π)(‖∇u‖₂²‖u‖₄⁴ − π‖u‖₆⁶)`, `u = σ^{1/4}`.
    pub direct: T,
    /// `(1/π)(‖∇u‖₂‖σ‖₁^{1/2} + √π‖σ‖_{3/2}^{3/4}) δ_GNS[u]`.
    pub factorized: T,
    /// `|direct − factorized| / max(|direct|, tiny)`.
    pub relative_gap: T,
    pub gns: GnsDeficit<T>,
    pub tol: T,
}

/// `D[σ]` in direct and factorized form.
pub fn dissipation<T: Real>(sigma: &RadialDensity<T>) -> Result<Dissipation<T>> {
    require_kind(sigma, Kind::Density, "dissipation")?;
    let gns = gns_deficit(&sigma.profile_of())?;
    Ok(dissipation_from(gns))
}

pub fn dissipation_from<T: Real>(gns: GnsDeficit<T>) -> Dissipation<T> {
    let (g, l4, l6) = gns.norms.values();
    let pi = T::PI();
    let direct = (g * l4 - pi * l6) / pi;
    let factorized = ((g * l4).sqrt() + (pi * l6).sqrt()) * gns.value / pi;
    let relative_gap = (direct - factorized).abs() / direct.abs().max(T::min_positive_value());
    let tol = (l4 * gns.norms.grad_u_sq.error + g * gns.norms.l4_4.error + pi * gns.norms.l6_6.error)
        / pi
        + lit(DEFAULT_TOL);
    Dissipation {
        direct,
        factorized,
        relative_gap,
        gns,
        tol,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Moment<T> {
    pub p: f64,
    pub value: Integral<T>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentsEntropy<T> {
    /// `S = ∫ σ log σ`
    pub entropy_s: Integral<T>,
    /// `N_p = ∫ |x|^p σ`
    pub n_p: Vec<Moment<T>>,
    /// `M_p = ∫ |x|^p σ^{3/2}`
    pub m_p: Vec<Moment<T>>,
    /// `‖σ‖_{3/2}`
    pub l_3_2: T,
}

/// Entropy, moments and `‖σ‖_{3/2}`.
pub fn moments_entropy<T: Real>(
    sigma: &RadialDensity<T>,
    p_list: &[f64],
    p6_list: &[f64],
) -> Result<MomentsEntropy<T>> {
    require_kind(sigma, Kind::Density, "moments_entropy")?;
    for p in p_list.iter().chain(p6_list) {
        if !(p.is_finite() && *p >= 0.0) {
            return Err(LabError::invalid(format!("moment order {p} must be nonnegative")));
        }
    }
    let moment = |p: f64, six: bool| -> Result<Moment<T>> {
        let pp = lit::<T>(p);
        let value = total_of(sigma, |r, s| {
            let base = if six { s * s.sqrt() } else { s };
            if p == 0.0 {
                base
            } else {
                r.powf(pp) * base
            }
        })?;
        Ok(Moment { p, value })
    };
    let n_p = p_list.iter().map(|p| moment(*p, false)).collect::<Result<_>>()?;
    let m_p = p6_list.iter().map(|p| moment(*p, true)).collect::<Result<_>>()?;
    let l32 = total_of(sigma, |_, s| s * s.sqrt())?.value();
    Ok(MomentsEntropy {
        entropy_s: entropy(sigma)?,
        n_p,
        m_p,
        l_3_2: l32.powf(lit(2.0 / 3.0)),
    })
}

/// Parameters of a [`FunctionalReport`].
#[derive(Clone, Debug, Serialize)]
pub struct ReportOptions<T> {
    /// Scale of the reference steady state in `H_{κ,M}`.
    pub kappa: T,
    /// Mass of the reference steady state; `None` uses the measured mass.
    pub mass: Option<T>,
    pub p_list: Vec<f64>,
    pub p6_list: Vec<f64>,
}

impl<T: Real> Default for ReportOptions<T> {
    fn default() -> Self {
        Self {
            kappa: T::one(),
            mass: None,
            p_list: vec![1.0],
            p6_list: vec![1.0],
        }
    }
}

/// All scalar functionals of one density `σ` (profile `u = σ^{1/4}`).
#[derive(Clone, Debug, Serialize)]
pub struct FunctionalReport<T> {
    pub grad_u_sq: T,
    pub l4_4: T,
    pub l6_6: T,
    pub l1: T,
    pub l_3_2: T,
    pub gns_deficit: T,
    pub log_hls: T,
    pub hls_deficit: T,
    pub fd_entropy: T,
    pub fd_entropy_truncated: T,
    pub fd_entropy_divergent: bool,
    pub kappa: T,
    pub mass: T,
    pub dissipation: T,
    pub dissipation_factorized: T,
    pub entropy_s: T,
    pub moment_p: Vec<(f64, T)>,
    pub moment6_p: Vec<(f64, T)>,
    /// Error estimate per field name.
    pub tail_loss: Vec<(String, T)>,
}

impl<T: Real> FunctionalReport<T> {
    /// Evaluates every functional of the density `sigma`.
    pub fn evaluate(sigma: &RadialDensity<T>, opts: &ReportOptions<T>) -> Result<Self> {
        require_kind(sigma, Kind::Density, "functional report")?;
        let l1 = total(sigma)?;
        let mass = opts.mass.unwrap_or(l1.value());
        let gns = gns_deficit(&sigma.profile_of())?;
        let diss = dissipation_from(gns);
        let hls = log_hls(sigma)?;
        let h = fd_entropy(sigma, opts.kappa, mass)?;
        let me = moments_entropy(sigma, &opts.p_list, &opts.p6_list)?;
        let (g, l4, l6) = gns.norms.values();
        let tail_loss = vec![
            ("grad_u_sq".to_string(), gns.norms.grad_u_sq.error),
            ("l4_4".to_string(), gns.norms.l4_4.error),
            ("l6_6".to_string(), gns.norms.l6_6.error),
            ("l1".to_string(), l1.error),
            ("gns_deficit".to_string(), gns.tol),
            ("log_hls".to_string(), hls.error),
            ("fd_entropy".to_string(), h.error),
            ("dissipation".to_string(), diss.tol),
            ("entropy_s".to_string(), me.entropy_s.error),
        ];
        Ok(Self {
            grad_u_sq: g,
            l4_4: l4,
            l6_6: l6,
            l1: l1.value(),
            l_3_2: me.l_3_2,
            gns_deficit: gns.value,
            log_hls: hls.value,
            hls_deficit: hls.deficit,
            fd_entropy: h.value,
            fd_entropy_truncated: h.truncated,
            fd_entropy_divergent: h.divergent,
            kappa: opts.kappa,
            mass,
            dissipation: diss.direct,
            dissipation_factorized: diss.factorized,
            entropy_s: me.entropy_s.value(),
            moment_p: me.n_p.iter().map(|m| (m.p, m.value.value())).collect(),
            moment6_p: me.m_p.iter().map(|m| (m.p, m.value.value())).collect(),
            tail_loss,
        })
    }

    /// Ordered `(name, value)` pairs of the flat representation. Map entries
    /// are keyed `moment_p_<p>`, `moment6_p_<p>` and `tail_loss_<field>`.
    pub fn flat_fields(&self) -> Vec<(String, f64)> {
        let f = |x: T| x.to_f64_lossy();
        let mut out: Vec<(String, f64)> = vec![
            ("grad_u_sq".into(), f(self.grad_u_sq)),
            ("l4_4".into(), f(self.l4_4)),
            ("l6_6".into(), f(self.l6_6)),
            ("l1".into(), f(self.l1)),
            ("l_3_2".into(), f(self.l_3_2)),
            ("gns_deficit".into(), f(self.gns_deficit)),
            ("log_hls".into(), f(self.log_hls)),
            ("hls_deficit".into(), f(self.hls_deficit)),
            ("fd_entropy".into(), f(self.fd_entropy)),
            ("fd_entropy_truncated".into(), f(self.fd_entropy_truncated)),
            (
                "fd_entropy_divergent".into(),
                if self.fd_entropy_divergent { 1.0 } else { 0.0 },
            ),
            ("kappa".into(), f(self.kappa)),
            ("mass".into(), f(self.mass)),
            ("dissipation".into(), f(self.dissipation)),
            ("dissipation_factorized".into(), f(self.dissipation_factorized)),
            ("entropy_S".into(), f(self.entropy_s)),
        ];
        out.extend(self.moment_p.iter().map(|(p, v)| (format!("moment_p_{p}"), f(*v))));
        out.extend(self.moment6_p.iter().map(|(p, v)| (format!("moment6_p_{p}"), f(*v))));
        out.extend(self.tail_loss.iter().map(|(k, v)| (format!("tail_loss_{k}"), f(*v))));
        out
    }

    /// Flat JSON object; non-finite values become `null`, the divergence
    /// flag is a boolean.
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for (k, v) in self.flat_fields() {
            let value = if k == "fd_entropy_divergent" {
                Value::Bool(v != 0.0)
            } else {
                serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
            };
            map.insert(k, value);
        }
        Value::Object(map)
    }

    pub fn csv_header(&self) -> String {
        self.flat_fields()
            .iter()
            .map(|(k, _)| k.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn csv_row(&self) -> String {
        self.flat_fields()
            .iter()
            .map(|(_, v)| format_float(*v))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Shortest round-trip formatting; `inf`, `-inf` and `nan` spelled out.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::v;
    use crate::radial::make_grid;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid() -> Arc<crate::radial::RadialGrid<f64>> {
        Arc::new(make_grid(1e3, 4096, 3.0).unwrap())
    }

    #[test]
    fn gns_deficit_vanishes_on_v() {
        let u = RadialDensity::from_fn(grid(), Kind::Profile, |r| v(1.0, r)).unwrap();
        let d = gns_deficit(&u).unwrap();
        assert!(d.value.abs() < 1e-6, "{}", d.value);
        assert!(d.tol < 1e-5);
    }

    #[test]
    fn kind_is_checked() {
        let s = RadialDensity::from_fn(grid(), Kind::Density, |r| v(1.0, r)).unwrap();
        assert!(gns_deficit(&s).is_err());
        assert!(log_hls(&s.profile_of()).is_err());
    }

    #[test]
    fn zero_mass_rejected() {
        let z = RadialDensity::new(grid(), vec![0.0; 4096], Kind::Density).unwrap();
        assert!(matches!(log_hls(&z), Err(LabError::InvalidArgument(_))));
    }

    #[test]
    fn flat_json_has_field_names() {
        let s = RadialDensity::from_fn(grid(), Kind::Density, |r| sigma_family(1.0, 8.0 * PI, r)).unwrap();
        let rep = FunctionalReport::evaluate(&s, &ReportOptions::default()).unwrap();
        let j = rep.to_json();
        for k in ["grad_u_sq", "gns_deficit", "hls_deficit", "entropy_S", "moment_p_1", "tail_loss_l1"] {
            assert!(j.get(k).is_some(), "{k}");
        }
        assert_eq!(rep.csv_header().split(',').count(), rep.csv_row().split(',').count());
    }

    #[test]
    fn float_formatting() {
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(f64::INFINITY), "inf");
        assert_eq!(format_float(1.0), "1.0");
    }
}
