//! Closed-form optimizer families and their reference constants.
//!
//! * `v_λ(r) = (1 + λ²r²)^{-1/2}`, the GNS optimizers;
//! * `σ_{κ,M}(r) = (M/π) κ/(κ + r²)²`, the Log-HLS optimizers and flow steady states;
//! * `g(z) = 1/(1 + |z|²)` on `R⁴`, the 4D Sobolev optimizer.
//!
//! `σ_{1/λ²,M} = (M/π) λ² v_λ⁴` pointwise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::scalar::{lit, Real};

/// Number of angular nodes used to average an off-center family member.
pub const ANGULAR_NODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    V,
    Sigma,
    G4d,
}

impl FromStr for Family {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v" => Ok(Self::V),
            "sigma" => Ok(Self::Sigma),
            "g4d" => Ok(Self::G4d),
            other => Err(LabError::invalid(format!("unknown family tag `{other}`"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::V => "v",
            Self::Sigma => "sigma",
            Self::G4d => "g4d",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerParams<T> {
    pub lambda: T,
    pub kappa: T,
    pub mass: T,
    /// `|x₀|`; only the magnitude matters for radial comparisons.
    pub center_offset: T,
}

impl<T: Real> Default for OptimizerParams<T> {
    fn default() -> Self {
        Self {
            lambda: T::one(),
            kappa: T::one(),
            mass: lit(8.0 * std::f64::consts::PI),
            center_offset: T::zero(),
        }
    }
}

impl<T: Real> OptimizerParams<T> {
    pub fn with_lambda(lambda: T) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn with_kappa_mass(kappa: T, mass: T) -> Self {
        Self {
            kappa,
            mass,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: T| x.is_finite() && x > T::zero();
        if !positive(self.lambda) {
            return Err(LabError::invalid("lambda must be positive"));
        }
        if !positive(self.kappa) {
            return Err(LabError::invalid("kappa must be positive"));
        }
        if !positive(self.mass) {
            return Err(LabError::invalid("mass must be positive"));
        }
        if !(self.center_offset.is_finite() && self.center_offset >= T::zero()) {
            return Err(LabError::invalid("center offset must be nonnegative"));
        }
        Ok(())
    }
}

/// `v_λ(r)`.
#[inline]
pub fn v<T: Real>(lambda: T, r: T) -> T {
    let lr = lambda * r;
    (T::one() + lr * lr).sqrt().recip()
}

/// `σ_{κ,M}(r)`.
#[inline]
pub fn sigma<T: Real>(kappa: T, mass: T, r: T) -> T {
    let d = kappa + r * r;
    mass / T::PI() * kappa / (d * d)
}

/// `λ g(λz)` at `|z| = r`; `λ = 1` gives `1/(1 + r²)`.
#[inline]
pub fn g4d<T: Real>(lambda: T, r: T) -> T {
    let lr = lambda * r;
    lambda / (T::one() + lr * lr)
}

/// `C(M) = M(log M − log π − 1)`, the minimum of the Log-HLS functional at
/// mass `M` (the value of `F` on every `σ_{κ,M}`).
pub fn hls_minimum<T: Real>(mass: T) -> T {
    mass * (mass.ln() - T::PI().ln() - T::one())
}

/// Family value at distance `r` from the family center.
pub fn eval_centered<T: Real>(which: Family, p: &OptimizerParams<T>, r: T) -> T {
    match which {
        Family::V => v(p.lambda, r),
        Family::Sigma => sigma(p.kappa, p.mass, r),
        Family::G4d => g4d(p.lambda, r),
    }
}

/// Distance from the point at polar angle `theta_k = 2πk/n` on the circle of
/// radius `r` to the offset center `(d, 0)`.
#[inline]
pub fn offset_distance<T: Real>(r: T, d: T, k: usize, n: usize) -> T {
    let theta = T::two_pi() * T::from_usize_lossy(k) / T::from_usize_lossy(n);
    (r * r + d * d - lit::<T>(2.0) * r * d * theta.cos())
        .max(T::zero())
        .sqrt()
}

/// Pointwise family value; with a center offset, the mean over the circle
/// `|x| = r` by the periodic [`ANGULAR_NODES`]-point rule.
pub fn eval_family<T: Real>(which: Family, params: &OptimizerParams<T>, r: T) -> Result<T> {
    params.validate()?;
    if !(r >= T::zero() && r.is_finite()) {
        return Err(LabError::invalid("radius must be finite and nonnegative"));
    }
    let d = params.center_offset;
    if d == T::zero() {
        return Ok(eval_centered(which, params, r));
    }
    let n = ANGULAR_NODES;
    let sum = (0..n).fold(T::zero(), |acc, k| {
        acc + eval_centered(which, params, offset_distance(r, d, k, n))
    });
    Ok(sum / T::from_usize_lossy(n))
}

/// One analytic anchor: closed form as text plus its value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceConstant {
    pub name: &'static str,
    pub expression: &'static str,
    pub value: f64,
}

/// Analytic anchors for the unit-scale optimizers; `M`-dependent entries are
/// evaluated at the critical mass `M = 8π`.
pub fn reference_constants() -> Vec<ReferenceConstant> {
    use std::f64::consts::PI;
    let m = 8.0 * PI;
    vec![
        ReferenceConstant {
            name: "v_l6_6",
            expression: "pi/2",
            value: PI / 2.0,
        },
        ReferenceConstant {
            name: "v_l4_4",
            expression: "pi",
            value: PI,
        },
        ReferenceConstant {
            name: "v_grad_sq",
            expression: "pi/2",
            value: PI / 2.0,
        },
        ReferenceConstant {
            name: "g_l4_4",
            expression: "pi^2/6",
            value: PI * PI / 6.0,
        },
        ReferenceConstant {
            name: "sigma_mass",
            expression: "M",
            value: m,
        },
        ReferenceConstant {
            name: "hls_minimum",
            expression: "M*(log(M) - log(pi) - 1)",
            value: hls_minimum(m),
        },
        ReferenceConstant {
            name: "hls_minimum_critical",
            expression: "8*pi*(log(8) - 1)",
            value: m * (8f64.ln() - 1.0),
        },
    ]
}

/// Looks up a constant of [`reference_constants`] by name.
pub fn reference_value(name: &str) -> Option<f64> {
    reference_constants()
        .into_iter()
        .find(|c| c.name == name)
        .map(|c| c.value)
}

/// The constant table as pretty JSON.
pub fn reference_constants_json() -> String {
    serde_json::to_string_pretty(&reference_constants()).expect("table serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn pointwise_anchors() {
        let p = OptimizerParams::<f64>::default();
        assert_eq!(eval_family(Family::V, &p, 0.0).unwrap(), 1.0);
        let q = OptimizerParams::with_kappa_mass(2.0, 3.0);
        assert!((eval_family(Family::Sigma, &q, 0.0).unwrap() - 3.0 / (PI * 2.0)).abs() < 1e-15);
        assert_eq!(g4d(1.0, 1.0), 0.5);
    }

    #[test]
    fn conversion_identity() {
        let m = 8.0 * PI;
        for lambda in [0.3, 1.0, 2.5] {
            for r in [0.0, 0.1, 1.0, 7.0, 300.0] {
                let lhs = m / PI * lambda * lambda * v(lambda, r).powi(4);
                let rhs = sigma(1.0 / (lambda * lambda), m, r);
                assert!((lhs - rhs).abs() <= 1e-13 * rhs.max(1e-300), "{lambda} {r}");
            }
        }
    }

    #[test]
    fn tags_round_trip_and_reject_unknown() {
        for f in [Family::V, Family::Sigma, Family::G4d] {
            assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
        }
        assert!("w".parse::<Family>().is_err());
    }

    #[test]
    fn offset_average_of_constant_direction() {
        // at r = 0 every node sits at distance d
        let p = OptimizerParams {
            center_offset: 3.0,
            ..OptimizerParams::<f64>::default()
        };
        let avg = eval_family(Family::V, &p, 0.0).unwrap();
        assert!((avg - v(1.0, 3.0)).abs() < 1e-15);
    }

    #[test]
    fn table_is_self_consistent() {
        let t = |n| reference_value(n).unwrap();
        let delta = (t("v_grad_sq") * t("v_l4_4")).sqrt() - (PI * t("v_l6_6")).sqrt();
        assert!(delta.abs() < 1e-15);
        // balance: √2‖∇v‖₂ = ‖v‖₄²
        assert!((2f64.sqrt() * t("v_grad_sq").sqrt() - t("v_l4_4").sqrt()).abs() < 1e-15);
        assert!((t("hls_minimum") - t("hls_minimum_critical")).abs() < 1e-12);
        assert!((t("hls_minimum") - 27.1294).abs() < 1e-4);
        let json = reference_constants_json();
        assert!(json.contains("\"g_l4_4\""));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = OptimizerParams {
            kappa: -1.0,
            ..OptimizerParams::<f64>::default()
        };
        let err = eval_family(Family::Sigma, &p, 1.0).unwrap_err();
        assert!(err.to_string().contains("kappa must be positive"));
    }
}
