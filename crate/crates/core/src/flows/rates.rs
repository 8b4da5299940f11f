//! Rate fits on diagnostic series and scale tracking along trajectories.

use rayon::prelude::*;
use serde::Serialize;

use super::FlowTrajectory;
use crate::error::{LabError, Result};
use crate::scalar::Real;
use crate::stability::fit_nearest_sigma;

/// Minimum number of samples inside a fit window.
pub const MIN_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `value = A (1 + t)^b`
    PowerLaw,
    /// `value = C / log(e + t)`
    LogDecay,
}

impl std::str::FromStr for RateModel {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power_law" => Ok(Self::PowerLaw),
            "log_decay" => Ok(Self::LogDecay),
            other => Err(LabError::invalid(format!(
                "unknown rate model '{other}' (expected power_law or log_decay)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RateFit<T> {
    pub model: RateModel,
    /// `b` for the power law; `−1` (the fixed power of `log(e+t)`) for log decay.
    pub exponent: T,
    /// `A` or `C`.
    pub prefactor: T,
    /// RMS misfit in log coordinates.
    pub residual: T,
    pub window: (T, T),
    pub points: usize,
}

/// Least-squares fit of `series` restricted to `window` in log coordinates.
pub fn rate_fit<T: Real>(series: &[(T, T)], model: RateModel, window: (T, T)) -> Result<RateFit<T>> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(LabError::invalid("rate window must satisfy t_lo < t_hi"));
    }
    if let (Some(first), Some(last)) = (series.first(), series.last()) {
        if lo < first.0 || hi > last.0 {
            return Err(LabError::invalid(format!(
                "rate window [{}, {}] leaves the series span [{}, {}]",
                lo.to_f64_lossy(),
                hi.to_f64_lossy(),
                first.0.to_f64_lossy(),
                last.0.to_f64_lossy()
            )));
        }
    }
    let picked: Vec<(usize, T, T)> = series
        .iter()
        .enumerate()
        .filter(|(_, (t, _))| *t >= lo && *t <= hi)
        .map(|(i, (t, v))| (i, *t, *v))
        .collect();
    if picked.len() < MIN_POINTS {
        return Err(LabError::invalid(format!(
            "rate window holds {} points, at least {MIN_POINTS} are needed",
            picked.len()
        )));
    }
    let bad: Vec<usize> = picked
        .iter()
        .filter(|(_, _, v)| !(*v > T::zero() && v.is_finite()))
        .map(|(i, _, _)| *i)
        .collect();
    if !bad.is_empty() {
        return Err(LabError::invalid(format!(
            "nonpositive values at indices {bad:?}"
        )));
    }
    let n = T::from_usize_lossy(picked.len());
    match model {
        RateModel::PowerLaw => {
            let xs: Vec<T> = picked.iter().map(|(_, t, _)| (T::one() + *t).ln()).collect();
            let ys: Vec<T> = picked.iter().map(|(_, _, v)| v.ln()).collect();
            let mx = xs.iter().copied().sum::<T>() / n;
            let my = ys.iter().copied().sum::<T>() / n;
            let sxx = xs.iter().map(|x| (*x - mx) * (*x - mx)).sum::<T>();
            let sxy = xs.iter().zip(&ys).map(|(x, y)| (*x - mx) * (*y - my)).sum::<T>();
            if !(sxx > T::zero()) {
                return Err(LabError::invalid("rate window has no spread in t"));
            }
            let b = sxy / sxx;
            let a = my - b * mx;
            let rss = xs.iter().zip(&ys).map(|(x, y)| (*y - a - b * *x).powi(2)).sum::<T>();
            Ok(RateFit {
                model,
                exponent: b,
                prefactor: a.exp(),
                residual: (rss / n).sqrt(),
                window,
                points: picked.len(),
            })
        }
        RateModel::LogDecay => {
            let ys: Vec<T> = picked
                .iter()
                .map(|(_, t, v)| (*v * (T::E() + *t).ln()).ln())
                .collect();
            let my = ys.iter().copied().sum::<T>() / n;
            let rss = ys.iter().map(|y| (*y - my).powi(2)).sum::<T>();
            Ok(RateFit {
                model,
                exponent: -T::one(),
                prefactor: my.exp(),
                residual: (rss / n).sqrt(),
                window,
                points: picked.len(),
            })
        }
    }
}

/// Nearest `σ_{μ,M}` at one sampled state.
#[derive(Clone, Debug, Serialize)]
pub struct ScaleSample<T> {
    pub t: T,
    /// NaN when the fit failed.
    pub mu: T,
    pub distance_l1: T,
    pub converged: bool,
    /// `(μ − κ)² log(e + t)`.
    pub decay_probe: T,
    pub error: Option<String>,
}

/// `μ(t)` along a trajectory, one σ-family fit per stored state.
pub fn scale_track<T: Real>(traj: &FlowTrajectory<T>) -> Vec<ScaleSample<T>> {
    let kappa = traj.meta.kappa;
    traj.states
        .par_iter()
        .map(|(t, state)| match fit_nearest_sigma(state) {
            Ok(fit) => {
                let d = fit.mu_star - kappa;
                ScaleSample {
                    t: *t,
                    mu: fit.mu_star,
                    distance_l1: fit.distance_l1,
                    converged: fit.converged,
                    decay_probe: d * d * (T::E() + *t).ln(),
                    error: None,
                }
            }
            Err(e) => ScaleSample {
                t: *t,
                mu: T::nan(),
                distance_l1: T::nan(),
                converged: false,
                decay_probe: T::nan(),
                error: Some(e.to_string()),
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (0..40).map(|k| 1.2f64.powi(k)).map(|t| (t, f(t))).collect()
    }

    #[test]
    fn recovers_power_law() {
        let s = series(|t| 3.0 * (1.0 + t).powf(-0.125));
        let fit = rate_fit(&s, RateModel::PowerLaw, (1.0, 1000.0)).unwrap();
        assert!((fit.exponent + 0.125).abs() < 1e-3);
        assert!((fit.prefactor - 3.0).abs() < 1e-9);
        assert!(fit.residual <= 1e-10);
    }

    #[test]
    fn recovers_log_decay_constant() {
        let s = series(|t| 2.0 / (std::f64::consts::E + t).ln());
        let fit = rate_fit(&s, RateModel::LogDecay, (1.0, 1000.0)).unwrap();
        assert!((fit.prefactor - 2.0).abs() < 1e-3);
    }

    #[test]
    fn nonpositive_values_are_listed() {
        let mut s = series(|t| 1.0 / (1.0 + t));
        s[5].1 = 0.0;
        s[7].1 = -1.0;
        let e = rate_fit(&s, RateModel::PowerLaw, (1.0, 1000.0)).unwrap_err().to_string();
        assert!(e.contains("[5, 7]"), "{e}");
    }

    #[test]
    fn short_windows_are_rejected() {
        let s = series(|t| 1.0 / (1.0 + t));
        assert!(rate_fit(&s, RateModel::PowerLaw, (1.0, 3.0)).is_err());
    }
}
