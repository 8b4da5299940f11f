//! Scalar minimization: Brent's golden-section/parabolic search and a
//! scan-then-refine driver with multi-start for non-unimodal objectives.

use serde::Serialize;

use crate::scalar::{lit, Real};

/// Result of a bracketed 1D minimization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Minimum<T> {
    pub x: T,
    pub fx: T,
    pub evaluations: usize,
    /// The x-tolerance was met before the iteration cap.
    pub converged: bool,
}

/// Brent minimization of `f` on `[a, b]` to absolute x-tolerance `xtol`.
pub fn brent<T: Real>(mut f: impl FnMut(T) -> T, a: T, b: T, xtol: T, max_iter: usize) -> Minimum<T> {
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let golden = lit::<T>(0.381_966_011_250_105_1);
    let half = lit::<T>(0.5);
    let two = lit::<T>(2.0);
    let mut x = a + golden * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut evaluations = 1;
    let mut d = T::zero();
    let mut e = T::zero();
    for _ in 0..max_iter {
        let m = half * (a + b);
        let tol1 = xtol + T::epsilon() * x.abs();
        let tol2 = two * tol1;
        if (x - m).abs() <= tol2 - half * (b - a) {
            return Minimum {
                x,
                fx,
                evaluations,
                converged: true,
            };
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            } else {
                q = -q;
            }
            if p.abs() < (half * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x < m { b - x } else { a - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > T::zero() {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        evaluations += 1;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Minimum {
        x,
        fx,
        evaluations,
        converged: false,
    }
}

/// Controls of [`minimize_scan`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SearchOptions {
    /// Uniform samples of the initial scan.
    pub scan_points: usize,
    /// Maximum number of local minima refined when the scan is not unimodal.
    pub seeds: usize,
    pub xtol: f64,
    pub max_iter: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            scan_points: 41,
            seeds: 8,
            xtol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Search<T> {
    pub best: Minimum<T>,
    pub bracket: (T, T),
    /// Total objective evaluations including the scan.
    pub evaluations: usize,
    /// The scan found more than one local minimum.
    pub multimodal: bool,
    /// Converged, strictly inside the bracket and unambiguous.
    pub converged: bool,
    /// The minimizer sits on the bracket boundary.
    pub boundary_hit: bool,
}

/// Scans `[lo, hi]`, refines every local minimum of the scan (at most
/// `seeds` of them, best first) with [`brent`] and keeps the best.
pub fn minimize_scan<T: Real>(mut f: impl FnMut(T) -> T, lo: T, hi: T, opts: &SearchOptions) -> Search<T> {
    let n = opts.scan_points.max(3);
    let step = (hi - lo) / T::from_usize_lossy(n - 1);
    let xs: Vec<T> = (0..n).map(|i| lo + step * T::from_usize_lossy(i)).collect();
    let fs: Vec<T> = xs.iter().map(|x| f(*x)).collect();
    let mut evaluations = n;
    let mut minima: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || fs[i] <= fs[i - 1];
            let right = i == n - 1 || fs[i] < fs[i + 1];
            left && right
        })
        .collect();
    if minima.is_empty() {
        // flat or non-finite scan: start from the best sample
        let i = (0..n)
            .min_by(|a, b| fs[*a].partial_cmp(&fs[*b]).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0);
        minima.push(i);
    }
    let multimodal = minima.len() > 1;
    minima.sort_by(|a, b| fs[*a].partial_cmp(&fs[*b]).unwrap_or(std::cmp::Ordering::Equal));
    minima.truncate(opts.seeds.max(1));
    let xtol = lit::<T>(opts.xtol);
    let mut results: Vec<Minimum<T>> = Vec::with_capacity(minima.len());
    for &i in &minima {
        let a = xs[i.saturating_sub(1)];
        let b = xs[(i + 1).min(n - 1)];
        let mut m = brent(&mut f, a, b, xtol, opts.max_iter);
        evaluations += m.evaluations;
        if fs[i] < m.fx {
            m.x = xs[i];
            m.fx = fs[i];
        }
        results.push(m);
    }
    results.sort_by(|a, b| a.fx.partial_cmp(&b.fx).unwrap_or(std::cmp::Ordering::Equal));
    let best = results[0];
    // two distinct minimizers with indistinguishable values
    let ambiguous = results.iter().skip(1).any(|m| {
        (m.x - best.x).abs() > step && (m.fx - best.fx).abs() <= lit::<T>(1e-12) * best.fx.abs().max(T::one())
    });
    let edge = lit::<T>(2.0) * xtol;
    let boundary_hit = best.x - lo <= edge || hi - best.x <= edge;
    Search {
        best,
        bracket: (lo, hi),
        evaluations,
        multimodal,
        converged: best.converged && !boundary_hit && !ambiguous && best.fx.is_finite(),
        boundary_hit,
    }
}

/// Golden-section search without parabolic steps, for objectives that are
/// themselves the result of inner minimizations and may be slightly noisy.
pub fn golden<T: Real>(mut f: impl FnMut(T) -> T, a: T, b: T, xtol: T, max_iter: usize) -> Minimum<T> {
    let g = lit::<T>(0.618_033_988_749_894_9);
    let (mut a, mut b) = (a, b);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evaluations = 2;
    for _ in 0..max_iter {
        if (b - a).abs() <= xtol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        evaluations += 1;
    }
    let (x, fx) = if fc <= fd { (c, fc) } else { (d, fd) };
    Minimum {
        x,
        fx,
        evaluations,
        converged: (b - a).abs() <= xtol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_quadratic_minimum() {
        let m = brent(|x: f64| (x - 0.3).powi(2) + 1.0, -2.0, 5.0, 1e-10, 200);
        assert!(m.converged);
        assert!((m.x - 0.3).abs() < 1e-8);
        assert!((m.fx - 1.0).abs() < 1e-15);
    }

    #[test]
    fn brent_handles_v_shaped_objective() {
        let m = brent(|x: f64| (x - 1.234).abs(), -3.0, 3.0, 1e-10, 500);
        assert!((m.x - 1.234).abs() < 1e-8, "{}", m.x);
    }

    #[test]
    fn scan_picks_global_minimum_of_double_well() {
        let f = |x: f64| (x * x - 1.0).powi(2) + 0.1 * x;
        let s = minimize_scan(f, -3.0, 3.0, &SearchOptions::default());
        assert!(s.multimodal);
        assert!(s.best.x < 0.0);
        assert!(s.converged);
    }

    #[test]
    fn boundary_minimum_is_not_converged() {
        let s = minimize_scan(|x: f64| x, 0.0, 1.0, &SearchOptions::default());
        assert!(s.boundary_hit);
        assert!(!s.converged);
    }

    #[test]
    fn golden_section_converges() {
        let m = golden(|x: f64| (x - 2.0).powi(2), 0.0, 10.0, 1e-9, 200);
        assert!(m.converged);
        assert!((m.x - 2.0).abs() < 1e-8);
    }
}
