//! Independent quadrature oracles for integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use gnslab::radial::{make_grid, RadialGrid};

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// `∫_a^b f` by composite Gauss–Legendre on `panels` equal panels.
pub fn gl_interval(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (x, w) = gauss_legendre(20);
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            s += wi * f(lo + 0.5 * h * (xi + 1.0)) * 0.5 * h;
        }
    }
    s
}

/// `∫_0^R f(r) 2π r dr` on geometric panels (accurate for functions with
/// structure at every scale between 1e-6 and R).
pub fn planar(f: &dyn Fn(f64) -> f64, r_max: f64) -> f64 {
    let g = |r: f64| 2.0 * PI * r * f(r);
    let mut s = gl_interval(&g, 0.0, 1e-6, 1);
    let mut a = 1e-6;
    while a < r_max {
        let b = (a * 1.25).min(r_max);
        s += gl_interval(&g, a, b, 1);
        a = b;
    }
    s
}

pub fn default_grid() -> Arc<RadialGrid<f64>> {
    Arc::new(make_grid(1e3, 4096, 3.0).unwrap())
}
