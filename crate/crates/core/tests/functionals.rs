mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::{default_grid, gl_interval, planar};
use gnslab::families::{sigma, v};
use gnslab::functionals::{
    dissipation, fd_entropy, gns_deficit, log_hls, moments_entropy, total,
};
use gnslab::radial::{integrate, make_grid, Kind, RadialDensity};

const CRIT: f64 = 8.0 * PI;

fn profile(f: impl Fn(f64) -> f64) -> RadialDensity<f64> {
    RadialDensity::from_fn(default_grid(), Kind::Profile, f).unwrap()
}

fn density(f: impl Fn(f64) -> f64) -> RadialDensity<f64> {
    RadialDensity::from_fn(default_grid(), Kind::Density, f).unwrap()
}

#[test]
fn analytic_norms_of_v() {
    let u = profile(|r| v(1.0, r));
    let d = gns_deficit(&u).unwrap();
    let (g, l4, l6) = d.norms.values();
    assert!((g / (PI / 2.0) - 1.0).abs() < 1e-5);
    assert!((l4 / PI - 1.0).abs() < 1e-5);
    assert!((l6 / (PI / 2.0) - 1.0).abs() < 1e-5);
}

#[test]
fn deficit_vanishes_along_the_family() {
    for lambda in [0.5, 1.0, 2.0] {
        let u = profile(|r| v(lambda, r));
        let d = gns_deficit(&u).unwrap();
        assert!(d.value.abs() <= 1e-6, "λ={lambda}: {}", d.value);
        let g = d.norms.grad_u_sq.value();
        assert!((g / (PI / 2.0) - 1.0).abs() < 1e-4, "Dirichlet integral at λ={lambda}");
    }
}

#[test]
fn deficit_is_invariant_under_mass_preserving_rescaling() {
    let base = |r: f64| v(1.0, r) + 0.1 * (-r * r).exp();
    let d0 = gns_deficit(&profile(base)).unwrap().value;
    for mu in [0.5_f64, 2.0] {
        let d = gns_deficit(&profile(|r| mu.powf(1.0 / 3.0) * base(mu * r)))
            .unwrap()
            .value;
        assert!((d - d0).abs() < 1e-6, "μ={mu}: {d} vs {d0}");
    }
}

fn normalize6(f: impl Fn(f64) -> f64 + Copy) -> impl Fn(f64) -> f64 + Copy {
    let l6 = planar(&|r| f(r).powi(6), 1e6);
    let a = (PI / 2.0 / l6).powf(1.0 / 6.0);
    move |r| a * f(r)
}

#[test]
fn deficit_is_quadratic_near_the_optimizer() {
    let q: Vec<f64> = [0.05, 0.025, 0.0125]
        .iter()
        .map(|&eps| {
            let u = normalize6(move |r| v(1.0, r) + eps * (-r * r).exp());
            let d = gns_deficit(&profile(u)).unwrap().value;
            assert!(d > 0.0);
            d / (eps * eps)
        })
        .collect();
    // first-order corrections: successive gaps halve
    let g1 = (q[0] - q[1]).abs();
    let g2 = (q[1] - q[2]).abs();
    assert!(g2 < 0.7 * g1, "{q:?}");
    let limit = q[2] + (q[2] - q[1]);
    assert!(limit.is_finite() && limit > 0.0);
}

#[test]
fn log_hls_minimum_on_steady_states() {
    let expect = CRIT * (8f64.ln() - 1.0);
    for kappa in [0.5, 1.0, 2.0] {
        let h = log_hls(&density(|r| sigma(kappa, CRIT, r))).unwrap();
        assert!((h.value - expect).abs() < 1e-3, "κ={kappa}: {}", h.value);
        assert!(h.deficit.abs() < 1e-3);
        assert!((h.mass / CRIT - 1.0).abs() < 1e-8);
    }
}

#[test]
fn log_hls_is_dilation_invariant() {
    let rho = |r: f64| sigma(1.0, CRIT, r) * (1.0 + 0.3 * (-r * r).exp());
    let f0 = log_hls(&density(rho)).unwrap().value;
    for a in [0.5, 2.0] {
        let fa = log_hls(&density(|r| rho(r / a) / (a * a))).unwrap().value;
        assert!((fa - f0).abs() < 1e-4, "a={a}: {fa} vs {f0}");
    }
}

/// `∫_{|y|<1} log|x − y| dy` at `|x| = s < 1`, integrating radially around `x`
/// in closed form and over directions by the periodic trapezoid rule.
fn disk_log_potential(s: f64) -> f64 {
    let n = 512;
    (0..n)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / n as f64;
            let rho = -s * th.cos() + (1.0 - s * s * th.sin().powi(2)).sqrt();
            if rho <= 0.0 {
                0.0
            } else {
                0.5 * rho * rho * (rho.ln() - 0.5)
            }
        })
        .sum::<f64>()
        * 2.0
        * PI
        / n as f64
}

#[test]
fn log_hls_of_uniform_disk_matches_planar_oracle() {
    let m = CRIT;
    let level = m / PI;
    let grid = Arc::new(make_grid(2.0, 4096, 1.0).unwrap());
    let rho = RadialDensity::from_fn(grid, Kind::Density, |r| if r < 1.0 { level } else { 0.0 })
        .unwrap();
    let radial = log_hls(&rho).unwrap().value;

    let outer = gl_interval(&|s| 2.0 * PI * s * disk_log_potential(s), 0.0, 1.0, 64);
    let oracle = m * level.ln() + 2.0 / m * level * level * outer;
    // mean of log|x − y| over the unit disk is −1/4
    assert!((oracle - (m * level.ln() - m / 2.0)).abs() < 1e-6, "{oracle}");
    assert!((radial - oracle).abs() < 1e-3 * oracle.abs(), "{radial} vs {oracle}");
}

#[test]
fn fd_entropy_zero_on_its_steady_state() {
    for kappa in [0.5, 1.0, 2.0] {
        let h = fd_entropy(&density(|r| sigma(kappa, CRIT, r)), kappa, CRIT).unwrap();
        assert!(h.value.abs() <= 1e-6);
        assert!(!h.divergent);
    }
}

#[test]
fn fd_entropy_grows_logarithmically_for_mismatched_scale() {
    let (kappa, mu) = (1.0_f64, 2.0_f64);
    let c0 = 2.0 * (PI * CRIT / kappa).sqrt() * (mu.sqrt() - kappa.sqrt()).powi(2);
    let values: Vec<f64> = [1e2, 1e3, 1e4]
        .iter()
        .map(|&r_max| {
            let g = Arc::new(make_grid(r_max, 4096, 3.0).unwrap());
            let s = RadialDensity::from_fn(g, Kind::Density, |r| sigma(mu, CRIT, r)).unwrap();
            let h = fd_entropy(&s, kappa, CRIT).unwrap();
            assert!(h.divergent);
            assert!((h.growth_rate / c0 - 1.0).abs() < 0.05, "{} vs {c0}", h.growth_rate);
            h.truncated
        })
        .collect();
    for w in values.windows(2) {
        assert!(w[1] - w[0] >= 0.95 * c0 * 10f64.ln(), "{values:?}");
    }
}

#[test]
fn fd_entropy_of_reweighted_steady_state_matches_oracle() {
    let s = |r: f64| sigma(1.0, CRIT, r) * (1.0 + 0.2 * (-r * r).exp());
    let h = fd_entropy(&density(s), 1.0, CRIT).unwrap();
    let oracle = planar(
        &|r| {
            let sk = sigma(1.0, CRIT, r).sqrt();
            (s(r).sqrt() - sk).powi(2) / sk
        },
        1e4,
    );
    assert!(!h.divergent);
    assert!((h.value - oracle).abs() < 1e-5, "{} vs {oracle}", h.value);
}

#[test]
fn dissipation_vanishes_on_steady_states() {
    for kappa in [0.5, 1.0, 2.0] {
        let d = dissipation(&density(|r| sigma(kappa, CRIT, r))).unwrap();
        assert!(d.direct.abs() <= 1e-6, "κ={kappa}: {}", d.direct);
    }
}

#[test]
fn dissipation_of_bump_perturbation_matches_oracle() {
    let eps = 0.3;
    let s = move |r: f64| sigma(1.0, CRIT, r) * (1.0 + eps * (-r * r).exp());
    let ds = move |r: f64| {
        let d = 1.0 + r * r;
        let s0 = CRIT / PI / (d * d);
        let ds0 = -4.0 * r * CRIT / PI / (d * d * d);
        let b = (-r * r).exp();
        ds0 * (1.0 + eps * b) + s0 * eps * (-2.0 * r * b)
    };
    let g = planar(&|r| (0.25 * s(r).powf(-0.75) * ds(r)).powi(2), 1e6);
    let l4 = planar(&s, 1e6);
    let l6 = planar(&|r| s(r).powf(1.5), 1e6);
    let oracle = (g * l4 - PI * l6) / PI;
    let d = dissipation(&density(s)).unwrap();
    assert!(d.direct > 0.0);
    assert!((d.direct - oracle).abs() < 1e-5, "{} vs {oracle}", d.direct);
    assert!(d.relative_gap < 1e-8);
}

#[test]
fn first_moment_of_critical_steady_state() {
    let me = moments_entropy(&density(|r| sigma(1.0, CRIT, r)), &[1.0, 2.0], &[]).unwrap();
    let n1 = &me.n_p[0].value;
    assert!(!n1.divergent);
    assert!((n1.value() - 4.0 * PI * PI).abs() < 1e-4 * 4.0 * PI * PI, "{}", n1.value());
    assert!(me.n_p[1].value.divergent);
}

#[test]
fn entropy_of_unit_mass_disk() {
    let grid = Arc::new(make_grid(2.0, 4096, 1.0).unwrap());
    let rho = RadialDensity::from_fn(grid, Kind::Density, |r| if r < 1.0 { 1.0 / PI } else { 0.0 })
        .unwrap();
    let me = moments_entropy(&rho, &[], &[]).unwrap();
    assert!((me.entropy_s.value() + PI.ln()).abs() < 1e-4);
    assert!((integrate(&rho) - 1.0).abs() < 1e-4);
    assert!((total(&rho).unwrap().value() - 1.0).abs() < 1e-4);
}

#[test]
fn mass_of_sampled_steady_state() {
    let g = Arc::new(make_grid(1e3, 8192, 3.0).unwrap());
    let s = RadialDensity::from_fn(g, Kind::Density, |r| sigma(1.0, CRIT, r)).unwrap();
    // truncated disk misses M κ/(κ + R²)
    let expect = CRIT * 1e6 / (1.0 + 1e6);
    assert!((integrate(&s) / expect - 1.0).abs() < 1e-3);
}
