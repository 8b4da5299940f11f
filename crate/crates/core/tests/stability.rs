mod common;

use std::f64::consts::PI;

use common::default_grid;
use gnslab::families::{sigma, v};
use gnslab::functionals::{gns_deficit, total};
use gnslab::radial::{Kind, RadialDensity};
use gnslab::presets::{perturbed_sigma, perturbed_v, Shape, EPS_SWEEP};
use gnslab::stability::{
    continuity_probe, fit_nearest_fourth, fit_nearest_sigma, fit_nearest_sixth, fourth_distance,
    hls_fit, normalize_fourth, normalize_sixth, probe_fourth, probe_sixth, sixth_distance, sweep,
    DensityClass,
};

fn profile(f: impl Fn(f64) -> f64) -> RadialDensity<f64> {
    RadialDensity::from_fn(default_grid(), Kind::Profile, f).unwrap()
}

fn density(f: impl Fn(f64) -> f64) -> RadialDensity<f64> {
    RadialDensity::from_fn(default_grid(), Kind::Density, f).unwrap()
}

/// `u⁶ = λ² v_λ⁶`, i.e. the exact sixth-power family member.
fn sixth_member(lambda: f64) -> RadialDensity<f64> {
    profile(move |r| lambda.powf(1.0 / 3.0) * v(lambda, r))
}

#[test]
fn v_fits_itself() {
    let fit = fit_nearest_sixth(&profile(|r| v(1.0, r)), true).unwrap();
    assert!((fit.lambda_star - 1.0).abs() < 1e-6, "{}", fit.lambda_star);
    assert!(fit.offset_star < 1e-3, "{}", fit.offset_star);
    assert!(fit.distance_l1 <= 1e-6, "{}", fit.distance_l1);
}

#[test]
fn sixth_family_exactness() {
    for lambda in [0.5, 2.0, 7.0] {
        let fit = fit_nearest_sixth(&sixth_member(lambda), false).unwrap();
        assert!(fit.converged);
        assert!((fit.lambda_star / lambda - 1.0).abs() < 1e-4, "{lambda}: {}", fit.lambda_star);
        assert!(fit.distance_l1 <= 1e-5, "{}", fit.distance_l1);
        assert!((fit.mu_star * lambda * lambda - 1.0).abs() < 1e-4);
    }
}

#[test]
fn fourth_family_sigma_form() {
    // u⁴ = σ_{1/4, π} is λ² v_λ⁴ at λ = 2
    let u = profile(|r| sigma(0.25, PI, r).powf(0.25));
    let fit = fit_nearest_fourth(&u).unwrap();
    assert!((fit.lambda_star - 2.0).abs() < 1e-4, "{}", fit.lambda_star);
    assert!(fit.distance_l1 <= 1e-5);
    let floor = fit.metadata.lambda_floor.unwrap();
    assert!(floor > 0.0 && floor < fit.lambda_star);
}

#[test]
fn offset_is_recovered_from_an_averaged_shift() {
    // u⁶ = angular mean of v⁶ centered at distance 0.7: exactly a family member
    let d = 0.7;
    let u = profile(|r| {
        let n = 64;
        let m = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                let rr = (r * r + d * d - 2.0 * r * d * t.cos()).max(0.0).sqrt();
                v(1.0, rr).powi(6)
            })
            .sum::<f64>()
            / n as f64;
        m.powf(1.0 / 6.0)
    });
    let u = normalize_sixth(&u).unwrap();
    let fit = fit_nearest_sixth(&u, true).unwrap();
    assert!((fit.offset_star - d).abs() < 1e-2, "{}", fit.offset_star);
    assert!((fit.lambda_star - 1.0).abs() < 1e-2, "{}", fit.lambda_star);
    assert!(fit.distance_l1 < 1e-4, "{}", fit.distance_l1);
    assert!(!fit.offset_boundary_hit);
}

#[test]
fn reevaluation_reproduces_the_reported_distance() {
    let u = normalize_sixth(&profile(|r| v(1.0, r) + 0.1 * (-r * r).exp())).unwrap();
    let fit = fit_nearest_sixth(&u, false).unwrap();
    let again = sixth_distance(&u, fit.lambda_star, fit.offset_star);
    assert!((again - fit.distance_l1).abs() <= 1e-10, "{again} vs {}", fit.distance_l1);
    // optimality under ±1% perturbation of λ*
    for f in [0.99, 1.01] {
        assert!(sixth_distance(&u, fit.lambda_star * f, 0.0) > fit.distance_l1);
    }
    // trivial-regime cap
    assert!(fit.distance_l1 <= PI);

    let u4 = normalize_fourth(&profile(|r| v(1.0, r) + 0.1 * (-r * r).exp())).unwrap();
    let fit4 = fit_nearest_fourth(&u4).unwrap();
    let again4 = fourth_distance(&u4, fit4.lambda_star);
    assert!((again4 - fit4.distance_l1).abs() <= 1e-10);
}

fn spread(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::MIN, f64::max);
    let min = xs.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

#[test]
fn sixth_ratio_two_point_sweep() {
    let ratio = |e: f64| {
        let u = profile(|r| v(1.0, r) + e * (-r * r).exp());
        let (_, p) = probe_sixth(&u, false).unwrap();
        assert!(p.deficit > 0.0 && p.distance_l1 > 0.0);
        p.ratio
    };
    let (a, b) = (ratio(0.05), ratio(0.025));
    assert!(a / b < 3.0 && b / a < 3.0, "{a} {b}");
}

#[test]
fn ratios_bounded_across_sweep() {
    let m = 8.0 * PI;
    for shape in Shape::ALL {
        let us: Vec<_> = EPS_SWEEP
            .iter()
            .map(|e| perturbed_v(default_grid(), shape, *e).unwrap())
            .collect();
        let r6: Vec<f64> = sweep(&us, |u| probe_sixth(u, false).unwrap().1.ratio);
        let r4: Vec<f64> = sweep(&us, |u| probe_fourth(u, 1.5).unwrap().1.ratio);
        let rhos: Vec<_> = EPS_SWEEP
            .iter()
            .map(|e| perturbed_sigma(default_grid(), 1.0, m, shape, *e).unwrap())
            .collect();
        let rh: Vec<f64> = sweep(&rhos, |r| hls_fit(r, 0.1).unwrap().probe.ratio);
        for rs in [&r6, &r4, &rh] {
            assert!(rs.iter().all(|r| r.is_finite() && *r > 0.0), "{shape}: {rs:?}");
            assert!(spread(rs) < 5.0, "{shape}: {rs:?}");
        }
    }
}

#[test]
fn sigma_family_exactness_and_dilations() {
    let m = 8.0 * PI;
    for kappa in [0.5, 1.0, 2.0] {
        let rho = density(|r| sigma(kappa, m, r));
        let h = hls_fit(&rho, 0.1).unwrap();
        assert!((h.fit.mu_star / kappa - 1.0).abs() < 1e-4, "{}", h.fit.mu_star);
        assert!(h.fit.distance_l1 <= 1e-5, "{}", h.fit.distance_l1);
        assert!(h.probe.deficit <= 1e-3);
        assert!(h.fd_entropy_truncated.abs() <= 1e-6, "{}", h.fd_entropy_truncated);
    }
}

#[test]
fn hls_probe_on_bump_perturbation() {
    let m = 8.0 * PI;
    let raw = density(|r| sigma(1.0, m, r) * (1.0 + 0.3 * (-r * r).exp()));
    let rho = raw.scale(m / total(&raw).unwrap().value()).unwrap();
    let h = hls_fit(&rho, 0.1).unwrap();
    assert!(h.probe.deficit > 0.0 && h.probe.distance_l1 > 0.0);
    assert!(h.probe.ratio.is_finite() && h.probe.ratio > 0.0);
    assert!(h.fit.converged);
}

#[test]
fn sigma_fit_rejects_profiles() {
    assert!(fit_nearest_sigma(&profile(|r| v(1.0, r))).is_err());
}

fn class() -> DensityClass {
    DensityClass {
        p: 1.5,
        q: 3.0,
        a: 1e3,
        b: 1e3,
    }
}

fn base_density() -> RadialDensity<f64> {
    density(|r| 4.0 * (-r * r).exp())
}

#[test]
fn continuity_of_identical_densities_is_zero() {
    let rho = base_density();
    let c = continuity_probe(&rho, &rho, &class()).unwrap();
    assert_eq!(c.delta_f, 0.0);
    assert_eq!(c.delta_s, 0.0);
    assert_eq!(c.delta_u, 0.0);
    assert_eq!(c.l1, 0.0);
}

#[test]
fn continuity_midpoint_is_consistent_with_endpoints() {
    let rho = base_density();
    let m = total(&rho).unwrap().value();
    let other = density(|r| m / PI * 2.0 * (-2.0 * r * r).exp());
    let mid = density(|r| 0.5 * (4.0 * (-r * r).exp() + m / PI * 2.0 * (-2.0 * r * r).exp()));
    let full = continuity_probe(&rho, &other, &class()).unwrap();
    let half = continuity_probe(&rho, &mid, &class()).unwrap();
    let rest = continuity_probe(&mid, &other, &class()).unwrap();
    // the segment is a geodesic of L¹
    assert!((half.l1 - 0.5 * full.l1).abs() < 1e-8 * full.l1);
    assert!((half.l1 + rest.l1 - full.l1).abs() < 1e-8 * full.l1);
    // differences are additive along the segment up to sign
    assert!(half.delta_f + rest.delta_f >= full.delta_f * (1.0 - 1e-12));
    assert!(half.delta_f > 0.0 && rest.delta_f > 0.0);
}

#[test]
fn class_violations_are_reported() {
    let rho = base_density();
    let tight = DensityClass { b: 1e-3, ..class() };
    let e = continuity_probe(&rho, &rho, &tight).unwrap_err().to_string();
    assert!(e.contains("L^q bound"), "{e}");
}

#[test]
fn gns_deficit_of_normalized_perturbation_is_positive() {
    let u = normalize_sixth(&profile(|r| v(1.0, r) + 0.05 * (-r * r).exp())).unwrap();
    assert!(gns_deficit(&u).unwrap().value > 0.0);
}
