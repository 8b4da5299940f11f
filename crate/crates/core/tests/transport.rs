mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::default_grid;
use gnslab::families::sigma;
use gnslab::flows::{fd_evolve, FlowControls};
use gnslab::presets::{perturbed_sigma, with_mass, Shape};
use gnslab::radial::{Kind, RadialDensity, RadialGrid};
use gnslab::transport::{interpolation_check, radial_quantile, w2_pairs, w2_radial};

const M: f64 = 8.0 * PI;

/// Uniform disk of radius `edges[k]` and mass `mass`, exact in the cell measure.
fn disk(grid: &Arc<RadialGrid<f64>>, k: usize, mass: f64) -> (RadialDensity<f64>, f64) {
    let a = grid.edges()[k];
    let rho = mass / (PI * a * a);
    let values = (0..grid.len()).map(|i| if i < k { rho } else { 0.0 }).collect();
    (RadialDensity::new(grid.clone(), values, Kind::Density).unwrap(), a)
}

fn steady(kappa: f64) -> RadialDensity<f64> {
    RadialDensity::from_fn(default_grid(), Kind::Density, |r| sigma(kappa, M, r)).unwrap()
}

#[test]
fn uniform_disk_quantile() {
    let g = default_grid();
    let (rho, a) = disk(&g, 2000, 3.0);
    let q = radial_quantile(&rho).unwrap();
    for (m, r) in q.mass_levels.iter().zip(&q.radii) {
        let exact = a * (m / q.mass).sqrt();
        assert!((r - exact).abs() <= 1e-12 * a, "{m}: {r} vs {exact}");
    }
}

#[test]
fn steady_state_quantile() {
    let rho = steady(1.0);
    let q = radial_quantile(&rho).unwrap();
    for (m, r) in q.mass_levels.iter().zip(&q.radii).skip(1).step_by(37) {
        if *m > 0.99 * M {
            break;
        }
        let exact = (m / (M - m)).sqrt();
        assert!((r / exact - 1.0).abs() < 1e-4, "{m}: {r} vs {exact}");
    }
}

#[test]
fn spike_quantile_sits_at_the_origin() {
    let rho = RadialDensity::from_fn(default_grid(), Kind::Density, |r: f64| {
        1e8 / PI * (-1e8 * r * r).exp() + (-r * r).exp() / PI
    })
    .unwrap();
    let q = radial_quantile(&rho).unwrap();
    for (m, r) in q.mass_levels.iter().zip(&q.radii) {
        if *m < 0.99 * q.mass / 2.0 {
            assert!(*r < 1e-3, "{m}: {r}");
        }
    }
}

#[test]
fn uniform_disks_match_closed_form() {
    let g = default_grid();
    let mass = 5.0;
    for (ka, kb) in [(1500, 2000), (1800, 2600), (2200, 2201)] {
        let (ra, a) = disk(&g, ka, mass);
        let (rb, b) = disk(&g, kb, mass);
        let w = w2_radial(&ra, &rb).unwrap();
        assert!(!w.divergent);
        let exact = mass * (a - b) * (a - b) / 2.0;
        assert!((w.value() / exact - 1.0).abs() <= 1e-4, "{} vs {exact}", w.value());
    }
}

#[test]
fn metric_axioms_on_corpus() {
    let g = default_grid();
    let mut states: Vec<RadialDensity<f64>> = Shape::ALL
        .iter()
        .map(|s| perturbed_sigma(g.clone(), 1.0, M, *s, 0.3).unwrap())
        .collect();
    states.push(with_mass(&steady(1.0), M).unwrap());
    // equalize the cell-measure masses
    let cell_mass = |d: &RadialDensity<f64>| g.integrate_cells(d.values()).unwrap();
    let target = cell_mass(&states[0]);
    let states: Vec<_> = states.iter().map(|d| d.scale(target / cell_mass(d)).unwrap()).collect();

    for s in &states {
        assert_eq!(w2_radial(s, s).unwrap().value(), 0.0);
    }
    let pairs = w2_pairs(&states).unwrap();
    let w = |i: usize, j: usize| {
        let (a, b) = (i.min(j), i.max(j));
        pairs.iter().find(|(p, _)| *p == (a, b)).unwrap().1.value().sqrt()
    };
    for ((i, j), r) in &pairs {
        let back = w2_radial(&states[*j], &states[*i]).unwrap();
        assert!((back.value() - r.value()).abs() <= 1e-12 * r.value().max(1e-300));
        assert!(r.value() > 0.0);
    }
    let n = states.len();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if i != j && j != k && i != k {
                    assert!(w(i, k) <= w(i, j) + w(j, k) + 1e-12, "{i} {j} {k}");
                }
            }
        }
    }
}

#[test]
fn mismatched_steady_tails_are_flagged_divergent() {
    let w = w2_radial(&steady(1.0), &steady(1.44)).unwrap();
    assert!(w.divergent);
    assert!(w.dropped_bound() > 0.0);
    let same = w2_radial(&steady(1.0), &steady(1.0)).unwrap();
    assert!(!same.divergent);
}

#[test]
fn mass_mismatch_names_both_masses() {
    let g = default_grid();
    let (a, _) = disk(&g, 1000, 1.0);
    let (b, _) = disk(&g, 1000, 2.0);
    let e = w2_radial(&a, &b).unwrap_err().to_string();
    assert!(e.contains("mass mismatch") && e.contains('1') && e.contains('2'), "{e}");
}

#[test]
fn interpolation_bound_identity_and_dilation() {
    let s0 = steady(1.0);
    let r = interpolation_check(&s0, &s0, 3.0, 1e4).unwrap();
    assert_eq!(r.lhs, 0.0);
    assert_eq!(r.rhs, 0.0);

    let s1 = steady(1.1);
    let r = interpolation_check(&s0, &s1, 3.0, 1e4).unwrap();
    assert!(r.lhs > 0.0 && r.slack > 0.0, "{r:?}");

    let e = interpolation_check(&s0, &s1, 3.0, 1.0).unwrap_err().to_string();
    assert!(e.contains("K bound violated"), "{e}");
    assert!(interpolation_check(&s0, &s1, 2.0, 1e4).is_err());
}

#[test]
fn fast_diffusion_snapshots_obey_transport_bounds() {
    let rho = perturbed_sigma(default_grid(), 1.0, M, Shape::Ring, 0.5).unwrap();
    let c = FlowControls {
        fit_scale: false,
        ..FlowControls::default()
    };
    let traj = fd_evolve(&rho, 1.0, M, 0.5, &c).unwrap();
    let h0 = traj.diagnostics[0].h;
    let states: Vec<_> = traj.states.iter().map(|(_, s)| s.clone()).collect();
    for ((i, j), w) in w2_pairs(&states).unwrap() {
        let dt = traj.states[j].0 - traj.states[i].0;
        assert!(w.value() <= h0 * dt, "{i},{j}: {} > {}", w.value(), h0 * dt);
        let r = interpolation_check(&states[i], &states[j], 3.0, 1e4).unwrap();
        assert!(r.lhs <= r.rhs, "{i},{j}: {r:?}");
    }
}
