//! Randomized invariants.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use gnslab::families::{sigma, v};
use gnslab::flows::{fd_evolve, ks_evolve, rate_fit, Checkpoint, FlowControls, RateModel};
use gnslab::functionals::{dissipation, fd_entropy, gns_deficit, log_hls, total, total_of};
use gnslab::lift::balance_normalize;
use gnslab::radial::{make_grid, Kind, RadialDensity, RadialGrid};
use gnslab::stability::{fit_nearest_sixth, normalize_sixth};
use gnslab::transport::{radial_quantile, w2_radial};

fn grid() -> Arc<RadialGrid<f64>> {
    static G: OnceLock<Arc<RadialGrid<f64>>> = OnceLock::new();
    G.get_or_init(|| Arc::new(make_grid(1e3, 1024, 3.0).unwrap())).clone()
}

type Bump = (f64, f64, f64);

fn bump(r: f64, (a, c, w): Bump) -> f64 {
    let s = (r - c) / w;
    a * (-s * s).exp()
}

fn bumps() -> impl Strategy<Value = Vec<Bump>> {
    prop::collection::vec((-0.3..0.6f64, 0.0..3.0f64, 0.3..1.5f64), 1..4)
}

/// `σ_{κ,M}(1 + Σ bumps + a₀ e^{−r²})` with `a₀` restoring the mass, so the
/// tail is exactly that of `σ_{κ,M}`. `None` if the factor gets near zero.
fn bump_mixture(kappa: f64, mass: f64, bs: &[Bump]) -> Option<RadialDensity<f64>> {
    let g = grid();
    let base = RadialDensity::from_fn(g.clone(), Kind::Density, |r| sigma(kappa, mass, r)).unwrap();
    let m0 = total_of(&base, |r, x| x * (-r * r).exp()).unwrap().value();
    let mb = total_of(&base, |r, x| x * bs.iter().map(|b| bump(r, *b)).sum::<f64>()).unwrap().value();
    let a0 = -mb / m0;
    let factor = move |r: f64| 1.0 + bs.iter().map(|b| bump(r, *b)).sum::<f64>() + a0 * (-r * r).exp();
    let min = g.centers().iter().map(|r| factor(*r)).fold(f64::INFINITY, f64::min);
    (min > 0.05).then(|| RadialDensity::new(g.clone(), base.pointwise(|r, x| x * factor(r)), Kind::Density).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constants_integrate_exactly(r_max in 1.0..1e4f64, n in 16usize..2048, stretch in 1.0..4.0f64) {
        let g = Arc::new(make_grid(r_max, n, stretch).unwrap());
        let one = RadialDensity::from_fn(g, Kind::Density, |_| 1.0).unwrap();
        let exact = PI * r_max * r_max;
        prop_assert!((total(&one).unwrap().truncated / exact - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn deficits_are_nonnegative_on_bump_mixtures(kappa in 0.5..2.0f64, bs in bumps()) {
        let mass = 8.0 * PI;
        let Some(rho) = bump_mixture(kappa, mass, &bs) else { return Ok(()) };
        let m = total(&rho).unwrap().value();
        let hls = log_hls(&rho).unwrap();
        prop_assert!(hls.deficit >= -hls.error, "{hls:?}");
        let d = dissipation(&rho).unwrap();
        prop_assert!(d.direct >= -d.tol, "{d:?}");
        prop_assert!(d.gns.value >= -d.gns.tol);
        let h = fd_entropy(&rho, kappa, m).unwrap();
        prop_assert!(h.value >= -h.error, "{h:?}");
    }

    #[test]
    fn dissipation_factorization_matches(bs in bumps()) {
        let Some(rho) = bump_mixture(1.0, 8.0 * PI, &bs) else { return Ok(()) };
        let d = dissipation(&rho).unwrap();
        prop_assume!(d.gns.value > 1e-8);
        prop_assert!(d.relative_gap <= 1e-8, "{d:?}");
    }

    #[test]
    fn gns_deficit_is_dilation_invariant(mu in 0.5..2.0f64, bs in bumps()) {
        // dilating by 2 halves the narrowest bump width to 0.15
        let g = Arc::new(make_grid(1e3, 8192, 3.0).unwrap());
        let bs = &bs;
        let u = |s: f64| {
            RadialDensity::from_fn(g.clone(), Kind::Profile, move |r| {
                let x = s * r;
                s.powf(1.0 / 3.0) * (v(1.0, x) + bs.iter().map(|b| bump(x, *b) * v(1.0, x)).sum::<f64>()).max(0.0)
            })
            .unwrap()
        };
        let a = gns_deficit(&u(1.0)).unwrap().value;
        let b = gns_deficit(&u(mu)).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }

    #[test]
    fn balance_normalize_hits_the_sixth_norm(bs in bumps()) {
        let u = RadialDensity::from_fn(grid(), Kind::Profile, |r| {
            (v(1.0, r) + bs.iter().map(|b| bump(r, *b) * v(1.0, r)).sum::<f64>()).max(0.0)
        })
        .unwrap();
        let b = balance_normalize(&u).unwrap();
        let l6 = total_of(&b.profile, |_, x| x.powi(6)).unwrap().value();
        prop_assert!((l6 - PI / 2.0).abs() <= 1e-8, "{l6}");
    }

    #[test]
    fn quantiles_are_monotone(bs in bumps()) {
        let Some(rho) = bump_mixture(1.0, 8.0 * PI, &bs) else { return Ok(()) };
        let q = radial_quantile(&rho).unwrap();
        prop_assert_eq!(q.radii[0], 0.0);
        prop_assert!(q.radii.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(*q.radii.last().unwrap() <= 1e3);
    }

    #[test]
    fn w2_is_symmetric(a in bumps(), b in bumps()) {
        let (Some(x), Some(y)) = (bump_mixture(1.0, 8.0 * PI, &a), bump_mixture(1.0, 8.0 * PI, &b)) else {
            return Ok(());
        };
        let cell = |d: &RadialDensity<f64>| grid().integrate_cells(d.values()).unwrap();
        let y = y.scale(cell(&x) / cell(&y)).unwrap();
        let xy = w2_radial(&x, &y).unwrap().value();
        let yx = w2_radial(&y, &x).unwrap().value();
        prop_assert!((xy - yx).abs() <= 1e-12 * xy.max(1e-300));
        prop_assert!(xy >= 0.0);
    }

    #[test]
    fn power_laws_are_recovered(b in -2.0..-0.01f64, a in 0.1..10.0f64) {
        let series: Vec<(f64, f64)> = (0..30).map(|k| 1.2f64.powi(k)).map(|t| (t, a * (1.0 + t).powf(b))).collect();
        let fit = rate_fit(&series, RateModel::PowerLaw, (1.0, series[29].0)).unwrap();
        prop_assert!((fit.exponent - b).abs() <= 1e-9);
        prop_assert!((fit.prefactor / a - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn checkpoints_round_trip(values in prop::collection::vec(0.0..1e3f64, 64), t in 0.0..1e3f64) {
        let g = Arc::new(make_grid(10.0, 64, 1.0).unwrap());
        let cp = Checkpoint {
            state: RadialDensity::new(g, values, Kind::Density).unwrap(),
            t,
            kappa: 1.0,
            mass: 1.0,
        };
        let back = Checkpoint::<f64>::from_text(&cp.to_text()).unwrap();
        prop_assert_eq!(back.state.values(), cp.state.values());
        prop_assert_eq!(back.t, t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trivial_regime_cap(bs in bumps()) {
        let u = RadialDensity::from_fn(grid(), Kind::Profile, |r| {
            (v(1.0, r) + bs.iter().map(|b| bump(r, *b)).sum::<f64>()).max(0.0)
        })
        .unwrap();
        let fit = fit_nearest_sixth(&normalize_sixth(&u).unwrap(), false).unwrap();
        prop_assert!(fit.distance_l1 <= PI + 1e-9);
    }

    #[test]
    fn short_flows_stay_positive_and_conservative(bs in bumps()) {
        let Some(rho) = bump_mixture(1.0, 8.0 * PI, &bs) else { return Ok(()) };
        let m = total(&rho).unwrap().value();
        let c = FlowControls { fit_scale: false, ..FlowControls::default() };
        let fd = fd_evolve(&rho, 1.0, m, 0.05, &c).unwrap();
        let rho = rho.scale(8.0 * PI / m).unwrap();
        let ks = ks_evolve(&rho, 1.0, 0.05, &c).unwrap();
        for traj in [&fd, &ks] {
            prop_assert!(traj.meta.max_mass_drift <= 1e-6);
            prop_assert!(traj.states.iter().all(|(_, s)| s.values().iter().all(|x| *x >= 0.0)));
        }
    }
}
