use proptest::prelude::*;

use tissue_ep::config::{echo_config, parse_config};
use tissue_ep::grid::{Grid2D, ScalarField};
use tissue_ep::params::TissueParams;
use tissue_ep::physics::{
    mass_transfer_coefficient, pore_density_analytic, transmembrane_potential,
};
use tissue_ep::protocol::{MtcSource, SafetyMode, ScenarioConfig};
use tissue_ep::thermal::{run_pulse_heating, ThermalSolver, ThermalState};
use tissue_ep::transport::{
    transport_stability_dt, SourceBoundary, TransportSolver, TransportState,
};
use tissue_ep::StepPlan;

fn table() -> TissueParams<f64> {
    TissueParams::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pore_density_grows_in_time_and_stays_below_equilibrium(
        v in 0.0f64..1.4,
        t1 in 0.0f64..2.0,
        dt in 0.0f64..2.0,
    ) {
        let p = table();
        let a = pore_density_analytic(t1, v, &p).unwrap();
        let b = pore_density_analytic(t1 + dt, v, &p).unwrap();
        let equilibrium = p.n0 * ((v / p.v_ep).powi(2) * p.q).exp();
        prop_assert!(a >= 0.0);
        prop_assert!(b >= a);
        prop_assert!(b <= equilibrium * (1.0 + 1e-12));
    }

    #[test]
    fn pore_density_grows_with_potential(v in 0.0f64..1.4, dv in 0.0f64..0.1, t in 1e-4f64..1.0) {
        let p = table();
        let lo = pore_density_analytic(t, v, &p).unwrap();
        let hi = pore_density_analytic(t, v + dv, &p).unwrap();
        prop_assert!(hi >= lo * (1.0 - 1e-12));
        let neg = pore_density_analytic(t, -v, &p).unwrap();
        prop_assert_eq!(neg, lo);
    }

    #[test]
    fn mtc_is_linear_in_pores_and_decays(n in 1e9f64..1e16, scale in 0.1f64..10.0, t in 0.0f64..3000.0, dt in 1e-3f64..600.0) {
        let p = table();
        let mu = mass_transfer_coefficient(t, n, &p);
        let scaled = mass_transfer_coefficient(t, n * scale, &p);
        prop_assert!((scaled - scale * mu).abs() <= 1e-12 * scaled.abs());
        let later = mass_transfer_coefficient(t + dt, n, &p);
        prop_assert!(later < mu);
        let doubled = TissueParams { p: 2.0 * p.p, ..p };
        let mu2 = mass_transfer_coefficient(t, n, &doubled);
        prop_assert!((mu2 - 2.0 * mu).abs() <= 1e-12 * mu2);
    }

    #[test]
    fn transmembrane_potential_is_odd_about_the_equator(e in 0.0f64..28.0, psi in 0.0f64..std::f64::consts::PI) {
        let r_c = 0.025;
        let v = transmembrane_potential(e, r_c, psi);
        let w = transmembrane_potential(e, r_c, psi + std::f64::consts::PI);
        prop_assert!((v + w).abs() < 1e-12);
        prop_assert!(v.abs() <= 1.5 * e * r_c * (1.0 + 1e-15));
        prop_assert!(transmembrane_potential(e, r_c, std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn transport_stays_within_bounds(
        seed in proptest::collection::vec(0.0f64..1.0, 2 * 81),
        mu_frac in 0.0f64..1.0,
        frac in 0.05f64..0.95,
        steps in 1usize..60,
    ) {
        let grid = Grid2D::new(9, 9, 1.0).unwrap();
        let d = 1e-4;
        let eps = 0.18;
        let dt = frac * transport_stability_dt(&grid, d).unwrap();
        // keep every update coefficient nonnegative: 1 - 4a - (1-eps)/eps·μΔt >= 0
        let mu = mu_frac * (1.0 - frac) * eps / ((1.0 - eps) * dt);
        let mut solver = TransportSolver::new(grid, d, eps, dt, SourceBoundary::Dirichlet(1.0)).unwrap();
        let mut state = TransportState::from_fields(
            ScalarField::from_fn(&grid, |i, j| seed[grid.index(i, j)]),
            ScalarField::from_fn(&grid, |i, j| seed[81 + grid.index(i, j)]),
        );
        for _ in 0..steps {
            solver.step(&mut state, mu).unwrap();
        }
        for f in [&state.c_e, &state.c_re] {
            prop_assert!(f.min() >= 0.0);
            prop_assert!(f.max() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn transport_keeps_profiles_flat_in_y(
        profile in proptest::collection::vec(0.0f64..1.0, 11),
        mu in 0.0f64..1e-2,
        steps in 1usize..100,
    ) {
        let grid = Grid2D::new(11, 7, 1.0).unwrap();
        let mut solver = TransportSolver::new(grid, 1e-4, 0.18, 0.2, SourceBoundary::Dirichlet(1.0)).unwrap();
        let mut state = TransportState::from_fields(
            ScalarField::from_fn(&grid, |i, _| profile[i]),
            ScalarField::filled(&grid, 0.0),
        );
        for _ in 0..steps {
            solver.step(&mut state, mu).unwrap();
        }
        for f in [&state.c_e, &state.c_re] {
            for i in 0..grid.m1() {
                let col = f.column(i);
                prop_assert!(col.iter().all(|&v| (v - col[0]).abs() < 1e-10));
            }
        }
    }

    #[test]
    fn heated_field_has_the_square_symmetry(half in 2usize..8, field in 5.0f64..28.0, steps in 1u32..200) {
        let n = 2 * half + 1;
        let grid = Grid2D::new(n, n, 1.0).unwrap();
        let params = table();
        let mut solver = ThermalSolver::new(grid, &params, field).unwrap();
        let mut state = ThermalState::at_body_temperature(&grid, &params);
        let dt = 2e-5;
        run_pulse_heating(&mut state, &mut solver, dt * f64::from(steps), dt, |_, _| {}).unwrap();
        let t = &state.temperature;
        let m = n - 1;
        for i in 0..n {
            for j in 0..n {
                let v = t.get(i, j);
                prop_assert_eq!(v, t.get(m - i, j));
                prop_assert_eq!(v, t.get(i, m - j));
                prop_assert_eq!(v, t.get(j, i));
            }
        }
        prop_assert!(t.get(half, half) >= t.get(0, 0));
    }

    #[test]
    fn step_plan_covers_the_phase(duration in 1e-3f64..1e3, dt in 1e-4f64..10.0) {
        let plan = StepPlan::new(duration, dt);
        let total: f64 = (0..plan.steps).map(|k| plan.step_len(k)).sum();
        prop_assert!((total - duration).abs() <= 1e-9 * duration.max(1.0));
        prop_assert!((0..plan.steps).all(|k| plan.step_len(k) > 0.0 && plan.step_len(k) <= dt * (1.0 + 1e-9)));
    }

    #[test]
    fn bilinear_sampling_is_exact_at_nodes(values in proptest::collection::vec(-5.0f64..5.0, 35), i in 0usize..7, j in 0usize..5) {
        let grid = Grid2D::new(7, 5, 2.0).unwrap();
        let f = ScalarField::from_fn(&grid, |a, b| values[grid.index(a, b)]);
        prop_assert_eq!(f.sample(&grid, grid.x(i), grid.y(j)), f.get(i, j));
    }

    #[test]
    fn configuration_echo_round_trips(
        d in 1e-6f64..1e-3,
        p in 1e-5f64..1e-2,
        eps in 0.01f64..0.99,
        tau in 1.0f64..5000.0,
        t_ep in 1e-3f64..0.1,
        pn in 1u32..20,
        m in 3usize..200,
        source in 0usize..3,
        strict in any::<bool>(),
        probes in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..5),
    ) {
        let mut cfg = ScenarioConfig::<f64> {
            grid: Grid2D::new(m, m + 1, 1.0).unwrap(),
            mtc_source: [MtcSource::PoreResealing, MtcSource::Reference, MtcSource::Zero][source],
            safety: if strict { SafetyMode::Strict } else { SafetyMode::ReportOnly },
            ..Default::default()
        };
        cfg.params.d = d;
        cfg.params.p = p;
        cfg.params.eps = eps;
        cfg.params.tau = tau;
        cfg.protocol.t_ep = t_ep;
        cfg.protocol.pulse_count = pn;
        cfg.probes = probes.into_iter().map(|(x, y)| tissue_ep::protocol::Probe { x, y }).collect();
        let echoed = echo_config(&cfg);
        let parsed = parse_config::<f64>(&echoed).unwrap();
        prop_assert_eq!(&parsed, &cfg);
        prop_assert_eq!(echo_config(&parsed), echoed);
    }
}
