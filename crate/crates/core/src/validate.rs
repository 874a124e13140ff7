//! Built-in invariant suite on reduced grids, run by `tissue-ep validate`.

use crate::config::{echo_config, parse_config};
use crate::grid::{Grid2D, ScalarField};
use crate::params::{PulseProtocol, TissueParams};
use crate::physics::{
    mass_transfer_coefficient, pole_pore_density, pore_density_analytic, pore_density_ode,
    reference_mtc,
};
use crate::protocol::{run_protocol, MtcSource, ProtocolError, ScenarioConfig, StepSizes};
use crate::thermal::{run_cooling, run_pulse_heating, ThermalSolver, ThermalState};
use crate::transport::{SourceBoundary, TransportSolver, TransportState};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Short transport-only scenario on an `n × n` grid.
fn reduced(n: usize, pulses: u32, t_m: f64) -> ScenarioConfig<f64> {
    ScenarioConfig {
        grid: Grid2D::new(n, n, 1.0).expect("reduced grid"),
        protocol: PulseProtocol {
            pulse_count: pulses,
            t_m,
            ..Default::default()
        },
        thermal: false,
        ..Default::default()
    }
}

fn field_setup() -> Check {
    let e = PulseProtocol::<f64>::default()
        .field_strength(1.0)
        .unwrap_or(f64::NAN);
    check("field strength 28 V/mm", e == 28.0, format!("E = {e}"))
}

fn pore_density_oracle() -> Check {
    let p = TissueParams::<f64>::default();
    let mut worst = 0.0f64;
    for t in [1e-3, 1e-2, 8e-2] {
        for v in [0.0, 0.5, 1.05] {
            let a = pore_density_analytic(t, v, &p).unwrap_or(f64::NAN);
            let b = pore_density_ode(t, v, &p, t / 2000.0).unwrap_or(f64::NAN);
            worst = worst.max(rel(b, a));
        }
    }
    check(
        "pore density closed form vs integration",
        worst < 1e-6,
        format!("max rel diff {worst:.3e}"),
    )
}

fn mtc_agreement() -> Check {
    let p = TissueParams::<f64>::default();
    let reference = reference_mtc(0.0, &p);
    let n = pole_pore_density(28.0, 0.08, &p).unwrap_or(f64::NAN);
    let mu = mass_transfer_coefficient(0.0, n, &p);
    check(
        "MTC models agree within 10%",
        (reference - 8.16e-5).abs() < 1e-7 && rel(mu, reference) < 0.1,
        format!("pore {mu:.6e}, reference {reference:.6e}"),
    )
}

fn conservation() -> Vec<Check> {
    let grid = Grid2D::new(21, 21, 1.0).expect("grid");
    let eps = 0.18;
    let mut state = TransportState::from_fields(
        ScalarField::from_fn(
            &grid,
            |i, j| if i < 5 { 1.0 } else { 0.1 * j as f64 / 20.0 },
        ),
        ScalarField::filled(&grid, 0.0),
    );
    let mut out = Vec::new();
    match TransportSolver::new(grid, 1e-4, eps, 0.2, SourceBoundary::ZeroFlux) {
        Ok(mut solver) => {
            let before = state.total_drug(&grid, eps);
            let ok = (0..1000).all(|_| solver.step(&mut state, 1e-3).is_ok());
            let drift = rel(state.total_drug(&grid, eps), before);
            out.push(check(
                "closed system conserves total drug",
                ok && drift < 1e-8,
                format!("relative drift {drift:.3e}"),
            ));
        }
        Err(e) => out.push(check(
            "closed system conserves total drug",
            false,
            e.to_string(),
        )),
    }

    let mut state = TransportState::from_fields(
        ScalarField::from_fn(&grid, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0),
        ScalarField::from_fn(&grid, |i, j| ((i + 2 * j) % 5) as f64 / 10.0),
    );
    let mut worst = 0.0f64;
    match TransportSolver::new(grid, 0.0, eps, 0.2, SourceBoundary::ZeroFlux) {
        Ok(mut solver) => {
            for _ in 0..200 {
                let prev = state.clone();
                if solver.step(&mut state, 5e-3).is_err() {
                    worst = f64::INFINITY;
                    break;
                }
                for k in 0..grid.len() {
                    let a = eps * prev.c_e.as_slice()[k] + (1.0 - eps) * prev.c_re.as_slice()[k];
                    let b = eps * state.c_e.as_slice()[k] + (1.0 - eps) * state.c_re.as_slice()[k];
                    worst = worst.max((a - b).abs());
                }
            }
            out.push(check(
                "pointwise exchange balance without diffusion",
                worst < 1e-12,
                format!("max per-step change {worst:.3e}"),
            ));
        }
        Err(e) => out.push(check(
            "pointwise exchange balance without diffusion",
            false,
            e.to_string(),
        )),
    }
    out
}

fn column_spread(f: &ScalarField<f64>) -> f64 {
    (0..f.m1())
        .map(|i| {
            let col = f.column(i);
            let hi = col.iter().copied().fold(f64::MIN, f64::max);
            let lo = col.iter().copied().fold(f64::MAX, f64::min);
            hi - lo
        })
        .fold(0.0, f64::max)
}

fn protocol_checks() -> Vec<Check> {
    let cfg = reduced(21, 2, 60.0);
    let mut out = Vec::new();
    match (run_protocol(&cfg), run_protocol(&cfg)) {
        (Ok(a), Ok(b)) => {
            let spread = column_spread(&a.final_c_e).max(column_spread(&a.final_c_re));
            out.push(check(
                "concentrations constant in y",
                spread < 1e-10,
                format!("max spread {spread:.3e}"),
            ));
            let c2 = cfg.params.c2;
            let bounded = [&a.final_c_e, &a.final_c_re]
                .iter()
                .all(|f| f.min() >= 0.0 && f.max() <= c2);
            out.push(check(
                "concentrations stay within [0, C2]",
                bounded,
                format!(
                    "C_E in [{:.3e}, {:.3e}]",
                    a.final_c_e.min(),
                    a.final_c_e.max()
                ),
            ));
            let times_ok = (0..cfg.probes.len()).all(|id| {
                let t: Vec<f64> = a.probe(id).map(|s| s.time).collect();
                t.windows(2).all(|w| w[1] > w[0])
            });
            out.push(check("probe timestamps increase", times_ok, String::new()));
            out.push(check("runs are deterministic", a == b, String::new()));
            let accounting = (a.summary.transport_time - 120.0).abs() < 1e-9
                && (a.summary.heated_time - 0.16).abs() < 1e-12;
            out.push(check(
                "phase accounting",
                accounting,
                format!(
                    "transport {} s, heated {} s",
                    a.summary.transport_time, a.summary.heated_time
                ),
            ));
        }
        (Err(e), _) | (_, Err(e)) => out.push(check("reduced protocol runs", false, e.to_string())),
    }

    let zero = ScenarioConfig {
        mtc_source: MtcSource::Zero,
        ..cfg.clone()
    };
    out.push(match run_protocol(&zero) {
        Ok(r) => check(
            "no electroporation leaves cells empty",
            r.final_c_re.max() == 0.0,
            String::new(),
        ),
        Err(e) => check(
            "no electroporation leaves cells empty",
            false,
            e.to_string(),
        ),
    });

    let front = reduced(11, 1, 20.0);
    out.push(match run_protocol(&front) {
        Ok(r) => {
            let t = |x: f64| {
                r.initiation_table
                    .iter()
                    .find(|e| (e.x - x).abs() < 1e-12)
                    .and_then(|e| e.time)
            };
            match (t(0.1), t(0.9)) {
                (Some(a), Some(b)) => check(
                    "uptake front ratio 9 between x = 0.9 and x = 0.1",
                    (b / a - 9.0).abs() < 1e-9,
                    format!("{a} s vs {b} s"),
                ),
                _ => check(
                    "uptake front ratio 9 between x = 0.9 and x = 0.1",
                    false,
                    "front missing".into(),
                ),
            }
        }
        Err(e) => check(
            "uptake front ratio 9 between x = 0.9 and x = 0.1",
            false,
            e.to_string(),
        ),
    });
    out
}

fn thermal_checks() -> Vec<Check> {
    let grid = Grid2D::new(21, 21, 1.0).expect("grid");
    let params = TissueParams::<f64>::default();
    let mut out = Vec::new();
    let mut solver = match ThermalSolver::new(grid, &params, 28.0) {
        Ok(s) => s,
        Err(e) => return vec![check("thermal solver", false, e.to_string())],
    };
    let mut state = ThermalState::at_body_temperature(&grid, &params);
    if let Err(e) = run_pulse_heating(&mut state, &mut solver, 0.08, 2e-5, |_, _| {}) {
        return vec![check("thermal solver", false, e.to_string())];
    }
    let t = &state.temperature;
    let n = grid.m1() - 1;
    let symmetric = (0..=n).all(|i| {
        (0..=n).all(|j| {
            let v = t.get(i, j);
            v == t.get(n - i, j) && v == t.get(i, n - j) && v == t.get(j, i)
        })
    });
    out.push(check("heated field is symmetric", symmetric, String::new()));
    let centre = t.get(n / 2, n / 2);
    out.push(check(
        "centre warmer than corner",
        centre > t.get(0, 0),
        format!("centre {centre:.6} K, corner {:.6} K", t.get(0, 0)),
    ));

    let mut prev = t.max();
    let mut monotone = true;
    let cooled = run_cooling(&mut state, &mut solver, 2.0, 1e-4, |s, _| {
        let m = s.temperature.max();
        monotone &= m <= prev;
        prev = m;
    });
    out.push(check(
        "maximum temperature never rises while cooling",
        cooled.is_ok() && monotone,
        format!("max after 2 s {prev:.6} K"),
    ));

    let mut rest = ThermalState::at_body_temperature(&grid, &params);
    let still = run_cooling(&mut rest, &mut solver, 0.5, 1e-4, |_, _| {}).is_ok()
        && rest.temperature.as_slice().iter().all(|&v| v == params.t_b);
    out.push(check(
        "body temperature is an equilibrium",
        still,
        String::new(),
    ));
    out
}

fn safety_pathway() -> Check {
    let mut cfg = ScenarioConfig {
        grid: Grid2D::new(11, 11, 1.0).expect("grid"),
        steps: StepSizes {
            transport: 1.0,
            heating: 2e-5,
            cooling: 1e-3,
        },
        enforce_field_limit: false,
        ..Default::default()
    };
    cfg.protocol.phi0 = 38.0;
    cfg.protocol.t_m = 10.0;
    match run_protocol(&cfg) {
        Err(ProtocolError::SafetyAbort { peak_t, partial }) => check(
            "strict mode aborts at the damage temperature",
            partial.aborted && partial.safety_ok() == Some(false),
            format!("peak {peak_t:.4} K"),
        ),
        other => check(
            "strict mode aborts at the damage temperature",
            false,
            format!("unexpected outcome: {:?}", other.map(|r| r.peak_t)),
        ),
    }
}

fn config_round_trip() -> Check {
    let cfg = ScenarioConfig::<f64>::default();
    let ok = parse_config::<f64>(&echo_config(&cfg)).is_ok_and(|c| c == cfg);
    check(
        "configuration echo parses back identically",
        ok,
        String::new(),
    )
}

/// Runs every check; a few seconds in optimised builds.
pub fn invariant_suite() -> Vec<Check> {
    let mut checks = vec![field_setup(), pore_density_oracle(), mtc_agreement()];
    checks.extend(conservation());
    checks.extend(protocol_checks());
    checks.extend(thermal_checks());
    checks.push(safety_pathway());
    checks.push(config_round_trip());
    checks
}
