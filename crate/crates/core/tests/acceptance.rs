//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The full thermal protocol (10 pulses, 600 s rests on 101×101 nodes) takes
//! several minutes in an optimised build; everything else is quick.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use tissue_ep::grid::{Grid2D, ScalarField};
use tissue_ep::params::{PulseProtocol, TissueParams, DAMAGE_TEMPERATURE_K, DOSE_THRESHOLD_M};
use tissue_ep::physics::{
    mass_transfer_coefficient, pole_pore_density, pore_density_analytic, pore_density_ode,
    reference_mtc,
};
use tissue_ep::protocol::{run_protocol, sweep, ScenarioConfig, SimulationResult, SweepAxis};
use tissue_ep::thermal::{
    run_cooling, run_pulse_heating, thermal_stability_dt, ThermalSolver, ThermalState,
};
use tissue_ep::transport::{
    transport_stability_dt, SourceBoundary, TransportSolver, TransportState,
};

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Verdict + 'a>);

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn field_setup() -> Verdict {
    let e = PulseProtocol::<f64>::default()
        .field_strength(1.0)
        .map_err(|e| e.to_string())?;
    ensure(e == 28.0, format!("E = {e} V/mm"))
}

fn stability_bounds() -> Verdict {
    let grid = Grid2D::new(101, 101, 1.0).unwrap();
    let p = TissueParams::<f64>::default();
    let transport = transport_stability_dt(&grid, p.d).map_err(|e| e.to_string())?;
    let thermal = thermal_stability_dt(&grid, &p).map_err(|e| e.to_string())?;
    ensure(
        transport == 0.25 && rel(thermal, 1.9e-4) < 0.02 && 0.2 < transport && 2e-5 < thermal,
        format!("transport bound {transport} s, thermal bound {thermal:.6e} s; steps 0.2 s and 2e-5 s inside"),
    )
}

fn pore_density_oracle() -> Verdict {
    let p = TissueParams::<f64>::default();
    let mut worst = 0.0f64;
    for t in [1e-3, 1e-2, 8e-2] {
        for v in [0.0, 0.5, 1.05] {
            let a = pore_density_analytic(t, v, &p).map_err(|e| e.to_string())?;
            let b = pore_density_ode(t, v, &p, t / 4000.0).map_err(|e| e.to_string())?;
            worst = worst.max(rel(b, a));
        }
    }
    ensure(
        worst < 1e-6,
        format!("max relative difference {worst:.3e} over 9 (t, V_m) pairs"),
    )
}

fn mtc_cross_check() -> Verdict {
    let p = TissueParams::<f64>::default();
    let reference = reference_mtc(0.0, &p);
    let n_ep = pole_pore_density(28.0, 0.08, &p).map_err(|e| e.to_string())?;
    let pore = mass_transfer_coefficient(0.0, n_ep, &p);
    ensure(
        (reference - 8.16e-5).abs() < 1e-7 && rel(pore, reference) < 0.10,
        format!(
            "reference {reference:.6e} 1/s, pore-area {pore:.6e} 1/s ({:.2}% apart)",
            100.0 * rel(pore, reference)
        ),
    )
}

/// Body temperature plus one 80 ms pulse at 28 V/mm.
fn heated(n: usize) -> (ThermalState<f64>, ThermalSolver<f64>, f64) {
    let grid = Grid2D::new(n, n, 1.0).unwrap();
    let p = TissueParams::default();
    let mut solver = ThermalSolver::new(grid, &p, 28.0).unwrap();
    let mut state = ThermalState::at_body_temperature(&grid, &p);
    let report = run_pulse_heating(&mut state, &mut solver, 0.08, 2e-5, |_, _| {}).unwrap();
    (state, solver, report.peak)
}

fn thermal_peak() -> Verdict {
    let (state, _, _) = heated(101);
    let t = &state.temperature;
    let centre = t.get(50, 50);
    let corners = [t.get(0, 0), t.get(100, 0), t.get(0, 100), t.get(100, 100)];
    let cooler = corners.iter().all(|&c| c < centre);
    ensure(
        (centre - 314.335).abs() <= 0.5 && cooler,
        format!("centre {centre:.4} K, corner {:.4} K", corners[0]),
    )
}

fn cool(n: usize) -> (f64, bool, f64) {
    let (mut state, mut solver, _) = heated(n);
    let mut prev = state.temperature.max();
    let mut monotone = true;
    let start = Instant::now();
    run_cooling(&mut state, &mut solver, 600.0, 1e-4, |s, _| {
        let m = s.temperature.max();
        monotone &= m <= prev;
        prev = m;
    })
    .unwrap();
    let centre = state.temperature.get(n / 2, n / 2);
    (centre, monotone, start.elapsed().as_secs_f64())
}

fn cooling() -> Verdict {
    let (centre, monotone, secs) = cool(101);
    let (small_centre, small_monotone, small_secs) = cool(21);
    ensure(
        (centre - 311.0).abs() <= 1.0 && monotone && (small_centre - 311.0).abs() <= 1.0 && small_monotone && small_secs < 10.0,
        format!(
            "101x101 centre {centre:.4} K after 600 s ({secs:.0} s wall, max-T monotone {monotone}); \
             21x21 centre {small_centre:.4} K in {small_secs:.1} s"
        ),
    )
}

fn safety(full: &Result<SimulationResult<f64>, String>) -> Verdict {
    let r = full.as_ref().map_err(Clone::clone)?;
    let peak = r.peak_t.unwrap_or(f64::NAN);
    ensure(
        peak < DAMAGE_TEMPERATURE_K && r.safety_ok() == Some(true),
        format!(
            "peak {peak:.4} K over 10 pulses, safety_ok {:?}",
            r.safety_ok()
        ),
    )
}

fn conservation() -> Verdict {
    let grid = Grid2D::new(101, 101, 1.0).unwrap();
    let eps = 0.18;
    let mut state = TransportState::from_fields(
        ScalarField::from_fn(
            &grid,
            |i, j| if i < 20 { 1.0 } else { 0.01 * (j % 7) as f64 },
        ),
        ScalarField::filled(&grid, 0.0),
    );
    let mut solver = TransportSolver::new(grid, 1e-4, eps, 0.2, SourceBoundary::ZeroFlux)
        .map_err(|e| e.to_string())?;
    let before = state.total_drug(&grid, eps);
    for _ in 0..10_000 {
        solver.step(&mut state, 7.9e-5).map_err(|e| e.to_string())?;
    }
    let drift = rel(state.total_drug(&grid, eps), before);

    let mut state = TransportState::from_fields(
        ScalarField::from_fn(&grid, |i, j| ((i * 13 + j * 7) % 17) as f64 / 16.0),
        ScalarField::from_fn(&grid, |i, j| ((i + j) % 5) as f64 / 8.0),
    );
    let mut still = TransportSolver::new(grid, 0.0, eps, 0.2, SourceBoundary::ZeroFlux)
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let prev = state.clone();
        still.step(&mut state, 1e-2).map_err(|e| e.to_string())?;
        for k in 0..grid.len() {
            let a = eps * prev.c_e.as_slice()[k] + (1.0 - eps) * prev.c_re.as_slice()[k];
            let b = eps * state.c_e.as_slice()[k] + (1.0 - eps) * state.c_re.as_slice()[k];
            worst = worst.max((a - b).abs());
        }
    }
    ensure(
        drift < 1e-8 && worst < 1e-12,
        format!("closed-system drift {drift:.3e} over 1e4 steps; D=0 pointwise change {worst:.3e} per step"),
    )
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

fn y_invariance(full: &Result<SimulationResult<f64>, String>) -> Verdict {
    let r = full.as_ref().map_err(Clone::clone)?;
    let mut fields: Vec<&ScalarField<f64>> = vec![&r.final_c_e, &r.final_c_re];
    fields.extend(
        r.snapshots
            .iter()
            .filter(|s| s.quantity != tissue_ep::protocol::Quantity::T)
            .map(|s| &s.field),
    );
    let spread = fields.iter().map(|f| column_spread(f)).fold(0.0, f64::max);
    ensure(
        spread < 1e-10,
        format!(
            "max spread along y {spread:.3e} M over {} concentration fields",
            fields.len()
        ),
    )
}

/// Transport-only scenario for the parameter studies.
fn study_base() -> ScenarioConfig<f64> {
    ScenarioConfig {
        thermal: false,
        ..Default::default()
    }
}

fn mid_final(
    r: &SimulationResult<f64>,
    quantity: fn(&tissue_ep::protocol::ProbeSample<f64>) -> f64,
) -> f64 {
    r.probe(1).last().map(quantity).unwrap_or(f64::NAN)
}

fn trends() -> Verdict {
    let base = study_base();
    let mut notes = Vec::new();
    let mut ok = true;
    let studies: [(SweepAxis, [f64; 3]); 4] = [
        (SweepAxis::Permeability, [1e-4, 5e-4, 1e-3]),
        (SweepAxis::Diffusion, [5e-5, 1e-4, 2e-4]),
        (SweepAxis::PulseLength, [0.02, 0.05, 0.08]),
        (SweepAxis::PulseCount, [1.0, 5.0, 10.0]),
    ];
    for (axis, values) in studies {
        let mut base = base.clone();
        if axis == SweepAxis::Diffusion {
            // the largest D halves the transport bound
            base.steps.transport = 0.1;
        }
        let results: Vec<SimulationResult<f64>> = sweep(&base, axis, &values)
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let c_re: Vec<f64> = results.iter().map(|r| mid_final(r, |s| s.c_re)).collect();
        let increasing = c_re.windows(2).all(|w| w[1] > w[0]);
        ok &= increasing;
        notes.push(format!(
            "{}: C_RE(0.5,0.5) {:.3e} {:.3e} {:.3e}",
            axis.name(),
            c_re[0],
            c_re[1],
            c_re[2]
        ));
        if matches!(axis, SweepAxis::Permeability | SweepAxis::PulseLength) {
            // matched rest-phase instants; all runs share the sampling grid
            let series: Vec<Vec<f64>> = results
                .iter()
                .map(|r| r.probe(1).map(|s| s.c_e).collect())
                .collect();
            let never_higher =
                (0..series[0].len()).all(|k| series.windows(2).all(|w| w[1][k] <= w[0][k]));
            let finals: Vec<f64> = series.iter().map(|s| *s.last().unwrap()).collect();
            let decreasing = finals.windows(2).all(|w| w[1] < w[0]);
            ok &= never_higher && decreasing;
            notes.push(format!(
                "{}: C_E(0.5,0.5) final {:.4e} {:.4e} {:.4e}",
                axis.name(),
                finals[0],
                finals[1],
                finals[2]
            ));
        }
    }
    ensure(ok, notes.join("; "))
}

fn dose(full: &Result<SimulationResult<f64>, String>) -> Verdict {
    let r = full.as_ref().map_err(Clone::clone)?;
    let grid = Grid2D::<f64>::new(101, 101, 1.0).unwrap();
    // left portion: the half of the tissue next to the drug source
    let left_min = (0..grid.m2())
        .flat_map(|j| (0..=50).map(move |i| (i, j)))
        .map(|(i, j)| r.final_c_re.get(i, j))
        .fold(f64::INFINITY, f64::min);
    let mut sensitivity = Vec::new();
    for tau in [100.0, 600.0, 1200.0] {
        let mut cfg = study_base();
        cfg.params.tau = tau;
        let s = run_protocol(&cfg).map_err(|e| e.to_string())?;
        sensitivity.push(format!(
            "tau {tau} s: mean C_RE {:.4e} M, fraction above 0.025 M {:.3}",
            s.summary.mean_c_re, s.summary.dose_fraction
        ));
    }
    ensure(
        left_min > DOSE_THRESHOLD_M,
        format!(
            "min C_RE over x <= 0.5 mm {left_min:.4e} M, grid mean {:.4e} M, fraction above {:.3}; {}",
            r.summary.mean_c_re,
            r.summary.dose_fraction,
            sensitivity.join("; ")
        ),
    )
}

fn initiation(full: &Result<SimulationResult<f64>, String>) -> Verdict {
    let r = full.as_ref().map_err(Clone::clone)?;
    let times: Vec<f64> = r
        .initiation_table
        .iter()
        .map(|e| e.time.ok_or_else(|| format!("x = {} never reached", e.x)))
        .collect::<Result<_, _>>()?;
    if times.len() != 9 {
        return Err(format!("{} locations in table", times.len()));
    }
    let ratio = times[8] / times[0];
    let increasing = times.windows(2).all(|w| w[1] > w[0]);
    let affine = times
        .windows(3)
        .all(|w| (w[2] - 2.0 * w[1] + w[0]).abs() < 1e-9 * w[2]);
    ensure(
        (ratio - 9.0).abs() < 1e-9 && increasing && affine,
        format!(
            "first uptake at x=0.1 after {} s, x=0.9 after {} s, ratio {ratio}",
            times[0], times[8]
        ),
    )
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let full_cfg = ScenarioConfig::<f64> {
        output: tissue_ep::protocol::OutputSettings {
            snapshot_times: vec![600.08, 3000.4, 6000.8],
            ..Default::default()
        },
        ..Default::default()
    };
    let full_started = Instant::now();
    let full = guarded(|| run_protocol(&full_cfg).map_err(|e| e.to_string()));
    eprintln!(
        "full 10-pulse protocol finished in {:.0} s",
        full_started.elapsed().as_secs_f64()
    );

    let criteria: Vec<Criterion<'_>> = vec![
        ("field setup", Box::new(field_setup)),
        ("stability bounds", Box::new(stability_bounds)),
        ("pore-density oracle", Box::new(pore_density_oracle)),
        ("MTC cross-check", Box::new(mtc_cross_check)),
        ("thermal peak", Box::new(thermal_peak)),
        ("cooling", Box::new(cooling)),
        ("safety", Box::new(|| safety(&full))),
        ("conservation", Box::new(conservation)),
        ("y-invariance", Box::new(|| y_invariance(&full))),
        ("trend reproduction", Box::new(trends)),
        ("dose claim", Box::new(|| dose(&full))),
        ("initiation-time structure", Box::new(|| initiation(&full))),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.into_iter().enumerate() {
        match guarded(check) {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", n + 1);
            }
        }
    }
    println!(
        "{} of 12 criteria passed in {:.0} s",
        12 - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
