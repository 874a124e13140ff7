//! Explicit FTCS solver for tissue temperature: Joule heating while a pulse is
//! on, passive conduction afterwards, convective (Robin) exchange with the
//! surroundings at body temperature on all four faces.
//!
//! On every face heat leaves the tissue at rate h(T − T_b). The ghost node
//! beyond a face is the mirrored interior node minus 2Δ·(h/k)·(T − T_b).

use crate::error::{ModelError, ModelResult};
use crate::grid::{Grid2D, ScalarField};
use crate::params::TissueParams;
use crate::scalar::Real;
use crate::stencil::{diffuse_reflect, StepPlan};

/// Whether the heat source is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThermalPhase {
    PulseOn,
    Cooling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState<S> {
    /// Temperature, K.
    pub temperature: ScalarField<S>,
    /// Elapsed thermal time, s.
    pub time: S,
    pub phase: ThermalPhase,
}

impl<S: Real> ThermalState<S> {
    /// Uniform body temperature.
    pub fn at_body_temperature(grid: &Grid2D<S>, params: &TissueParams<S>) -> Self {
        Self {
            temperature: ScalarField::filled(grid, params.t_b),
            time: S::zero(),
            phase: ThermalPhase::Cooling,
        }
    }

    /// Trapezoidal integral of ρc(T − T_b), J per metre of depth scaled by mm²:
    /// units of J·m⁻³·mm².
    pub fn excess_energy(&self, grid: &Grid2D<S>, params: &TissueParams<S>) -> S {
        (self.temperature.integral(grid) - params.t_b * grid.side() * grid.side())
            * params.heat_capacity()
    }
}

/// Volumetric Joule heating σE² (W m⁻³) for σ in S/m and E in V/m.
pub fn joule_heating<S: Real>(sigma: S, e: S) -> S {
    sigma * e * e
}

/// Strict upper bound ½·Δx²Δy²/(κ(Δx² + Δy²)) with κ = k/(ρc).
pub fn thermal_stability_dt<S: Real>(grid: &Grid2D<S>, params: &TissueParams<S>) -> ModelResult<S> {
    for (name, v) in [("k", params.k), ("rho", params.rho), ("c", params.c)] {
        if !(v > S::zero()) {
            return Err(ModelError::NonPositive {
                name,
                value: v.to_f64_lossy(),
            });
        }
    }
    let kappa = params.thermal_diffusivity();
    let dx2 = grid.dx() * grid.dx();
    let dy2 = grid.dy() * grid.dy();
    Ok(S::lit(0.5) * dx2 * dy2 / (kappa * (dx2 + dy2)))
}

/// Double-buffered thermal stepper for one grid, tissue and field strength.
#[derive(Debug, Clone)]
pub struct ThermalSolver<S> {
    grid: Grid2D<S>,
    kappa: S,
    robin: S,
    t_b: S,
    heating_rate: S,
    bound: S,
    next: Vec<S>,
}

impl<S: Real> ThermalSolver<S> {
    /// `field` is the applied field strength in V/mm.
    pub fn new(grid: Grid2D<S>, params: &TissueParams<S>, field: S) -> ModelResult<Self> {
        let bound = thermal_stability_dt(&grid, params)?;
        let q_j = joule_heating(params.sigma, field * S::lit(1.0e3));
        Ok(Self {
            grid,
            kappa: params.thermal_diffusivity(),
            robin: params.robin_coefficient(),
            t_b: params.t_b,
            heating_rate: q_j / params.heat_capacity(),
            bound,
            next: vec![S::zero(); grid.len()],
        })
    }

    pub fn grid(&self) -> &Grid2D<S> {
        &self.grid
    }

    pub fn stability_bound(&self) -> S {
        self.bound
    }

    /// Temperature rise rate Q_J/(ρc) of an insulated node, K s⁻¹.
    pub fn heating_rate(&self) -> S {
        self.heating_rate
    }

    pub fn check_dt(&self, dt: S) -> ModelResult<()> {
        if dt > S::zero() && dt < self.bound {
            Ok(())
        } else {
            Err(ModelError::Unstable {
                solver: "thermal",
                dt: dt.to_f64_lossy(),
                bound: self.bound.to_f64_lossy(),
            })
        }
    }

    /// Advances one step. The source term Q_J·Δt/(ρc) is added at every node
    /// when `source_on`.
    pub fn step(&mut self, state: &mut ThermalState<S>, dt: S, source_on: bool) -> ModelResult<()> {
        self.check_dt(dt)?;
        state.temperature.check(&self.grid, "T")?;
        self.advance(state, dt, source_on);
        Ok(())
    }

    fn advance(&mut self, state: &mut ThermalState<S>, dt: S, source_on: bool) {
        let m1 = self.grid.m1();
        let m2 = self.grid.m2();
        let dx = self.grid.dx();
        let dy = self.grid.dy();
        let rx = self.kappa * dt / (dx * dx);
        let ry = self.kappa * dt / (dy * dy);
        let src = if source_on {
            self.heating_rate * dt
        } else {
            S::zero()
        };
        let u = state.temperature.as_slice();
        diffuse_reflect(u, &mut self.next, m1, m2, rx, ry, src);

        // Robin correction on boundary nodes: ghost = mirror − 2Δ(h/k)(T − T_b).
        let two = S::lit(2.0);
        let sink_x = rx * two * dx * self.robin;
        let sink_y = ry * two * dy * self.robin;
        let t_b = self.t_b;
        let next = &mut self.next;
        for j in 0..m2 {
            let k0 = j * m1;
            let k1 = k0 + m1 - 1;
            next[k0] = next[k0] - sink_x * (u[k0] - t_b);
            next[k1] = next[k1] - sink_x * (u[k1] - t_b);
        }
        let top = (m2 - 1) * m1;
        for i in 0..m1 {
            next[i] = next[i] - sink_y * (u[i] - t_b);
            next[top + i] = next[top + i] - sink_y * (u[top + i] - t_b);
        }
        state.temperature.as_mut_slice().swap_with_slice(next);
        state.time = state.time + dt;
    }
}

/// Outcome of a heating phase.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatingReport<S> {
    /// Largest node temperature observed during the phase, K.
    pub peak: S,
    /// Temperature field at the end of the pulse (T_ep).
    pub end_field: ScalarField<S>,
}

/// Heats for `duration` seconds with the Joule source on.
///
/// `observer` sees the state after each step together with the step count.
pub fn run_pulse_heating<S: Real>(
    state: &mut ThermalState<S>,
    solver: &mut ThermalSolver<S>,
    duration: S,
    dt: S,
    mut observer: impl FnMut(&ThermalState<S>, u64),
) -> ModelResult<HeatingReport<S>> {
    solver.check_dt(dt)?;
    state.temperature.check(solver.grid(), "T")?;
    state.phase = ThermalPhase::PulseOn;
    let plan = StepPlan::new(duration, dt);
    let start = state.time;
    let mut peak = state.temperature.max();
    for k in 0..plan.steps {
        solver.advance(state, plan.step_len(k), true);
        state.time = start + plan.time_after(k + 1);
        peak = peak.max(state.temperature.max());
        observer(state, k + 1);
    }
    Ok(HeatingReport {
        peak,
        end_field: state.temperature.clone(),
    })
}

/// Lets the tissue relax toward body temperature for `duration` seconds.
pub fn run_cooling<S: Real>(
    state: &mut ThermalState<S>,
    solver: &mut ThermalSolver<S>,
    duration: S,
    dt: S,
    mut observer: impl FnMut(&ThermalState<S>, u64),
) -> ModelResult<()> {
    solver.check_dt(dt)?;
    state.temperature.check(solver.grid(), "T")?;
    state.phase = ThermalPhase::Cooling;
    let plan = StepPlan::new(duration, dt);
    let start = state.time;
    for k in 0..plan.steps {
        solver.advance(state, plan.step_len(k), false);
        state.time = start + plan.time_after(k + 1);
        observer(state, k + 1);
    }
    Ok(())
}
