//! Explicit FTCS solver for the coupled extracellular (C_E) and intracellular
//! (C_RE) drug concentrations.
//!
//! Interior update, with a = DΔt/Δx², c = DΔt/Δy², d = ((1−ε)/ε)μΔt:
//!
//! ```text
//! C_E'  = C_E + a(C_E[i+1] + C_E[i−1] − 2C_E) + c(C_E[j+1] + C_E[j−1] − 2C_E) − d(C_E − C_RE)
//! C_RE' = C_RE + μΔt(C_E − C_RE)
//! ```
//!
//! The x = L, y = 0 and y = L faces are zero-gradient (mirrored ghost nodes).
//! The x = 0 face holds C_E = C2 unless switched to zero flux.

use crate::error::{ModelError, ModelResult};
use crate::grid::{Grid2D, ScalarField};
use crate::params::TissueParams;
use crate::physics::{mass_transfer_coefficient, reference_mtc_with};
use crate::scalar::Real;
use crate::stencil::{diffuse_reflect, StepPlan};

/// Condition imposed on C_E at the x = 0 face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceBoundary<S> {
    /// Fixed concentration (continuous drug administration).
    Dirichlet(S),
    /// Zero gradient, closing the system.
    ZeroFlux,
}

/// Time-dependent mass-transfer coefficient used during a rest phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MtcModel<S> {
    /// Pore-area MTC driven by the end-of-pulse pore density (m⁻²).
    PoreResealing { n_ep: S },
    /// Dual-porosity reference MTC with pore fraction and membrane thickness (mm).
    Reference {
        pore_fraction: S,
        membrane_thickness: S,
    },
    /// No exchange between compartments.
    Zero,
}

impl<S: Real> MtcModel<S> {
    pub fn rate(&self, t_since_pulse: S, params: &TissueParams<S>) -> S {
        match *self {
            MtcModel::PoreResealing { n_ep } => {
                mass_transfer_coefficient(t_since_pulse, n_ep, params)
            }
            MtcModel::Reference {
                pore_fraction,
                membrane_thickness,
            } => reference_mtc_with(t_since_pulse, params, pore_fraction, membrane_thickness),
            MtcModel::Zero => S::zero(),
        }
    }
}

/// Extracellular and intracellular concentrations with phase bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportState<S> {
    pub c_e: ScalarField<S>,
    pub c_re: ScalarField<S>,
    /// Accumulated transport (rest-phase) time, s.
    pub t: S,
    /// Time since the end of the most recent pulse, s.
    pub t_since_pulse: S,
    /// Number of pulses applied so far.
    pub pulse_index: u32,
    /// Transport steps taken so far.
    pub steps: u64,
}

impl<S: Real> TransportState<S> {
    /// Drug at C2 along x = 0, nothing elsewhere, empty cells.
    pub fn initial(grid: &Grid2D<S>, c2: S) -> Self {
        Self::from_fields(
            ScalarField::from_fn(grid, |i, _| if i == 0 { c2 } else { S::zero() }),
            ScalarField::filled(grid, S::zero()),
        )
    }

    pub fn from_fields(c_e: ScalarField<S>, c_re: ScalarField<S>) -> Self {
        Self {
            c_e,
            c_re,
            t: S::zero(),
            t_since_pulse: S::zero(),
            pulse_index: 0,
            steps: 0,
        }
    }

    /// Trapezoidal integral of ε·C_E + (1 − ε)·C_RE over the domain.
    pub fn total_drug(&self, grid: &Grid2D<S>, eps: S) -> S {
        eps * self.c_e.integral(grid) + (S::one() - eps) * self.c_re.integral(grid)
    }
}

/// Strict upper bound ½·Δx²Δy²/(D(Δx² + Δy²)) on the transport step.
pub fn transport_stability_dt<S: Real>(grid: &Grid2D<S>, d: S) -> ModelResult<S> {
    if !(d > S::zero()) {
        return Err(ModelError::NonPositive {
            name: "D",
            value: d.to_f64_lossy(),
        });
    }
    let dx2 = grid.dx() * grid.dx();
    let dy2 = grid.dy() * grid.dy();
    Ok(S::lit(0.5) * dx2 * dy2 / (d * (dx2 + dy2)))
}

/// Double-buffered transport stepper bound to one grid and step size.
#[derive(Debug, Clone)]
pub struct TransportSolver<S> {
    grid: Grid2D<S>,
    d: S,
    exchange_ratio: S,
    source: SourceBoundary<S>,
    dt: S,
    next_e: Vec<S>,
    next_re: Vec<S>,
}

impl<S: Real> TransportSolver<S> {
    /// `d = 0` disables diffusion (no stability bound applies); otherwise `dt`
    /// must lie strictly below [`transport_stability_dt`].
    pub fn new(
        grid: Grid2D<S>,
        d: S,
        eps: S,
        dt: S,
        source: SourceBoundary<S>,
    ) -> ModelResult<Self> {
        if !(dt > S::zero()) {
            return Err(ModelError::NonPositive {
                name: "dt",
                value: dt.to_f64_lossy(),
            });
        }
        if d < S::zero() {
            return Err(ModelError::NonPositive {
                name: "D",
                value: d.to_f64_lossy(),
            });
        }
        if d > S::zero() {
            let bound = transport_stability_dt(&grid, d)?;
            if !(dt < bound) {
                return Err(ModelError::Unstable {
                    solver: "transport",
                    dt: dt.to_f64_lossy(),
                    bound: bound.to_f64_lossy(),
                });
            }
        }
        Ok(Self {
            grid,
            d,
            exchange_ratio: (S::one() - eps) / eps,
            source,
            dt,
            next_e: vec![S::zero(); grid.len()],
            next_re: vec![S::zero(); grid.len()],
        })
    }

    /// Solver with the Dirichlet source C2 and the parameters' D and ε.
    pub fn from_params(grid: Grid2D<S>, params: &TissueParams<S>, dt: S) -> ModelResult<Self> {
        Self::new(
            grid,
            params.d,
            params.eps,
            dt,
            SourceBoundary::Dirichlet(params.c2),
        )
    }

    pub fn grid(&self) -> &Grid2D<S> {
        &self.grid
    }

    pub fn dt(&self) -> S {
        self.dt
    }

    /// Advances one step of the configured length.
    pub fn step(&mut self, state: &mut TransportState<S>, mu: S) -> ModelResult<()> {
        self.step_by(state, mu, self.dt)
    }

    /// Advances one step of length `dt ≤ self.dt`.
    pub fn step_by(&mut self, state: &mut TransportState<S>, mu: S, dt: S) -> ModelResult<()> {
        if !(mu >= S::zero()) {
            return Err(ModelError::OutOfRange {
                name: "mu",
                value: mu.to_f64_lossy(),
                expected: "mu >= 0",
            });
        }
        if !(dt > S::zero() && dt <= self.dt) {
            return Err(ModelError::Unstable {
                solver: "transport",
                dt: dt.to_f64_lossy(),
                bound: self.dt.to_f64_lossy(),
            });
        }
        state.c_e.check(&self.grid, "C_E")?;
        state.c_re.check(&self.grid, "C_RE")?;

        let m1 = self.grid.m1();
        let m2 = self.grid.m2();
        let a = self.d * dt / (self.grid.dx() * self.grid.dx());
        let c = self.d * dt / (self.grid.dy() * self.grid.dy());
        let uptake = mu * dt;
        let loss = self.exchange_ratio * uptake;

        let ce = state.c_e.as_slice();
        let cre = state.c_re.as_slice();
        diffuse_reflect(ce, &mut self.next_e, m1, m2, a, c, S::zero());
        for (k, (ne, nre)) in self
            .next_e
            .iter_mut()
            .zip(self.next_re.iter_mut())
            .enumerate()
        {
            let gap = ce[k] - cre[k];
            *ne = *ne - loss * gap;
            *nre = cre[k] + uptake * gap;
        }
        if let SourceBoundary::Dirichlet(c2) = self.source {
            for j in 0..m2 {
                self.next_e[j * m1] = c2;
            }
        }
        state.c_e.as_mut_slice().swap_with_slice(&mut self.next_e);
        state.c_re.as_mut_slice().swap_with_slice(&mut self.next_re);
        state.steps += 1;
        Ok(())
    }
}

/// One transport step as a pure function of the previous state.
pub fn transport_step<S: Real>(
    state: &TransportState<S>,
    mu: S,
    dt: S,
    grid: &Grid2D<S>,
    params: &TissueParams<S>,
) -> ModelResult<TransportState<S>> {
    let mut solver = TransportSolver::from_params(*grid, params, dt)?;
    let mut next = state.clone();
    solver.step(&mut next, mu)?;
    next.t = next.t + dt;
    next.t_since_pulse = next.t_since_pulse + dt;
    Ok(next)
}

/// Runs one inter-pulse rest phase of length `duration`.
///
/// μ is re-evaluated from `mtc` at the start of every step using the time
/// since the pulse ended. `observer` is called after every step with the
/// number of steps completed in this phase.
pub fn run_rest_phase<S: Real>(
    state: &mut TransportState<S>,
    mtc: &MtcModel<S>,
    duration: S,
    solver: &mut TransportSolver<S>,
    params: &TissueParams<S>,
    mut observer: impl FnMut(&TransportState<S>, u64),
) -> ModelResult<()> {
    let plan = StepPlan::new(duration, solver.dt());
    let start = state.t;
    state.t_since_pulse = S::zero();
    for k in 0..plan.steps {
        let mu = mtc.rate(state.t_since_pulse, params);
        solver.step_by(state, mu, plan.step_len(k))?;
        let elapsed = plan.time_after(k + 1);
        state.t_since_pulse = elapsed;
        state.t = start + elapsed;
        observer(state, k + 1);
    }
    Ok(())
}
