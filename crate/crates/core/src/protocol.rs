//! Multi-pulse experiment orchestration.
//!
//! Each cycle applies one pulse (pores form, tissue heats) followed by a rest
//! phase in which drug crosses the resealing membranes while the tissue cools.
//! Transport and cooling run on independent clocks and step sizes during the
//! rest phase and are only synchronised at phase boundaries and sample
//! instants.

use rayon::prelude::*;
use thiserror::Error;

use crate::error::ModelError;
use crate::grid::{Grid2D, ScalarField};
use crate::params::{PulseProtocol, TissueParams, DAMAGE_TEMPERATURE_K, DOSE_THRESHOLD_M};
use crate::physics::{pole_pore_density, REFERENCE_MEMBRANE_THICKNESS_MM, REFERENCE_PORE_FRACTION};
use crate::scalar::Real;
use crate::stencil::StepPlan;
use crate::thermal::{
    run_cooling, run_pulse_heating, thermal_stability_dt, ThermalSolver, ThermalState,
};
use crate::transport::{
    run_rest_phase, transport_stability_dt, MtcModel, TransportSolver, TransportState,
};

/// Which mass-transfer coefficient drives the rest phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtcSource {
    /// Pore-area MTC from the end-of-pulse pore density.
    PoreResealing,
    /// Dual-porosity reference MTC with the same resealing decay.
    Reference,
    /// No electroporation: pure extracellular diffusion.
    Zero,
}

impl MtcSource {
    pub fn name(self) -> &'static str {
        match self {
            MtcSource::PoreResealing => "pore",
            MtcSource::Reference => "reference",
            MtcSource::Zero => "zero",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "pore" => Some(MtcSource::PoreResealing),
            "reference" => Some(MtcSource::Reference),
            "zero" => Some(MtcSource::Zero),
            _ => None,
        }
    }
}

/// Reaction to the tissue reaching the damage temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SafetyMode {
    /// Abort the run, returning the partial result.
    Strict,
    /// Keep going and report the verdict.
    ReportOnly,
}

impl SafetyMode {
    pub fn name(self) -> &'static str {
        match self {
            SafetyMode::Strict => "strict",
            SafetyMode::ReportOnly => "report",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "strict" => Some(SafetyMode::Strict),
            "report" => Some(SafetyMode::ReportOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe<S> {
    pub x: S,
    pub y: S,
}

/// Time steps of the three integrators, s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes<S> {
    pub transport: S,
    pub heating: S,
    pub cooling: S,
}

impl<S: Real> Default for StepSizes<S> {
    fn default() -> Self {
        Self {
            transport: S::lit(0.2),
            heating: S::lit(2.0e-5),
            cooling: S::lit(1.0e-4),
        }
    }
}

/// Constants of the dual-porosity reference MTC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceMtc<S> {
    pub pore_fraction: S,
    /// Membrane thickness, mm.
    pub membrane_thickness: S,
}

impl<S: Real> Default for ReferenceMtc<S> {
    fn default() -> Self {
        Self {
            pore_fraction: S::lit(REFERENCE_PORE_FRACTION),
            membrane_thickness: S::lit(REFERENCE_MEMBRANE_THICKNESS_MM),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings<S> {
    /// Probe sampling interval within each rest phase, s.
    pub cadence: S,
    /// Global times at which full fields are captured, s.
    pub snapshot_times: Vec<S>,
    /// Row (y, mm) along which first-uptake times are tracked.
    pub initiation_y: S,
    /// Locations (x, mm) reported in the initiation table.
    pub initiation_x: Vec<S>,
    /// C_RE level that counts as uptake, M.
    pub initiation_floor: S,
}

impl<S: Real> Default for OutputSettings<S> {
    fn default() -> Self {
        Self {
            cadence: S::one(),
            snapshot_times: Vec::new(),
            initiation_y: S::lit(0.5),
            initiation_x: (1..=9).map(|k| S::lit(k as f64 / 10.0)).collect(),
            initiation_floor: S::lit(1.0e-300),
        }
    }
}

/// Everything that defines one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig<S> {
    pub params: TissueParams<S>,
    pub protocol: PulseProtocol<S>,
    pub grid: Grid2D<S>,
    pub probes: Vec<Probe<S>>,
    pub output: OutputSettings<S>,
    pub steps: StepSizes<S>,
    pub mtc_source: MtcSource,
    pub reference_mtc: ReferenceMtc<S>,
    pub safety: SafetyMode,
    pub enforce_field_limit: bool,
    /// Simulate temperature; when off no safety verdict is produced.
    pub thermal: bool,
}

impl<S: Real> Default for ScenarioConfig<S> {
    fn default() -> Self {
        let params = TissueParams::default();
        Self {
            grid: Grid2D::new(101, 101, params.l).expect("default grid"),
            params,
            protocol: PulseProtocol::default(),
            probes: [0.1, 0.5, 0.9]
                .iter()
                .map(|&x| Probe {
                    x: S::lit(x),
                    y: S::lit(0.5),
                })
                .collect(),
            output: OutputSettings::default(),
            steps: StepSizes::default(),
            mtc_source: MtcSource::PoreResealing,
            reference_mtc: ReferenceMtc::default(),
            safety: SafetyMode::Strict,
            enforce_field_limit: true,
            thermal: true,
        }
    }
}

/// Bounds on the transport and thermal steps for a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport<S> {
    pub transport_bound: S,
    pub thermal_bound: S,
    pub transport_ok: bool,
    pub heating_ok: bool,
    pub cooling_ok: bool,
}

impl<S: Real> StabilityReport<S> {
    pub fn all_ok(&self) -> bool {
        self.transport_ok && self.heating_ok && self.cooling_ok
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError<S: Real = f64> {
    #[error("invalid scenario: {0}")]
    Invalid(ModelError),
    #[error("stability violation: {0}")]
    Stability(ModelError),
    #[error("solver failure: {0}")]
    Solver(ModelError),
    #[error("tissue temperature reached the damage threshold (peak {peak_t} K); run aborted")]
    SafetyAbort {
        peak_t: f64,
        partial: Box<SimulationResult<S>>,
    },
}

impl<S: Real> From<ModelError> for ProtocolError<S> {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Unstable { .. } => ProtocolError::Stability(e),
            other => ProtocolError::Solver(other),
        }
    }
}

impl<S: Real> ScenarioConfig<S> {
    pub fn field_strength(&self) -> Result<S, ProtocolError<S>> {
        self.protocol
            .field_strength(self.params.l)
            .map_err(ProtocolError::Invalid)
    }

    pub fn stability(&self) -> Result<StabilityReport<S>, ProtocolError<S>> {
        let transport_bound =
            transport_stability_dt(&self.grid, self.params.d).map_err(ProtocolError::Invalid)?;
        let thermal_bound =
            thermal_stability_dt(&self.grid, &self.params).map_err(ProtocolError::Invalid)?;
        Ok(StabilityReport {
            transport_bound,
            thermal_bound,
            transport_ok: self.steps.transport > S::zero()
                && self.steps.transport < transport_bound,
            heating_ok: self.steps.heating > S::zero() && self.steps.heating < thermal_bound,
            cooling_ok: self.steps.cooling > S::zero() && self.steps.cooling < thermal_bound,
        })
    }

    /// Global time at the end of the last rest phase, s.
    pub fn end_time(&self) -> S {
        S::from_count(self.protocol.pulse_count as u64) * (self.protocol.t_ep + self.protocol.t_m)
    }

    /// Checks every invariant, including both stability bounds.
    pub fn validate(&self) -> Result<(), ProtocolError<S>> {
        self.check_inputs().map_err(ProtocolError::Invalid)?;
        self.check_stability()
    }

    /// Checks every invariant except the stability bounds.
    pub fn check_inputs(&self) -> Result<(), ModelError> {
        self.params.validated()?;
        self.protocol
            .validated(self.params.l, self.enforce_field_limit)?;
        let side_gap = (self.grid.side() - self.params.l).abs();
        if side_gap > S::lit(1e-12) * self.params.l {
            return Err(ModelError::GridMismatch(format!(
                "grid side {} differs from tissue side L = {}",
                self.grid.side(),
                self.params.l
            )));
        }
        for probe in &self.probes {
            if !self.grid.contains(probe.x, probe.y) {
                return Err(ModelError::OutOfRange {
                    name: "probe",
                    value: probe.x.max(probe.y).to_f64_lossy(),
                    expected: "probe inside [0, L] x [0, L]",
                });
            }
        }
        let out = &self.output;
        if !(out.cadence > S::zero()) {
            return Err(ModelError::NonPositive {
                name: "cadence",
                value: out.cadence.to_f64_lossy(),
            });
        }
        if !self.grid.contains(S::zero(), out.initiation_y) {
            return Err(ModelError::OutOfRange {
                name: "initiation_y",
                value: out.initiation_y.to_f64_lossy(),
                expected: "0 <= y <= L",
            });
        }
        for &x in &out.initiation_x {
            if !self.grid.contains(x, S::zero()) {
                return Err(ModelError::OutOfRange {
                    name: "initiation_x",
                    value: x.to_f64_lossy(),
                    expected: "0 <= x <= L",
                });
            }
        }
        if !(out.initiation_floor >= S::zero()) {
            return Err(ModelError::OutOfRange {
                name: "initiation_floor",
                value: out.initiation_floor.to_f64_lossy(),
                expected: "floor >= 0",
            });
        }
        let end = self.end_time();
        for &t in &out.snapshot_times {
            if !(t >= S::zero() && t <= end + S::lit(1e-9) * end) {
                return Err(ModelError::OutOfRange {
                    name: "snapshot_times",
                    value: t.to_f64_lossy(),
                    expected: "0 <= t <= PN (t_ep + t_M)",
                });
            }
        }
        for (name, v) in [
            ("pore_fraction", self.reference_mtc.pore_fraction),
            ("membrane_thickness", self.reference_mtc.membrane_thickness),
        ] {
            if !(v >= S::zero()) || (name == "membrane_thickness" && !(v > S::zero())) {
                return Err(ModelError::OutOfRange {
                    name,
                    value: v.to_f64_lossy(),
                    expected: "nonnegative fraction and positive thickness",
                });
            }
        }

        let field = self.protocol.field_strength(self.params.l)?;
        pole_pore_density(field, self.protocol.t_ep, &self.params)?;
        Ok(())
    }

    /// Checks the configured steps against both stability bounds.
    pub fn check_stability(&self) -> Result<(), ProtocolError<S>> {
        let report = self.stability()?;
        let check = |ok: bool, solver, dt: S, bound: S| {
            if ok {
                Ok(())
            } else {
                Err(ProtocolError::Stability(ModelError::Unstable {
                    solver,
                    dt: dt.to_f64_lossy(),
                    bound: bound.to_f64_lossy(),
                }))
            }
        };
        check(
            report.transport_ok,
            "transport",
            self.steps.transport,
            report.transport_bound,
        )?;
        if self.thermal {
            check(
                report.heating_ok,
                "heating",
                self.steps.heating,
                report.thermal_bound,
            )?;
            check(
                report.cooling_ok,
                "cooling",
                self.steps.cooling,
                report.thermal_bound,
            )?;
        }
        Ok(())
    }

    fn mtc_model(&self, n_ep: S) -> MtcModel<S> {
        match self.mtc_source {
            MtcSource::PoreResealing => MtcModel::PoreResealing { n_ep },
            MtcSource::Reference => MtcModel::Reference {
                pore_fraction: self.reference_mtc.pore_fraction,
                membrane_thickness: self.reference_mtc.membrane_thickness,
            },
            MtcSource::Zero => MtcModel::Zero,
        }
    }
}

/// One row of the probe time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample<S> {
    /// Global time, s.
    pub time: S,
    pub probe_id: usize,
    pub c_e: S,
    pub c_re: S,
    pub temperature: Option<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    CE,
    CRE,
    T,
}

impl Quantity {
    pub fn label(self) -> &'static str {
        match self {
            Quantity::CE => "C_E",
            Quantity::CRE => "C_RE",
            Quantity::T => "T",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<S> {
    pub quantity: Quantity,
    /// Time asked for in the configuration, s.
    pub requested: S,
    /// Sample instant actually captured, s.
    pub time: S,
    pub field: ScalarField<S>,
}

/// First transport step at which C_RE exceeded the floor, per grid column,
/// along one grid row.
#[derive(Debug, Clone, PartialEq)]
pub struct InitiationRecord<S> {
    pub row: usize,
    pub floor: S,
    pub dt: S,
    /// `(global transport step, C_RE value)` per column.
    pub first: Vec<Option<(u64, S)>>,
}

impl<S: Real> InitiationRecord<S> {
    fn new(grid: &Grid2D<S>, y: S, floor: S, dt: S) -> Self {
        Self {
            row: grid.nearest_row(y),
            floor,
            dt,
            first: vec![None; grid.m1()],
        }
    }

    fn observe(&mut self, c_re: &ScalarField<S>, step: u64) {
        let row = c_re.row(self.row);
        for (slot, &v) in self.first.iter_mut().zip(row) {
            if slot.is_none() && v > self.floor {
                *slot = Some((step, v));
            }
        }
    }
}

/// One row of the initiation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitiationEntry<S> {
    pub x: S,
    pub y: S,
    /// Time after first uptake at the source face (x = 0), s.
    pub time: Option<S>,
    pub c_re: Option<S>,
}

/// End-of-run dose and bookkeeping metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary<S> {
    pub pulses_completed: u32,
    /// Total rest-phase (transport) time, s.
    pub transport_time: S,
    /// Total pulse-on time, s.
    pub heated_time: S,
    /// End-of-pulse pore density at the cell poles, m⁻².
    pub n_ep: S,
    /// MTC at the start of a rest phase, s⁻¹.
    pub mu_initial: S,
    pub mean_c_e: S,
    pub mean_c_re: S,
    /// Fraction of nodes with C_RE above the dose threshold.
    pub dose_fraction: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult<S> {
    pub probe_series: Vec<ProbeSample<S>>,
    pub snapshots: Vec<Snapshot<S>>,
    pub initiation: InitiationRecord<S>,
    pub initiation_table: Vec<InitiationEntry<S>>,
    /// Highest temperature reached anywhere, K (None when thermal is off).
    pub peak_t: Option<S>,
    /// Peak temperature of each pulse, K.
    pub pulse_peaks: Vec<S>,
    pub summary: Summary<S>,
    pub final_c_e: ScalarField<S>,
    pub final_c_re: ScalarField<S>,
    pub final_t: Option<ScalarField<S>>,
    /// Set when a strict safety check stopped the run early.
    pub aborted: bool,
}

impl<S: Real> SimulationResult<S> {
    /// `Some(peak_T < 315.15 K)`, or `None` when temperature was not simulated.
    pub fn safety_ok(&self) -> Option<bool> {
        self.peak_t.map(|p| p < S::lit(DAMAGE_TEMPERATURE_K))
    }

    /// Series of one probe.
    pub fn probe(&self, id: usize) -> impl Iterator<Item = &ProbeSample<S>> + '_ {
        self.probe_series.iter().filter(move |s| s.probe_id == id)
    }
}

/// First-uptake table at the given x locations along the tracked row.
///
/// Times are measured from the first uptake at the source column; locations
/// never reached are reported with `None`.
pub fn initiation_times<S: Real>(
    result: &SimulationResult<S>,
    grid: &Grid2D<S>,
    locations: &[S],
) -> Vec<InitiationEntry<S>> {
    let rec = &result.initiation;
    let y = grid.y(rec.row);
    let source = rec.first.first().copied().flatten();
    locations
        .iter()
        .map(|&x| {
            let hit = rec.first[grid.nearest_column(x)];
            match (source, hit) {
                (Some((k0, _)), Some((k, v))) => InitiationEntry {
                    x,
                    y,
                    time: Some(S::from_count(k - k0) * rec.dt),
                    c_re: Some(v),
                },
                _ => InitiationEntry {
                    x,
                    y,
                    time: None,
                    c_re: None,
                },
            }
        })
        .collect()
}

/// Rest-relative sample instants of one cycle: 0, cadence, 2·cadence, … ≤ t_M.
fn sample_instants<S: Real>(t_m: S, cadence: S) -> Vec<S> {
    let tol = S::lit(1e-9) * cadence;
    let mut out = Vec::new();
    let mut m = 0u64;
    loop {
        let s = S::from_count(m) * cadence;
        if s > t_m + tol {
            break;
        }
        out.push(s.min(t_m));
        m += 1;
    }
    out
}

/// Snapshot request resolved to a sample instant.
#[derive(Debug, Clone, Copy)]
struct SnapshotSlot<S> {
    request: usize,
    requested: S,
    cycle: u32,
    sample: usize,
    time: S,
}

fn resolve_snapshots<S: Real>(cfg: &ScenarioConfig<S>, instants: &[S]) -> Vec<SnapshotSlot<S>> {
    let period = cfg.protocol.t_ep + cfg.protocol.t_m;
    let tol = S::lit(1e-9) * period;
    let mut out = Vec::new();
    for (request, &r) in cfg.output.snapshot_times.iter().enumerate() {
        'search: for cycle in 0..cfg.protocol.pulse_count {
            let base = S::from_count(cycle as u64) * period + cfg.protocol.t_ep;
            for (sample, &s) in instants.iter().enumerate() {
                if base + s >= r - tol {
                    out.push(SnapshotSlot {
                        request,
                        requested: r,
                        cycle,
                        sample,
                        time: base + s,
                    });
                    break 'search;
                }
            }
        }
    }
    out
}

/// Values captured at one sample instant.
struct Captured<S> {
    per_probe: Vec<S>,
}

fn capture<S: Real>(field: &ScalarField<S>, grid: &Grid2D<S>, probes: &[Probe<S>]) -> Captured<S> {
    Captured {
        per_probe: probes
            .iter()
            .map(|p| field.sample(grid, p.x, p.y))
            .collect(),
    }
}

/// Accumulates outputs as the protocol advances.
struct Recorder<S> {
    probe_series: Vec<ProbeSample<S>>,
    snapshots: Vec<(usize, Snapshot<S>)>,
    pulse_peaks: Vec<S>,
    peak: Option<S>,
    heated_time: S,
    pulses_completed: u32,
}

/// Runs the full multi-pulse protocol.
pub fn run_protocol<S: Real>(
    cfg: &ScenarioConfig<S>,
) -> Result<SimulationResult<S>, ProtocolError<S>> {
    cfg.validate()?;
    let params = &cfg.params;
    let grid = cfg.grid;
    let field = cfg.field_strength()?;
    let n_ep =
        pole_pore_density(field, cfg.protocol.t_ep, params).map_err(ProtocolError::Invalid)?;
    let mtc = cfg.mtc_model(n_ep);

    let mut transport = TransportState::initial(&grid, params.c2);
    let mut transport_solver = TransportSolver::from_params(grid, params, cfg.steps.transport)?;
    let mut thermal = if cfg.thermal {
        Some((
            ThermalState::at_body_temperature(&grid, params),
            ThermalSolver::new(grid, params, field)?,
        ))
    } else {
        None
    };

    let instants = sample_instants(cfg.protocol.t_m, cfg.output.cadence);
    let snapshot_slots = resolve_snapshots(cfg, &instants);
    let transport_plan = StepPlan::new(cfg.protocol.t_m, cfg.steps.transport);
    let cooling_plan = StepPlan::new(cfg.protocol.t_m, cfg.steps.cooling);
    let transport_marks: Vec<u64> = instants
        .iter()
        .map(|&s| transport_plan.steps_to_reach(s))
        .collect();
    let cooling_marks: Vec<u64> = instants
        .iter()
        .map(|&s| cooling_plan.steps_to_reach(s))
        .collect();

    let mut initiation = InitiationRecord::new(
        &grid,
        cfg.output.initiation_y,
        cfg.output.initiation_floor,
        cfg.steps.transport,
    );
    let mut rec = Recorder {
        probe_series: Vec::new(),
        snapshots: Vec::new(),
        pulse_peaks: Vec::new(),
        peak: thermal.as_ref().map(|(s, _)| s.temperature.max()),
        heated_time: S::zero(),
        pulses_completed: 0,
    };
    let period = cfg.protocol.t_ep + cfg.protocol.t_m;
    let damage = S::lit(DAMAGE_TEMPERATURE_K);

    for cycle in 0..cfg.protocol.pulse_count {
        transport.pulse_index = cycle + 1;
        if let Some((state, solver)) = thermal.as_mut() {
            let report = run_pulse_heating(
                state,
                solver,
                cfg.protocol.t_ep,
                cfg.steps.heating,
                |_, _| {},
            )?;
            rec.pulse_peaks.push(report.peak);
            rec.peak = rec.peak.map(|p| p.max(report.peak));
        }
        rec.heated_time = rec.heated_time + cfg.protocol.t_ep;
        rec.pulses_completed = cycle + 1;

        if cfg.safety == SafetyMode::Strict && rec.peak.is_some_and(|p| p >= damage) {
            let result = finish(
                cfg,
                rec,
                initiation,
                &transport,
                thermal.as_ref().map(|t| &t.0),
                n_ep,
                true,
            );
            return Err(abort_error(result));
        }

        let slots: Vec<SnapshotSlot<S>> = snapshot_slots
            .iter()
            .copied()
            .filter(|s| s.cycle == cycle)
            .collect();
        let cycle_base = S::from_count(cycle as u64) * period + cfg.protocol.t_ep;
        let probes = &cfg.probes;

        // Cooling on its own clock; it never reads transport data.
        let cool_job = |state: &mut ThermalState<S>, solver: &mut ThermalSolver<S>| {
            let mut temps: Vec<Captured<S>> = Vec::with_capacity(instants.len());
            let mut shots: Vec<(usize, Snapshot<S>)> = Vec::new();
            let mut take = |field: &ScalarField<S>, m: usize, temps: &mut Vec<Captured<S>>| {
                temps.push(capture(field, &grid, probes));
                for slot in slots.iter().filter(|s| s.sample == m) {
                    shots.push((
                        slot.request,
                        Snapshot {
                            quantity: Quantity::T,
                            requested: slot.requested,
                            time: slot.time,
                            field: field.clone(),
                        },
                    ));
                }
            };
            let mut next = 0usize;
            while next < cooling_marks.len() && cooling_marks[next] == 0 {
                take(&state.temperature, next, &mut temps);
                next += 1;
            }
            let outcome = run_cooling(
                state,
                solver,
                cfg.protocol.t_m,
                cfg.steps.cooling,
                |s, k| {
                    while next < cooling_marks.len() && cooling_marks[next] == k {
                        take(&s.temperature, next, &mut temps);
                        next += 1;
                    }
                },
            );
            outcome.map(|_| (temps, shots))
        };

        let mut conc: Vec<(Captured<S>, Captured<S>)> = Vec::with_capacity(instants.len());
        let mut conc_shots: Vec<(usize, Snapshot<S>)> = Vec::new();
        let mut take_conc =
            |state: &TransportState<S>, m: usize, conc: &mut Vec<(Captured<S>, Captured<S>)>| {
                conc.push((
                    capture(&state.c_e, &grid, probes),
                    capture(&state.c_re, &grid, probes),
                ));
                for slot in slots.iter().filter(|s| s.sample == m) {
                    for (quantity, f) in [(Quantity::CE, &state.c_e), (Quantity::CRE, &state.c_re)]
                    {
                        conc_shots.push((
                            slot.request,
                            Snapshot {
                                quantity,
                                requested: slot.requested,
                                time: slot.time,
                                field: f.clone(),
                            },
                        ));
                    }
                }
            };

        let (transport_outcome, thermal_outcome) = std::thread::scope(|scope| {
            let handle = thermal
                .as_mut()
                .map(|(state, solver)| scope.spawn(move || cool_job(state, solver)));
            let mut next = 0usize;
            while next < transport_marks.len() && transport_marks[next] == 0 {
                take_conc(&transport, next, &mut conc);
                next += 1;
            }
            let outcome = run_rest_phase(
                &mut transport,
                &mtc,
                cfg.protocol.t_m,
                &mut transport_solver,
                params,
                |s, k| {
                    initiation.observe(&s.c_re, s.steps);
                    while next < transport_marks.len() && transport_marks[next] == k {
                        take_conc(s, next, &mut conc);
                        next += 1;
                    }
                },
            );
            let thermal_outcome = handle.map(|h| h.join().expect("cooling thread panicked"));
            (outcome, thermal_outcome)
        });
        transport_outcome?;
        let (temps, temp_shots) = match thermal_outcome {
            Some(r) => {
                let (t, s) = r?;
                (Some(t), s)
            }
            None => (None, Vec::new()),
        };

        for (m, (ce, cre)) in conc.iter().enumerate() {
            let time = cycle_base + instants[m];
            for (probe_id, _) in probes.iter().enumerate() {
                rec.probe_series.push(ProbeSample {
                    time,
                    probe_id,
                    c_e: ce.per_probe[probe_id],
                    c_re: cre.per_probe[probe_id],
                    temperature: temps.as_ref().map(|t| t[m].per_probe[probe_id]),
                });
            }
        }
        rec.snapshots.extend(conc_shots);
        rec.snapshots.extend(temp_shots);
        if let Some((state, _)) = thermal.as_ref() {
            // Cooling cannot exceed its initial maximum; the check guards the stepper.
            rec.peak = rec.peak.map(|p| p.max(state.temperature.max()));
        }
    }

    Ok(finish(
        cfg,
        rec,
        initiation,
        &transport,
        thermal.as_ref().map(|t| &t.0),
        n_ep,
        false,
    ))
}

fn finish<S: Real>(
    cfg: &ScenarioConfig<S>,
    mut rec: Recorder<S>,
    initiation: InitiationRecord<S>,
    transport: &TransportState<S>,
    thermal: Option<&ThermalState<S>>,
    n_ep: S,
    aborted: bool,
) -> SimulationResult<S> {
    // Snapshot order: by request, then C_E, C_RE, T.
    rec.snapshots
        .sort_by_key(|(request, s)| (*request, s.quantity as u8));
    let mut result = SimulationResult {
        probe_series: rec.probe_series,
        snapshots: rec.snapshots.into_iter().map(|(_, s)| s).collect(),
        initiation,
        initiation_table: Vec::new(),
        peak_t: rec.peak,
        pulse_peaks: rec.pulse_peaks,
        summary: Summary {
            pulses_completed: rec.pulses_completed,
            transport_time: transport.t,
            heated_time: rec.heated_time,
            n_ep,
            mu_initial: cfg.mtc_model(n_ep).rate(S::zero(), &cfg.params),
            mean_c_e: transport.c_e.mean(),
            mean_c_re: transport.c_re.mean(),
            dose_fraction: transport.c_re.fraction_above(S::lit(DOSE_THRESHOLD_M)),
        },
        final_c_e: transport.c_e.clone(),
        final_c_re: transport.c_re.clone(),
        final_t: thermal.map(|t| t.temperature.clone()),
        aborted,
    };
    result.initiation_table = initiation_times(&result, &cfg.grid, &cfg.output.initiation_x);
    result
}

fn abort_error<S: Real>(result: SimulationResult<S>) -> ProtocolError<S> {
    ProtocolError::SafetyAbort {
        peak_t: result.peak_t.map(|p| p.to_f64_lossy()).unwrap_or(f64::NAN),
        partial: Box::new(result),
    }
}

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Permeability,
    Diffusion,
    PulseLength,
    PulseCount,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Permeability => "P",
            SweepAxis::Diffusion => "D",
            SweepAxis::PulseLength => "t_ep",
            SweepAxis::PulseCount => "PN",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "P" => Some(SweepAxis::Permeability),
            "D" => Some(SweepAxis::Diffusion),
            "t_ep" => Some(SweepAxis::PulseLength),
            "PN" => Some(SweepAxis::PulseCount),
            _ => None,
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply<S: Real>(
        self,
        base: &ScenarioConfig<S>,
        value: S,
    ) -> Result<ScenarioConfig<S>, ProtocolError<S>> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Permeability => cfg.params.p = value,
            SweepAxis::Diffusion => cfg.params.d = value,
            SweepAxis::PulseLength => cfg.protocol.t_ep = value,
            SweepAxis::PulseCount => {
                let n = value.to_f64_lossy();
                if !(n >= 1.0 && n.fract() == 0.0 && n <= u32::MAX as f64) {
                    return Err(ProtocolError::Invalid(ModelError::OutOfRange {
                        name: "PN",
                        value: n,
                        expected: "positive integer",
                    }));
                }
                cfg.protocol.pulse_count = n as u32;
            }
        }
        Ok(cfg)
    }
}

/// Runs one independent scenario per value; results keep the input order and
/// a failing item does not stop the others.
pub fn sweep<S: Real>(
    base: &ScenarioConfig<S>,
    axis: SweepAxis,
    values: &[S],
) -> Vec<Result<SimulationResult<S>, ProtocolError<S>>> {
    values
        .par_iter()
        .map(|&v| axis.apply(base, v).and_then(|cfg| run_protocol(&cfg)))
        .collect()
}

/// C_RE disagreement between the two MTC models at one probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeDeviation<S> {
    pub probe_id: usize,
    pub max_abs: S,
    /// Largest |model − reference| / reference over samples with reference > 0.
    pub max_rel: S,
    pub final_abs: S,
    pub final_rel: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtcComparison<S> {
    pub pore: SimulationResult<S>,
    pub reference: SimulationResult<S>,
    pub deviations: Vec<ProbeDeviation<S>>,
}

/// Runs the scenario with the pore-area MTC and with the reference MTC.
pub fn compare_mtc<S: Real>(cfg: &ScenarioConfig<S>) -> Result<MtcComparison<S>, ProtocolError<S>> {
    let with = |source| ScenarioConfig {
        mtc_source: source,
        ..cfg.clone()
    };
    let (pore_cfg, ref_cfg) = (with(MtcSource::PoreResealing), with(MtcSource::Reference));
    let (pore, reference) = rayon::join(|| run_protocol(&pore_cfg), || run_protocol(&ref_cfg));
    let (pore, reference) = (pore?, reference?);
    let deviations = (0..cfg.probes.len())
        .map(|id| probe_deviation(id, &pore, &reference))
        .collect();
    Ok(MtcComparison {
        pore,
        reference,
        deviations,
    })
}

fn probe_deviation<S: Real>(
    id: usize,
    a: &SimulationResult<S>,
    b: &SimulationResult<S>,
) -> ProbeDeviation<S> {
    let mut max_abs = S::zero();
    let mut max_rel = S::zero();
    let mut last = (S::zero(), S::zero());
    for (x, y) in a.probe(id).zip(b.probe(id)) {
        let diff = (x.c_re - y.c_re).abs();
        max_abs = max_abs.max(diff);
        if y.c_re > S::zero() {
            max_rel = max_rel.max(diff / y.c_re);
        }
        last = (x.c_re, y.c_re);
    }
    let final_abs = (last.0 - last.1).abs();
    let final_rel = if last.1 > S::zero() {
        final_abs / last.1
    } else {
        S::zero()
    };
    ProbeDeviation {
        probe_id: id,
        max_abs,
        max_rel,
        final_abs,
        final_rel,
    }
}
