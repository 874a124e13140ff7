//! Physical, electrical and protocol parameters.
//!
//! Transport quantities use millimetres, seconds and molar concentrations.
//! Pore densities and the thermal constants are kept in SI units as tabulated;
//! the conversions into the millimetre system happen only in the accessor
//! methods below, so every solver sees the same converted values.

use crate::error::{require_positive, ModelError, ModelResult};
use crate::scalar::Real;

/// Square metres per square millimetre.
pub const MM2_PER_M2: f64 = 1.0e6;
/// Metres per millimetre.
pub const M_PER_MM: f64 = 1.0e-3;

/// Largest admissible applied field strength in V/mm.
pub const MAX_FIELD_V_PER_MM: f64 = 28.0;
/// Temperature at which cell damage sets in (42 °C).
pub const DAMAGE_TEMPERATURE_K: f64 = 315.15;
/// Intracellular concentration regarded as a therapeutic dose (M).
pub const DOSE_THRESHOLD_M: f64 = 0.025;

/// Tissue, membrane and drug properties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TissueParams<S> {
    /// Electrical conductivity, S/m.
    pub sigma: S,
    /// Cell radius, mm.
    pub r_c: S,
    /// Pore creation coefficient, m⁻² s⁻¹.
    pub alpha: S,
    /// Characteristic electroporation voltage, V.
    pub v_ep: S,
    /// Equilibrium pore density at zero transmembrane potential, m⁻².
    pub n0: S,
    /// Electroporation constant (dimensionless, > 1).
    pub q: S,
    /// Effective extracellular diffusion coefficient, mm² s⁻¹.
    pub d: S,
    /// Pore radius, mm.
    pub r_p: S,
    /// Porosity: extracellular volume fraction.
    pub eps: S,
    /// Membrane permeability of the drug, mm s⁻¹.
    pub p: S,
    /// Tissue density, kg m⁻³.
    pub rho: S,
    /// Specific heat, J kg⁻¹ K⁻¹.
    pub c: S,
    /// Thermal conductivity, W m⁻¹ K⁻¹.
    pub k: S,
    /// Heat transfer coefficient at the tissue surface, W m⁻² K⁻¹.
    pub h: S,
    /// Body temperature, K.
    pub t_b: S,
    /// Pore resealing time constant, s.
    pub tau: S,
    /// Side length of the square tissue, mm.
    pub l: S,
    /// Drug concentration held at the x = 0 face, M.
    pub c2: S,
}

impl<S: Real> Default for TissueParams<S> {
    fn default() -> Self {
        Self {
            sigma: S::lit(0.241),
            r_c: S::lit(0.025),
            alpha: S::lit(1.0e9),
            v_ep: S::lit(0.258),
            n0: S::lit(1.5e9),
            q: S::lit(2.46),
            d: S::lit(1.0e-4),
            r_p: S::lit(0.8e-6),
            eps: S::lit(0.18),
            p: S::lit(5.0e-4),
            rho: S::lit(1060.0),
            c: S::lit(3600.0),
            k: S::lit(0.502),
            h: S::lit(50.0),
            t_b: S::lit(310.15),
            tau: S::lit(600.0),
            l: S::lit(1.0),
            c2: S::lit(1.0),
        }
    }
}

impl<S: Real> TissueParams<S> {
    /// Checks every invariant and returns the parameters unchanged.
    pub fn validated(self) -> ModelResult<Self> {
        let positive = [
            ("sigma", self.sigma),
            ("r_c", self.r_c),
            ("alpha", self.alpha),
            ("V_ep", self.v_ep),
            ("N0", self.n0),
            ("D", self.d),
            ("R_P", self.r_p),
            ("P", self.p),
            ("rho", self.rho),
            ("c", self.c),
            ("k", self.k),
            ("h", self.h),
            ("T_b", self.t_b),
            ("tau", self.tau),
            ("L", self.l),
            ("C2", self.c2),
        ];
        for (name, value) in positive {
            require_positive(name, value.to_f64_lossy())?;
        }
        let eps = self.eps.to_f64_lossy();
        if !(eps > 0.0 && eps < 1.0) {
            return Err(ModelError::OutOfRange {
                name: "eps",
                value: eps,
                expected: "0 < eps < 1",
            });
        }
        let q = self.q.to_f64_lossy();
        if !(q > 1.0 && q.is_finite()) {
            return Err(ModelError::OutOfRange {
                name: "q",
                value: q,
                expected: "q > 1",
            });
        }
        Ok(self)
    }

    /// Volume of the cube circumscribing one cell, mm³.
    pub fn v0(&self) -> S {
        let side = self.r_c + self.r_c;
        side * side * side
    }

    /// Equilibrium pore density converted to mm⁻².
    pub fn n0_per_mm2(&self) -> S {
        self.n0 / S::lit(MM2_PER_M2)
    }

    /// Exchange factor (1 − ε)/ε coupling the two compartments.
    pub fn exchange_ratio(&self) -> S {
        (S::one() - self.eps) / self.eps
    }

    /// Volumetric heat capacity ρc, J m⁻³ K⁻¹.
    pub fn heat_capacity(&self) -> S {
        self.rho * self.c
    }

    /// Thermal diffusivity k/(ρc) in mm² s⁻¹.
    pub fn thermal_diffusivity(&self) -> S {
        self.k / self.heat_capacity() * S::lit(MM2_PER_M2)
    }

    /// Robin coefficient h/k in mm⁻¹.
    pub fn robin_coefficient(&self) -> S {
        self.h / self.k * S::lit(M_PER_MM)
    }
}

/// Electrode potentials and pulse timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseProtocol<S> {
    /// Potential at the x = 0 electrode, V.
    pub phi0: S,
    /// Potential at the x = L electrode, V.
    pub phi_l: S,
    /// Pulse length (ON time), s.
    pub t_ep: S,
    /// Rest time between pulses (OFF time), s.
    pub t_m: S,
    /// Number of pulses.
    pub pulse_count: u32,
}

impl<S: Real> Default for PulseProtocol<S> {
    fn default() -> Self {
        Self {
            phi0: S::lit(28.0),
            phi_l: S::zero(),
            t_ep: S::lit(0.08),
            t_m: S::lit(600.0),
            pulse_count: 10,
        }
    }
}

impl<S: Real> PulseProtocol<S> {
    /// Field strength (φ₀ − φ_L)/L in V/mm.
    pub fn field_strength(&self, l: S) -> ModelResult<S> {
        crate::physics::uniform_electric_field(self.phi0, self.phi_l, l)
    }

    /// Checks the protocol invariants. With `enforce_field_limit` the field
    /// strength may not exceed [`MAX_FIELD_V_PER_MM`].
    pub fn validated(self, l: S, enforce_field_limit: bool) -> ModelResult<Self> {
        if self.phi0 < self.phi_l {
            return Err(ModelError::OutOfRange {
                name: "phi0",
                value: self.phi0.to_f64_lossy(),
                expected: "phi0 >= phiL",
            });
        }
        require_positive("t_ep", self.t_ep.to_f64_lossy())?;
        require_positive("t_M", self.t_m.to_f64_lossy())?;
        if self.pulse_count == 0 {
            return Err(ModelError::OutOfRange {
                name: "PN",
                value: 0.0,
                expected: "PN >= 1",
            });
        }
        let e = self.field_strength(l)?;
        if enforce_field_limit && e > S::lit(MAX_FIELD_V_PER_MM) {
            return Err(ModelError::OutOfRange {
                name: "phi0",
                value: e.to_f64_lossy(),
                expected: "field strength (phi0 - phiL)/L <= 28 V/mm",
            });
        }
        Ok(self)
    }
}
