//! Closed-form electroporation physics: potential, field, transmembrane
//! potential, pore density and the mass-transfer coefficient.

use crate::error::{ModelError, ModelResult};
use crate::params::{TissueParams, MM2_PER_M2};
use crate::scalar::Real;

/// Largest |V_m| accepted by the pore-density kernels, V.
pub const MAX_TRANSMEMBRANE_V: f64 = 1.5;

/// Membrane area fraction occupied by pores in the reference dual-porosity MTC.
pub const REFERENCE_PORE_FRACTION: f64 = 3.4e-8;
/// Membrane thickness in the reference dual-porosity MTC, mm.
pub const REFERENCE_MEMBRANE_THICKNESS_MM: f64 = 5.0e-6;

/// Potential φ(x) of the parallel-plate configuration, V.
pub fn potential<S: Real>(x: S, phi0: S, phi_l: S, l: S) -> S {
    (phi_l - phi0) / l * x + phi0
}

/// Magnitude of the uniform field between the electrodes, V/mm.
pub fn uniform_electric_field<S: Real>(phi0: S, phi_l: S, l: S) -> ModelResult<S> {
    if !(l > S::zero()) {
        return Err(ModelError::NonPositive {
            name: "L",
            value: l.to_f64_lossy(),
        });
    }
    Ok((phi0 - phi_l).abs() / l)
}

/// Induced transmembrane potential (V) of a spherical cell of radius `r_c` (mm)
/// in a field `e` (V/mm), at polar angle `psi` from the field direction.
pub fn transmembrane_potential<S: Real>(e: S, r_c: S, psi: S) -> S {
    S::lit(1.5) * e * r_c * psi.cos()
}

/// Natural logarithm of the pore-creation factor A = exp((V_m/V_ep)²).
fn log_creation_factor<S: Real>(v_m: S, params: &TissueParams<S>) -> ModelResult<S> {
    if !(v_m.abs() <= S::lit(MAX_TRANSMEMBRANE_V)) {
        return Err(ModelError::TransmembraneOverflow {
            v_m: v_m.to_f64_lossy(),
            limit: MAX_TRANSMEMBRANE_V,
        });
    }
    let ratio = v_m / params.v_ep;
    Ok(ratio * ratio)
}

/// Closed-form pore density N(t) in m⁻² for a constant transmembrane
/// potential, starting from N(0) = 0.
///
/// A^q is evaluated in log space and 1 − exp(−x) through `exp_m1`, because
/// for supra-threshold potentials the relaxation argument x is ~1e-12.
pub fn pore_density_analytic<S: Real>(t: S, v_m: S, params: &TissueParams<S>) -> ModelResult<S> {
    if !(t >= S::zero()) {
        return Err(ModelError::OutOfRange {
            name: "t",
            value: t.to_f64_lossy(),
            expected: "t >= 0",
        });
    }
    let log_a = log_creation_factor(v_m, params)?;
    let saturation = params.n0 * (params.q * log_a).exp();
    // α t / (N₀ A^{q−1})
    let x = params.alpha * t / params.n0 * ((S::one() - params.q) * log_a).exp();
    Ok(saturation * -(-x).exp_m1())
}

/// Integrates dN/dt = αA[1 − (N/N₀)A^{−q}] from N(0) = 0 with classical RK4.
///
/// The step is shrunk so that a whole number of steps lands on `t_end`.
pub fn pore_density_ode<S: Real>(
    t_end: S,
    v_m: S,
    params: &TissueParams<S>,
    dt: S,
) -> ModelResult<S> {
    if t_end == S::zero() {
        return Ok(S::zero());
    }
    if !(t_end > S::zero()) {
        return Err(ModelError::OutOfRange {
            name: "t_end",
            value: t_end.to_f64_lossy(),
            expected: "t_end >= 0",
        });
    }
    if !(dt > S::zero()) || dt >= t_end {
        return Err(ModelError::StepExceedsHorizon {
            dt: dt.to_f64_lossy(),
            t_end: t_end.to_f64_lossy(),
        });
    }
    let log_a = log_creation_factor(v_m, params)?;
    let rate = params.alpha * log_a.exp();
    let inv_saturation = (-params.q * log_a).exp() / params.n0;
    let rhs = |n: S| rate * (S::one() - n * inv_saturation);

    let steps = (t_end / dt).ceil().to_u64().unwrap_or(u64::MAX).max(1);
    let h = t_end / S::from_count(steps);
    let half = h / S::lit(2.0);
    let sixth = h / S::lit(6.0);
    let two = S::lit(2.0);
    let mut n = S::zero();
    for _ in 0..steps {
        let k1 = rhs(n);
        let k2 = rhs(n + half * k1);
        let k3 = rhs(n + half * k2);
        let k4 = rhs(n + h * k3);
        n = n + sixth * (k1 + two * k2 + two * k3 + k4);
    }
    Ok(n)
}

/// Pore density at the pole (ψ = 0) at the end of a pulse of length `t_ep`
/// in a field `e` (V/mm).
pub fn pole_pore_density<S: Real>(e: S, t_ep: S, params: &TissueParams<S>) -> ModelResult<S> {
    let v_m = transmembrane_potential(e, params.r_c, S::zero());
    pore_density_analytic(t_ep, v_m, params)
}

/// Total open pore area of one cell (mm²) a time `t` after the pulse, given
/// the end-of-pulse pore density `n_ep` in m⁻².
///
/// The pore count is the density times the spherical membrane area 4πr_c².
pub fn pore_area<S: Real>(t: S, n_ep: S, params: &TissueParams<S>) -> S {
    let pi = S::PI();
    let four = S::lit(4.0);
    let pore_count = n_ep / S::lit(MM2_PER_M2) * four * pi * params.r_c * params.r_c;
    pi * params.r_p * params.r_p * pore_count * (-t / params.tau).exp()
}

/// Mass-transfer coefficient μ (s⁻¹) a time `t_since_pulse` after a pulse
/// that left the pore density `n_ep` (m⁻²).
pub fn mass_transfer_coefficient<S: Real>(
    t_since_pulse: S,
    n_ep: S,
    params: &TissueParams<S>,
) -> S {
    let pi = S::PI();
    let geometric =
        S::lit(4.0) * pi * pi * params.r_p * params.r_p * params.r_c * params.r_c / params.v0();
    geometric * params.p * (n_ep / S::lit(MM2_PER_M2)) * (-t_since_pulse / params.tau).exp()
}

/// Reference dual-porosity MTC 3·D·f_p/(d_m·r_c)·exp(−t/τ), s⁻¹.
pub fn reference_mtc<S: Real>(t: S, params: &TissueParams<S>) -> S {
    reference_mtc_with(
        t,
        params,
        S::lit(REFERENCE_PORE_FRACTION),
        S::lit(REFERENCE_MEMBRANE_THICKNESS_MM),
    )
}

/// [`reference_mtc`] with explicit pore fraction and membrane thickness (mm).
pub fn reference_mtc_with<S: Real>(
    t: S,
    params: &TissueParams<S>,
    pore_fraction: S,
    membrane_thickness: S,
) -> S {
    S::lit(3.0) * params.d * pore_fraction / (membrane_thickness * params.r_c)
        * (-t / params.tau).exp()
}
