//! Two-dimensional simulation of reversible tissue electroporation for drug
//! delivery.
//!
//! A square tissue slab sits between parallel-plate electrodes. Each pulse
//! opens membrane pores and heats the tissue; between pulses the drug diffuses
//! in from the x = 0 face and crosses into the cells while the pores reseal
//! and the tissue cools.
//!
//! The numerical core is generic over the scalar type ([`scalar::Real`], for
//! `f32` and `f64`); the aliases below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod grid;
pub mod params;
pub mod physics;
pub mod protocol;
pub mod scalar;
mod stencil;
pub mod thermal;
pub mod transport;
pub mod validate;

pub use error::{ModelError, ModelResult};
pub use scalar::Real;
pub use stencil::StepPlan;

pub type Grid = grid::Grid2D<f64>;
pub type Field = grid::ScalarField<f64>;
pub type Params = params::TissueParams<f64>;
pub type Protocol = params::PulseProtocol<f64>;
pub type Scenario = protocol::ScenarioConfig<f64>;
pub type Outcome = protocol::SimulationResult<f64>;
pub type RunError = protocol::ProtocolError<f64>;
pub type Transport = transport::TransportState<f64>;
pub type Thermal = thermal::ThermalState<f64>;
