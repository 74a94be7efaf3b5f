//! Simulation and design tools for photon-mediated entanglement between a
//! cavity-coupled donor and a trapped ion.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the tools use.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod optimizer;
pub mod photonics;
pub mod protocol;
pub mod pulse;
pub mod scalar;
pub mod scenario;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Pulse = pulse::PulseShape<f64>;
pub type Donor = dynamics::DonorParams<f64>;
pub type Ion = dynamics::IonParams<f64>;
pub type Grid = dynamics::TimeGrid<f64>;
pub type Photon = photonics::PhotonWavefunction<f64>;
pub type Protocol = protocol::ProtocolParams<f64>;
pub type Cavity = cavity::CavityDesign<f64>;
pub type Optimization = optimizer::OptimizationSpec<f64>;
pub type Scenario = scenario::Scenario;
