//! Beamspace channel tracking for hybrid mmWave links with reservoir
//! forecasters.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below name the common concrete instantiations.

pub mod channel;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod reservoir;
pub mod scalar;
pub mod tracking;
pub mod transceiver;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Beamspace = channel::BeamspaceChannel<f64>;
pub type Beamspace32 = channel::BeamspaceChannel<f32>;
pub type MotionState = channel::MotionFeatureState<f64>;
pub type MotionState32 = channel::MotionFeatureState<f32>;
pub type Reservoir = reservoir::ReservoirModel<f64>;
pub type Reservoir32 = reservoir::ReservoirModel<f32>;
pub type Ensemble = ensemble::EnsembleModel<f64>;
pub type Ensemble32 = ensemble::EnsembleModel<f32>;
pub type Dataset = tracking::TrackingDataset<f64>;
pub type Dataset32 = tracking::TrackingDataset<f32>;
