//! Learning the map from 3D shear-wave-velocity volumes to three-component
//! surface ground-motion movies with a U-shaped Fourier neural operator.
//!
//! The crate covers the whole chain:
//!
//! * [`geology`]: layered random media with von Kármán heterogeneity,
//! * [`wavesim`]: a staggered-grid elastic finite-difference solver that turns
//!   a geology into surface velocity records,
//! * [`operator`]: the U-shaped neural operator and its Fourier layers,
//! * [`training`]: normalization, MAE loss, Adam and the plateau schedule,
//! * [`metrics`]: MAE, PGV, time-frequency goodness-of-fit and spectra,
//! * [`container`]: the on-disk tensor format and dataset manifests.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the double-precision flavour used for training.

pub mod container;
pub mod error;
pub mod geology;
pub mod metrics;
pub mod operator;
pub mod rng;
pub mod scalar;
pub mod tensorcore;
pub mod training;
pub mod wavesim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = tensorcore::Tensor<f64>;
pub type Tensor32 = tensorcore::Tensor<f32>;
pub type Tape64 = tensorcore::Tape<f64>;
pub type GeologyField64 = geology::GeologyField<f64>;
pub type SurfaceRecord64 = wavesim::SurfaceRecord<f64>;
pub type UnoModel64 = operator::UnoModel<f64>;
pub type Adam64 = training::Adam<f64>;
