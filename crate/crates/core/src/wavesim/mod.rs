//! Elastic forward modelling: moment-tensor source, finite-difference solver
//! and surface recording.

pub mod record;
pub mod solver;
pub mod source;

pub use record::{run_simulation, SurfaceRecord};
pub use solver::{PointSource, SimConfig, Solver, WavefieldState};
pub use source::{moment_tensor_from_angles, source_time_derivative, source_time_function, SourceSpec};
