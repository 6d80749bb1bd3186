//! U-shaped Fourier neural operator: geology `V_S²` volume in, three-component
//! surface velocity movie out.
//!
//! The third grid axis is depth on input and is reinterpreted as time on
//! output; the decoder stretches it spectrally, no unit conversion happens
//! inside the network.

pub mod model;
pub mod schedule;
pub mod spectral;

pub use model::{parameter_layout, positional_encoding, UnoModel};
pub use schedule::{LayerPlan, UnoSchedule};
pub use spectral::{fourier_layer, fourier_layer_linear, resample, spectral_conv};
