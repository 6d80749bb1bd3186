//! Floating-point abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Real scalar the crate is generic over: `f32` or `f64`.
///
/// Training and every tolerance in the test suite assume `f64`; `f32` is
/// supported for inference, simulation and storage.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FftNum
    + Default
    + Display
    + Debug
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count or index.
    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Dtype tag used by the binary tensor format.
    const DTYPE_CODE: u8;
}

impl Scalar for f32 {
    const DTYPE_CODE: u8 = 1;
}

impl Scalar for f64 {
    const DTYPE_CODE: u8 = 2;
}
