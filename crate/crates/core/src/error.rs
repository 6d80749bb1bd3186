use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the library.
#[derive(Debug)]
pub enum Error {
    /// Two operands or an operand and a contract disagree on shape.
    ShapeMismatch { context: &'static str, expected: Vec<usize>, got: Vec<usize> },
    /// An axis index does not exist for the tensor rank.
    AxisOutOfRange { axis: usize, rank: usize },
    /// A transform axis or grid has zero (or otherwise unusable) extent.
    DegenerateExtent { context: &'static str, extents: Vec<usize> },
    /// Inverse transform asked for a real result from a spectrum that is not Hermitian.
    NotConjugateSymmetric { residue: f64 },
    /// Retained Fourier modes do not fit the resolution they are used at.
    ModeOverflow { modes: [usize; 3], resolution: [usize; 3] },
    /// A configuration value violates its documented range.
    InvalidConfig(String),
    /// Non-finite value encountered where the contract forbids it.
    NonFinite { context: String },
    /// Backward requested on a root that is not a scalar.
    NonScalarRoot { shape: Vec<usize> },
    /// The tape already ran its backward pass.
    TapeConsumed,
    /// Time stepping diverged.
    BlowUp { step: usize, time_s: f64 },
    /// Standard deviation of a normalization set is zero.
    ZeroVariance,
    /// The point is not inside the simulated domain.
    OutsideDomain { what: &'static str, position: [f64; 3] },
    /// Malformed or incompatible on-disk container.
    Format(String),
    Io(io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { context, expected, got } => {
                write!(f, "{context}: shape mismatch, expected {expected:?}, got {got:?}")
            }
            Error::AxisOutOfRange { axis, rank } => {
                write!(f, "axis {axis} out of range for rank {rank}")
            }
            Error::DegenerateExtent { context, extents } => {
                write!(f, "{context}: degenerate extents {extents:?}")
            }
            Error::NotConjugateSymmetric { residue } => write!(
                f,
                "spectrum is not conjugate symmetric (relative imaginary residue {residue:.3e})"
            ),
            Error::ModeOverflow { modes, resolution } => {
                write!(f, "modes {modes:?} do not fit resolution {resolution:?}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::NonScalarRoot { shape } => {
                write!(f, "backward root must be a scalar, got shape {shape:?}")
            }
            Error::TapeConsumed => write!(f, "tape already consumed by a backward pass"),
            Error::BlowUp { step, time_s } => {
                write!(f, "wavefield blew up at step {step} (t = {time_s:.4} s)")
            }
            Error::ZeroVariance => write!(f, "normalization statistics have zero variance"),
            Error::OutsideDomain { what, position } => {
                write!(f, "{what} at {position:?} lies outside the domain")
            }
            Error::Format(msg) => write!(f, "container format error: {msg}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
