//! Dense tensors, multi-dimensional FFTs and reverse-mode differentiation.

pub mod fft;
pub mod gradcheck;
pub mod tape;
pub mod tensor;

pub use fft::{fft3, ifft3, resample3};
pub use gradcheck::{grad_check, grad_check_indices, GradCheckReport};
pub use tape::{DiffTensor, Gradients, Operation, Tape};
pub use tensor::{ComplexTensor, Tensor};
