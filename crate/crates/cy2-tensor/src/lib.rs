//! Minimal dense-tensor engine with tape-based reverse-mode automatic
//! differentiation.
//!
//! Tensors are immutable once recorded on a tape; gradients accumulate on
//! differentiable leaves during the single allowed `backward` pass. There is
//! no broadcasting beyond trailing-axis bias addition: all other shape
//! mismatches are errors by design.

pub mod error;
pub mod gradcheck;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use error::TensorError;
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::{read_cy2t, write_cy2t, Tensor};
