use std::fmt::{Debug, Display};

use num_traits::Float;

/// Element type for tensors: f64 is the test default, f32 the training
/// default.
pub trait Scalar:
    Float + num_traits::NumAssign + Debug + Display + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    /// Gauss error function, used by the exact GeLU form.
    fn erf(self) -> Self;
    /// Central-difference step: cube root of machine epsilon.
    fn fd_step() -> Self;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn erf(self) -> Self {
        statrs::function::erf::erf(self)
    }
    fn fd_step() -> Self {
        f64::EPSILON.cbrt()
    }
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn erf(self) -> Self {
        statrs::function::erf::erf(self as f64) as f32
    }
    fn fd_step() -> Self {
        f32::EPSILON.cbrt()
    }
}
