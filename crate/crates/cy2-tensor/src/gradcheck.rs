//! Central finite-difference verification of analytic gradients. The check
//! only evaluates forward passes, so it stays independent of the backward
//! rules it validates.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Largest elementwise relative error between analytic and numeric
/// gradients, with a floor protecting near-zero entries.
pub fn max_relative_error<T: Scalar>(analytic: &Tensor<T>, numeric: &Tensor<T>, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data().iter())
        .map(|(&a, &n)| {
            let a = a.to_f64();
            let n = n.to_f64();
            (a - n).abs() / a.abs().max(n.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}

/// Central differences of a scalar-valued function at every element of
/// every input, with step h = cbrt(machine epsilon).
pub fn finite_difference_grads<T: Scalar>(
    f: &dyn Fn(&[Tensor<T>]) -> T,
    inputs: &[Tensor<T>],
) -> Vec<Tensor<T>> {
    let h = T::fd_step();
    let two_h = h + h;
    inputs
        .iter()
        .enumerate()
        .map(|(which, input)| {
            let mut grad = Tensor::zeros(input.shape());
            for i in 0..input.len() {
                let mut work: Vec<Tensor<T>> = inputs.to_vec();
                work[which].data_mut()[i] = input.data()[i] + h;
                let up = f(&work);
                work[which].data_mut()[i] = input.data()[i] - h;
                let down = f(&work);
                grad.data_mut()[i] = (up - down) / two_h;
            }
            grad
        })
        .collect()
}

/// Runs the finite-difference check for one scalar-valued expression:
/// `forward` must rebuild the expression on a fresh tape from the given
/// inputs. Returns the worst relative error across all inputs.
pub fn check_gradients<T: Scalar>(
    forward: &dyn Fn(&[Tensor<T>]) -> (T, Vec<Tensor<T>>),
    inputs: &[Tensor<T>],
    floor: f64,
) -> f64 {
    let (_, analytic) = forward(inputs);
    let value_only = |xs: &[Tensor<T>]| forward(xs).0;
    let numeric = finite_difference_grads(&value_only, inputs);
    assert_eq!(analytic.len(), numeric.len(), "one gradient per input");
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| max_relative_error(a, n, floor))
        .fold(0.0, f64::max)
}
