//! Testbeds: the planar range problem, CubeSat attitude, and linear models
//! with closed-form answers.

pub mod attitude;
pub mod linear;
pub mod range;

use crate::da::Algebra;

/// `Σ c_j x_j`, skipping zero coefficients.
pub(crate) fn lin_comb<A: Algebra>(coeffs: &[f64], x: &[A]) -> A {
    let mut acc = x[0].constant_like(0.0);
    for (c, xi) in coeffs.iter().zip(x) {
        if *c != 0.0 {
            acc.axpy(*c, xi);
        }
    }
    acc
}
