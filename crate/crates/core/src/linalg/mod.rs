//! Symmetric eigensolvers.
//!
//! [`SymTridiagonal`] finds selected eigenpairs by Sturm-sequence bisection
//! followed by inverse iteration; it backs the grid Hamiltonians.
//! [`dense_symmetric_eigen`] is a Householder reduction plus implicit QL and
//! backs the coupled-oscillator product basis.

mod dense;
mod tridiagonal;

pub use dense::{dense_symmetric_eigen, DenseEigen};
pub use tridiagonal::{Eigenpairs, SymTridiagonal};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    crate::math::sqrt(dot(a, a))
}
