//! Repeated impulsive position measurements of one-dimensional quantum
//! systems, evaluated in an energy eigenbasis.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It is organized
//! bottom-up:
//!
//! * [`linalg`]: symmetric tridiagonal and dense eigensolvers.
//! * [`spectral`]: finite-difference Hamiltonians on a uniform grid and their
//!   low-lying eigenpairs.
//! * [`measurement`]: Gaussian and window reduction kernels and their matrix
//!   elements in a [`spectral::Spectrum`] basis.
//! * [`sequence`]: alternating kernels and free evolution, outcome densities,
//!   effective uncertainty and uncertainty curves.
//! * [`experiments`]: harmonic and double-well scans, the position commutator
//!   amplitude and the Leggett-Garg correlator estimate.
//! * [`coupled`]: two bilinearly coupled oscillators with one of them measured.
//!
//! Level indices exposed by the public API are 1-based; vectors are 0-based.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod coupled;
pub mod error;
pub mod experiments;
pub mod linalg;
pub(crate) mod math;
pub mod measurement;
pub mod rng;
pub mod sequence;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
pub use num_complex::Complex64;
