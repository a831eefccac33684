//! Eigenbasis amplitudes of a (generally unnormalized) state.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Amplitudes `c_m`, element `m - 1` for level `m`. The norm of an
/// unnormalized vector carries the likelihood of the record that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCoefficients {
    amps: Vec<Complex64>,
    normalized: bool,
}

impl StateCoefficients {
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::invalid("state", "need at least one amplitude"));
        }
        if amps.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::invalid("state", "amplitudes must be finite"));
        }
        let normalized = (norm_of(&amps) - 1.0).abs() < 1e-10;
        Ok(Self { amps, normalized })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    /// Unit vector on 1-based `level` of an `len`-level basis.
    pub fn basis(len: usize, level: usize) -> Result<Self> {
        if level == 0 || level > len {
            return Err(Error::invalid("level", "level index outside 1..=M"));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); len];
        amps[level - 1] = Complex64::new(1.0, 0.0);
        Self::new(amps)
    }

    pub(crate) fn from_raw(amps: Vec<Complex64>) -> Self {
        let normalized = (norm_of(&amps) - 1.0).abs() < 1e-10;
        Self { amps, normalized }
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        norm_of(&self.amps)
    }

    pub fn into_amps(self) -> Vec<Complex64> {
        self.amps
    }

    /// `|⟨self|other⟩|`.
    pub fn overlap(&self, other: &StateCoefficients) -> f64 {
        let s: Complex64 = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum();
        sqrt(s.norm_sqr())
    }
}

pub(crate) fn norm_of(amps: &[Complex64]) -> f64 {
    sqrt(amps.iter().map(|c| c.norm_sqr()).sum())
}
