//! Impulsive reduction kernels `ŵ_a` and their eigenbasis matrix elements.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math::{exp, sqrt};
use crate::spectral::{Grid1D, Spectrum};
use crate::state::StateCoefficients;

/// Beyond this many widths the Gaussian weight underflows to zero in f64.
const GAUSSIAN_SUPPORT: f64 = 38.7;

/// Reduction operator family with instrumental error `Δa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `exp(-(x - a)² / (2 Δa²))`.
    Gaussian { width: f64 },
    /// Characteristic function of `|x - a| <= Δa` (proportionality constant 1).
    Window { half_width: f64 },
}

impl Kernel {
    pub fn gaussian(width: f64) -> Result<Self> {
        let k = Kernel::Gaussian { width };
        k.validate()?;
        Ok(k)
    }

    pub fn window(half_width: f64) -> Result<Self> {
        let k = Kernel::Window { half_width };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width().is_finite() && self.width() > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("kernel.width", "must be finite and > 0"))
        }
    }

    /// `Δa`.
    pub fn width(&self) -> f64 {
        match *self {
            Kernel::Gaussian { width } => width,
            Kernel::Window { half_width } => half_width,
        }
    }

    /// `w_a(x)`.
    #[inline]
    pub fn weight(&self, x: f64, a: f64) -> f64 {
        match *self {
            Kernel::Gaussian { width } => {
                let d = (x - a) / width;
                exp(-0.5 * d * d)
            }
            Kernel::Window { half_width } => {
                if (x - a).abs() <= half_width {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Distance from `a` beyond which the weight is exactly zero.
    pub(crate) fn support(&self) -> f64 {
        match *self {
            Kernel::Gaussian { width } => GAUSSIAN_SUPPORT * width,
            Kernel::Window { half_width } => half_width,
        }
    }
}

/// `ψ'(x) = w_a(x) ψ(x)` on the grid; not renormalized.
pub fn apply_kernel(psi: &[Complex64], grid: &Grid1D, a: f64, kernel: &Kernel) -> Vec<Complex64> {
    debug_assert_eq!(psi.len(), grid.len());
    psi.iter()
        .enumerate()
        .map(|(i, p)| p * kernel.weight(grid.point(i), a))
        .collect()
}

/// Real symmetric `W_ml(a) = ⟨m| ŵ_a |l⟩` in a spectrum basis.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub result: f64,
    dim: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Element for 0-based rows/columns.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    /// Row-major data.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn apply(&self, c: &StateCoefficients) -> StateCoefficients {
        let m = self.dim;
        let out = (0..m)
            .map(|r| {
                self.data[r * m..(r + 1) * m]
                    .iter()
                    .zip(c.amps())
                    .map(|(w, a)| a * *w)
                    .sum()
            })
            .collect();
        StateCoefficients::from_raw(out)
    }
}

/// Trapezoid-quadrature matrix elements of the kernel at result `a`.
pub fn kernel_matrix(spectrum: &Spectrum, kernel: &Kernel, a: f64) -> KernelMatrix {
    let grid = spectrum.grid();
    let m = spectrum.levels();
    let range = grid.index_range(a - kernel.support(), a + kernel.support());
    let w: Vec<(usize, f64)> = range
        .map(|i| (i, kernel.weight(grid.point(i), a) * grid.trapezoid_weight(i)))
        .collect();
    let mut data = vec![0.0; m * m];
    for r in 0..m {
        let phi_r = spectrum.row(r);
        for c in r..m {
            let phi_c = spectrum.row(c);
            let s: f64 = w.iter().map(|&(i, wi)| phi_r[i] * wi * phi_c[i]).sum();
            data[r * m + c] = s;
            data[c * m + r] = s;
        }
    }
    KernelMatrix {
        result: a,
        dim: m,
        data,
    }
}

/// Rescales to unit norm; returns the new coefficients and `R = 1/‖c‖`.
pub fn renormalize(c: &StateCoefficients) -> Result<(StateCoefficients, f64)> {
    let norm = c.norm();
    if norm == 0.0 {
        return Err(Error::AnnihilatedState { result: f64::NAN });
    }
    let r = 1.0 / norm;
    let out = StateCoefficients::from_raw(c.amps().iter().map(|a| a * r).collect());
    Ok((out, r))
}

/// Grid samples `ψ(x_i) = Σ_m c_m φ_m(x_i)`.
pub fn synthesize(spectrum: &Spectrum, c: &StateCoefficients) -> Vec<Complex64> {
    let n = spectrum.grid().len();
    let mut psi = vec![Complex64::new(0.0, 0.0); n];
    for (k, amp) in c.amps().iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        for (p, phi) in psi.iter_mut().zip(spectrum.row(k)) {
            *p += amp * *phi;
        }
    }
    psi
}

/// Eigenbasis projection `c_m = Σ_i φ_m(x_i) ψ(x_i) h_i` (trapezoid).
pub fn project(spectrum: &Spectrum, psi: &[Complex64]) -> StateCoefficients {
    let grid = spectrum.grid();
    let amps = (0..spectrum.levels())
        .map(|k| {
            spectrum
                .row(k)
                .iter()
                .zip(psi)
                .enumerate()
                .map(|(i, (phi, p))| p * (phi * grid.trapezoid_weight(i)))
                .sum()
        })
        .collect();
    StateCoefficients::from_raw(amps)
}

/// Grid norm `sqrt(Σ |ψ_i|² h_i)`.
pub fn grid_norm(grid: &Grid1D, psi: &[Complex64]) -> f64 {
    sqrt(
        psi.iter()
            .enumerate()
            .map(|(i, p)| p.norm_sqr() * grid.trapezoid_weight(i))
            .sum(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_hamiltonian, solve_spectrum, Potential};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn kernel_widths_must_be_positive() {
        assert!(Kernel::gaussian(0.0).is_err());
        assert!(Kernel::window(-1.0).is_err());
        assert!(Kernel::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn window_cuts_uniform_state() {
        let grid = Grid1D::symmetric(2.0, 401).unwrap();
        let psi = vec![c(0.5); 401];
        let out = apply_kernel(&psi, &grid, 0.0, &Kernel::window(1.0).unwrap());
        for (i, v) in out.iter().enumerate() {
            let x = grid.point(i);
            let expect = if x.abs() <= 1.0 { 0.5 } else { 0.0 };
            assert_eq!(v.re, expect, "x = {x}");
        }
    }

    #[test]
    fn very_wide_gaussian_is_identity() {
        let grid = Grid1D::symmetric(5.0, 101).unwrap();
        let psi: Vec<Complex64> = grid.points().map(|x| Complex64::new(x, -x * x)).collect();
        let out = apply_kernel(&psi, &grid, 0.3, &Kernel::gaussian(1e12).unwrap());
        for (a, b) in psi.iter().zip(&out) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn renormalize_cases() {
        let s = StateCoefficients::from_real(&[2.0, 0.0, 0.0]).unwrap();
        let (u, r) = renormalize(&s).unwrap();
        assert_eq!(u.amps()[0], c(1.0));
        assert_eq!(r, 0.5);
        assert!(u.is_normalized());
        let unit = StateCoefficients::from_real(&[0.6, 0.8]).unwrap();
        let (same, r) = renormalize(&unit).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        assert!(same.overlap(&unit) > 1.0 - 1e-15);
        let zero = StateCoefficients::from_real(&[0.0, 0.0]).unwrap();
        assert!(matches!(renormalize(&zero), Err(Error::AnnihilatedState { .. })));
    }

    #[test]
    fn kernel_matrix_parity_selection() {
        let grid = Grid1D::symmetric(8.0, 801).unwrap();
        let pot = Potential::harmonic(1.0, 1.0).unwrap();
        let s = solve_spectrum(&build_hamiltonian(grid, &pot, 1.0).unwrap(), 12).unwrap();
        let w = kernel_matrix(&s, &Kernel::gaussian(0.8).unwrap(), 0.0);
        for m in 0..12 {
            for l in 0..12 {
                assert_eq!(w.get(m, l), w.get(l, m));
                if (m + l) % 2 == 1 {
                    assert!(w.get(m, l).abs() < 1e-8);
                }
            }
        }
        let id = kernel_matrix(&s, &Kernel::gaussian(1e12).unwrap(), 0.3);
        for m in 0..12 {
            for l in 0..12 {
                let expect = if m == l { 1.0 } else { 0.0 };
                assert!((id.get(m, l) - expect).abs() < 1e-6);
            }
        }
    }
}
