use qnd_core::measurement::{kernel_matrix, Kernel};
use qnd_core::sequence::ResultGrid;
use qnd_core::spectral::{build_hamiltonian, solve_spectrum, solve_spectrum_with, Grid1D, Potential, SolveOptions, Spectrum};
use std::f64::consts::PI;

/// `Σ_a W(a) W(a) step / (√π Δa)` as a row-major matrix.
fn resolution(s: &Spectrum, da: f64, points: usize) -> Vec<f64> {
    let m = s.levels();
    let k = Kernel::gaussian(da).unwrap();
    let g = s.grid();
    let grid = ResultGrid::new(g.x_min() - 7.0 * da, g.x_max() + 7.0 * da, points).unwrap();
    let mut sum = vec![0.0; m * m];
    for a in grid.points() {
        let w = kernel_matrix(s, &k, a);
        for r in 0..m {
            for c in 0..m {
                sum[r * m + c] += (0..m).map(|j| w.get(r, j) * w.get(j, c)).sum::<f64>();
            }
        }
    }
    let scale = grid.step() / (PI.sqrt() * da);
    sum.iter().map(|v| v * scale).collect()
}

fn deviation(sum: &[f64], m: usize, block: usize) -> f64 {
    let mut d = 0.0;
    for r in 0..block {
        for c in 0..block {
            let want = if r == c { 1.0 } else { 0.0 };
            d += (sum[r * m + c] - want).powi(2);
        }
    }
    (d / block as f64).sqrt()
}

#[test]
fn resolution_identity_in_the_complete_basis() {
    let pot = Potential::harmonic(1.0, 1.0).unwrap();
    let ham = build_hamiltonian(Grid1D::symmetric(6.0, 61).unwrap(), &pot, 1.0).unwrap();
    let s = solve_spectrum_with(&ham, 59, SolveOptions { extrapolate: false }).unwrap();
    let sum = resolution(&s, 0.7, 1201);
    assert!(deviation(&sum, 59, 59) < 1e-6);
}

#[test]
fn resolution_identity_away_from_the_cutoff() {
    let pot = Potential::harmonic(1.0, 1.0).unwrap();
    let ham = build_hamiltonian(Grid1D::symmetric(10.0, 2001).unwrap(), &pot, 1.0).unwrap();
    let s = solve_spectrum(&ham, 16).unwrap();
    let sum = resolution(&s, 0.5f64.sqrt(), 1201);
    assert!(deviation(&sum, 16, 8) < 0.02);
    // the top level misses its couplings to the discarded ones
    assert!(sum[15 * 16 + 15] < 0.9);
}
