//! Finite-difference Hamiltonians `H = p²/2m + V(x)` on a uniform grid with
//! Dirichlet ends, their low-lying eigenpairs and derived timescales.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::SymTridiagonal;
use crate::math::{cbrt, ceil, sqrt};

/// Tail mass of the highest level in the outer 10% of the grid above which
/// [`Spectrum::tail_warning`] fires.
pub const TAIL_MASS_LIMIT: f64 = 1e-8;

/// Uniform grid `x_i = x_min + i h`, `h = (x_max - x_min)/(n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("grid.n", "need at least 3 points"));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(Error::invalid("grid.x_max", "need finite x_max > x_min"));
        }
        Ok(Self { x_min, x_max, n })
    }

    /// Grid on `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    /// Point `i`, computed about the grid center so that a symmetric grid is
    /// exactly antisymmetric under `i -> n - 1 - i`.
    pub fn point(&self, i: usize) -> f64 {
        let center = 0.5 * (self.x_min + self.x_max);
        let mid = 0.5 * (self.n - 1) as f64;
        center + (i as f64 - mid) * self.spacing()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.point(i))
    }

    /// Trapezoid quadrature weight of point `i`.
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.n {
            0.5 * h
        } else {
            h
        }
    }

    /// Every other point of this grid; needs an odd point count.
    pub fn coarsened(&self) -> Option<Grid1D> {
        if self.n.is_multiple_of(2) || self.n < 5 {
            return None;
        }
        Grid1D::new(self.x_min, self.x_max, self.n.div_ceil(2)).ok()
    }

    /// Index range of points inside `[lo, hi]`.
    pub(crate) fn index_range(&self, lo: f64, hi: f64) -> core::ops::Range<usize> {
        let h = self.spacing();
        let first = ceil((lo - self.x_min) / h - 1e-9).max(0.0);
        let last = libm::floor((hi - self.x_min) / h + 1e-9);
        if last < 0.0 || first > (self.n - 1) as f64 || last < first {
            return 0..0;
        }
        let first = first as usize;
        let last = (last as usize).min(self.n - 1);
        first..last + 1
    }
}

/// Potential energy `V(x)` together with the particle mass.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `V = m ω² x² / 2`.
    Harmonic { mass: f64, omega: f64 },
    /// Bistable flux potential `V = -μ x²/2 + λ x⁴/4`, minima at `±√(μ/λ)`.
    DoubleWell { mu: f64, lambda: f64, mass: f64 },
    /// Values sampled on `grid`.
    Tabulated {
        grid: Grid1D,
        values: Vec<f64>,
        mass: f64,
    },
}

impl Potential {
    pub fn harmonic(mass: f64, omega: f64) -> Result<Self> {
        let p = Potential::Harmonic { mass, omega };
        p.validate()?;
        Ok(p)
    }

    pub fn double_well(mu: f64, lambda: f64, mass: f64) -> Result<Self> {
        let p = Potential::DoubleWell { mu, lambda, mass };
        p.validate()?;
        Ok(p)
    }

    pub fn tabulated(grid: Grid1D, values: Vec<f64>, mass: f64) -> Result<Self> {
        let p = Potential::Tabulated { grid, values, mass };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, field| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(field, "must be finite and > 0"))
            }
        };
        match self {
            Potential::Harmonic { mass, omega } => {
                positive(*mass, "potential.mass")?;
                positive(*omega, "potential.omega")
            }
            Potential::DoubleWell { mu, lambda, mass } => {
                positive(*mass, "potential.mass")?;
                positive(*mu, "potential.mu")?;
                positive(*lambda, "potential.lambda")
            }
            Potential::Tabulated { grid, values, mass } => {
                positive(*mass, "potential.mass")?;
                if values.len() != grid.len() {
                    return Err(Error::invalid(
                        "potential.values",
                        "tabulation length must match its grid",
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("potential.values", "values must be finite"));
                }
                Ok(())
            }
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            Potential::Harmonic { mass, .. }
            | Potential::DoubleWell { mass, .. }
            | Potential::Tabulated { mass, .. } => *mass,
        }
    }

    /// `V(x)` for the analytic variants; `None` for tabulated data.
    pub fn value(&self, x: f64) -> Option<f64> {
        match self {
            Potential::Harmonic { mass, omega } => Some(0.5 * mass * omega * omega * x * x),
            Potential::DoubleWell { mu, lambda, .. } => {
                let x2 = x * x;
                Some(-0.5 * mu * x2 + 0.25 * lambda * x2 * x2)
            }
            Potential::Tabulated { .. } => None,
        }
    }

    /// Whether `V(-x) = V(x)` holds by construction.
    pub fn is_even(&self) -> bool {
        !matches!(self, Potential::Tabulated { .. })
    }

    /// Samples the potential on `grid`.
    pub fn sample(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        let values = match self {
            Potential::Tabulated {
                grid: tab, values, ..
            } => {
                if tab == grid {
                    values.clone()
                } else if tab.coarsened().as_ref() == Some(grid) {
                    values.iter().step_by(2).copied().collect()
                } else {
                    return Err(Error::invalid(
                        "potential.values",
                        "tabulation grid does not match the Hamiltonian grid",
                    ));
                }
            }
            _ => grid.points().map(|x| self.value(x).unwrap()).collect(),
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("potential", "non-finite potential value on the grid"));
        }
        Ok(values)
    }

    fn minimum(&self) -> f64 {
        match self {
            Potential::Harmonic { .. } => 0.0,
            Potential::DoubleWell { mu, lambda, .. } => -mu * mu / (4.0 * lambda),
            Potential::Tabulated { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Outermost classical turning point `x_t > 0` for energy `e` and `|V'(x_t)|`.
    fn turning_point(&self, e: f64) -> Option<(f64, f64)> {
        match *self {
            Potential::Harmonic { mass, omega } => {
                let k = mass * omega * omega;
                let xt = sqrt(2.0 * e.max(0.0) / k);
                Some((xt, k * xt))
            }
            Potential::DoubleWell { mu, lambda, .. } => {
                let disc = (mu * mu + 4.0 * lambda * e).max(0.0);
                let xt = sqrt((mu + sqrt(disc)) / lambda);
                Some((xt, (-mu * xt + lambda * xt * xt * xt).abs()))
            }
            Potential::Tabulated { .. } => None,
        }
    }
}

/// Grid Hamiltonian restricted to the interior points (Dirichlet ends).
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    grid: Grid1D,
    potential: Potential,
    hbar: f64,
    matrix: SymTridiagonal,
}

impl Hamiltonian {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// The `(n-2) x (n-2)` interior matrix; row `r` is grid point `r + 1`.
    pub fn matrix(&self) -> &SymTridiagonal {
        &self.matrix
    }
}

/// Three-point kinetic stencil plus the sampled potential:
/// diagonal `ħ²/(m h²) + V(x_i)`, off-diagonal `-ħ²/(2 m h²)`.
pub fn build_hamiltonian(grid: Grid1D, potential: &Potential, hbar: f64) -> Result<Hamiltonian> {
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(Error::invalid("hbar", "must be finite and > 0"));
    }
    potential.validate()?;
    let v = potential.sample(&grid)?;
    let h = grid.spacing();
    let kin = hbar * hbar / (potential.mass() * h * h);
    let interior = grid.len() - 2;
    let diag: Vec<f64> = (1..=interior).map(|i| kin + v[i]).collect();
    let off = vec![-0.5 * kin; interior - 1];
    let matrix = SymTridiagonal::new(diag, off)?;
    Ok(Hamiltonian {
        grid,
        potential: potential.clone(),
        hbar,
        matrix,
    })
}

/// Which energies a [`Spectrum`] reports in [`Spectrum::energies`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyEstimate {
    /// Eigenvalues of the grid matrix.
    Discrete,
    /// `(4 E_h - E_2h)/3` from the grid and its every-other-point coarsening;
    /// removes the O(h²) stencil error.
    Richardson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Try Richardson extrapolation of the energies. Falls back to discrete
    /// eigenvalues when the grid has an even point count, the coarse grid is
    /// too small for the requested levels, or ordering would change.
    pub extrapolate: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { extrapolate: true }
    }
}

/// Low-lying eigenpairs of a grid Hamiltonian.
///
/// Eigenfunctions are real, sampled on the full grid (zero at both ends) and
/// normalized so that `Σ_i φ(x_i)² h = 1`. The sign is fixed so that the
/// leftmost component above `1e-3 max|φ|` is positive.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: Grid1D,
    hbar: f64,
    mass: f64,
    energies: Vec<f64>,
    discrete_energies: Vec<f64>,
    estimate: EnergyEstimate,
    states: Vec<f64>,
    /// `states` transposed: the `levels` values at each grid point.
    by_point: Vec<f64>,
    worst_residual: f64,
    tail_mass: f64,
    even_potential: bool,
}

fn transpose(states: &[f64], levels: usize, n: usize) -> Vec<f64> {
    let mut t = vec![0.0; states.len()];
    for k in 0..levels {
        for i in 0..n {
            t[i * levels + k] = states[k * n + i];
        }
    }
    t
}

impl Spectrum {
    /// Builds a spectrum from explicit data (states row-major, `levels x n`,
    /// grid-normalized). Used for truncated or hand-made bases.
    pub fn from_parts(
        grid: Grid1D,
        hbar: f64,
        mass: f64,
        energies: Vec<f64>,
        states: Vec<f64>,
    ) -> Result<Self> {
        if energies.is_empty() || states.len() != energies.len() * grid.len() {
            return Err(Error::invalid("states", "need one grid row per energy"));
        }
        if energies.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("energies", "must be nondecreasing"));
        }
        let tail_mass = tail_mass(&grid, &states[(energies.len() - 1) * grid.len()..]);
        let energies_len = energies.len();
        Ok(Self {
            grid,
            hbar,
            mass,
            discrete_energies: energies.clone(),
            energies,
            estimate: EnergyEstimate::Discrete,
            by_point: transpose(&states, energies_len, grid.len()),
            states,
            worst_residual: 0.0,
            tail_mass,
            even_potential: false,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn levels(&self) -> usize {
        self.energies.len()
    }

    /// Energies used for time evolution; element `k - 1` is level `k`.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Raw grid-matrix eigenvalues (these satisfy the residual bound).
    pub fn discrete_energies(&self) -> &[f64] {
        &self.discrete_energies
    }

    pub fn estimate(&self) -> EnergyEstimate {
        self.estimate
    }

    /// Energy of 1-based `level`.
    pub fn energy(&self, level: usize) -> f64 {
        self.energies[level - 1]
    }

    /// Eigenfunction of 1-based `level` on the full grid.
    pub fn state(&self, level: usize) -> &[f64] {
        self.row(level - 1)
    }

    pub(crate) fn row(&self, idx: usize) -> &[f64] {
        let n = self.grid.len();
        &self.states[idx * n..(idx + 1) * n]
    }

    /// All level values at grid point `i`.
    pub(crate) fn point_row(&self, i: usize) -> &[f64] {
        let m = self.energies.len();
        &self.by_point[i * m..(i + 1) * m]
    }

    pub fn worst_residual(&self) -> f64 {
        self.worst_residual
    }

    /// Mass of the highest level in the outer 10% of the grid.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn tail_warning(&self) -> bool {
        self.tail_mass > TAIL_MASS_LIMIT
    }

    /// Whether the underlying potential is even (parity is a good quantum number).
    pub fn even_potential(&self) -> bool {
        self.even_potential
    }

    /// Keeps only the lowest `levels` levels.
    pub fn truncated(&self, levels: usize) -> Result<Spectrum> {
        if levels == 0 || levels > self.levels() {
            return Err(Error::invalid("levels", "truncation must keep 1..=M levels"));
        }
        let n = self.grid.len();
        let mut s = self.clone();
        s.energies.truncate(levels);
        s.discrete_energies.truncate(levels);
        s.states.truncate(levels * n);
        s.by_point = transpose(&s.states, levels, n);
        s.tail_mass = tail_mass(&self.grid, s.row(levels - 1));
        Ok(s)
    }
}

fn tail_mass(grid: &Grid1D, state: &[f64]) -> f64 {
    let n = grid.len();
    let edge = (n / 10).max(1);
    let h = grid.spacing();
    state[..edge]
        .iter()
        .chain(&state[n - edge..])
        .map(|v| v * v * h)
        .sum()
}

/// Lowest `levels` eigenpairs with default [`SolveOptions`].
pub fn solve_spectrum(hamiltonian: &Hamiltonian, levels: usize) -> Result<Spectrum> {
    solve_spectrum_with(hamiltonian, levels, SolveOptions::default())
}

pub fn solve_spectrum_with(
    hamiltonian: &Hamiltonian,
    levels: usize,
    options: SolveOptions,
) -> Result<Spectrum> {
    let grid = hamiltonian.grid;
    let n = grid.len();
    let interior = n - 2;
    if levels == 0 || levels > interior {
        return Err(Error::invalid("basis.levels", "need 1 <= M <= n - 2"));
    }
    let pairs = hamiltonian.matrix.lowest_eigenpairs(levels)?;
    let h = grid.spacing();
    let inv_sqrt_h = 1.0 / sqrt(h);

    let mut states = vec![0.0; levels * n];
    for k in 0..levels {
        let src = &pairs.vectors[k * interior..(k + 1) * interior];
        let dst = &mut states[k * n + 1..k * n + 1 + interior];
        for (d, s) in dst.iter_mut().zip(src) {
            *d = s * inv_sqrt_h;
        }
        fix_sign(&mut states[k * n..(k + 1) * n]);
    }

    let discrete = pairs.values;
    let (energies, estimate) = match extrapolated(hamiltonian, levels, &discrete, options)? {
        Some(e) => (e, EnergyEstimate::Richardson),
        None => (discrete.clone(), EnergyEstimate::Discrete),
    };
    let tail = tail_mass(&grid, &states[(levels - 1) * n..]);

    Ok(Spectrum {
        grid,
        hbar: hamiltonian.hbar,
        mass: hamiltonian.potential.mass(),
        energies,
        discrete_energies: discrete,
        estimate,
        by_point: transpose(&states, levels, n),
        states,
        worst_residual: pairs.worst_residual,
        tail_mass: tail,
        even_potential: hamiltonian.potential.is_even()
            && (grid.x_min() + grid.x_max()).abs() <= 1e-12 * grid.x_max().abs(),
    })
}

fn extrapolated(
    hamiltonian: &Hamiltonian,
    levels: usize,
    fine: &[f64],
    options: SolveOptions,
) -> Result<Option<Vec<f64>>> {
    if !options.extrapolate {
        return Ok(None);
    }
    let Some(coarse_grid) = hamiltonian.grid.coarsened() else {
        return Ok(None);
    };
    // the coarse grid must still resolve the requested levels
    if 4 * levels > coarse_grid.len() - 2 {
        return Ok(None);
    }
    let coarse = build_hamiltonian(coarse_grid, &hamiltonian.potential, hamiltonian.hbar)?;
    let coarse_values: Vec<f64> = (0..levels).map(|k| coarse.matrix.eigenvalue(k)).collect();
    let e: Vec<f64> = fine
        .iter()
        .zip(&coarse_values)
        .map(|(f, c)| (4.0 * f - c) / 3.0)
        .collect();
    if e.windows(2).any(|w| w[1] < w[0]) {
        return Ok(None);
    }
    Ok(Some(e))
}

fn fix_sign(state: &mut [f64]) {
    let max = state.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = state.iter().find(|v| v.abs() >= 1e-3 * max) {
        if *first < 0.0 {
            state.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Reformation time `T_ij = 2πħ / |E_i - E_j|` for 1-based levels `i`, `j`.
pub fn reformation_time(spectrum: &Spectrum, i: usize, j: usize) -> Result<f64> {
    let m = spectrum.levels();
    if i == 0 || j == 0 || i > m || j > m {
        return Err(Error::invalid("level", "level index outside 1..=M"));
    }
    if i == j {
        return Err(Error::invalid("level", "reformation time needs two distinct levels"));
    }
    let (ei, ej) = (spectrum.energy(i), spectrum.energy(j));
    let gap = (ei - ej).abs();
    let scale = ei.abs().max(ej.abs()).max(1.0);
    if gap <= 64.0 * f64::EPSILON * scale {
        return Err(Error::Degeneracy { i, j, gap });
    }
    Ok(2.0 * PI * spectrum.hbar() / gap)
}

/// Exact oscillator levels `ħω(k - 1/2)`, `k = 1..=levels`.
pub fn harmonic_oracle(mass: f64, omega: f64, hbar: f64, levels: usize) -> Vec<f64> {
    assert!(mass > 0.0 && omega > 0.0 && hbar > 0.0, "oscillator parameters must be > 0");
    (1..=levels).map(|k| hbar * omega * (k as f64 - 0.5)).collect()
}

/// Picks a symmetric grid for the lowest `levels` states of an analytic
/// potential: the domain reaches twelve Airy lengths past the outermost
/// turning point of the highest level, and the spacing resolves its shortest
/// local wavelength with at least 60 points. The point count is odd.
pub fn auto_grid(potential: &Potential, levels: usize, hbar: f64) -> Result<Grid1D> {
    potential.validate()?;
    if levels == 0 {
        return Err(Error::invalid("basis.levels", "need at least one level"));
    }
    if matches!(potential, Potential::Tabulated { .. }) {
        return Err(Error::invalid(
            "grid",
            "tabulated potentials carry their own grid",
        ));
    }
    let mass = potential.mass();
    let top = match *potential {
        Potential::Harmonic { omega, .. } => hbar * omega * (levels as f64 - 0.5),
        _ => estimate_level(potential, levels, hbar)?,
    };
    Ok(grid_for_energy(potential, top, mass, hbar))
}

fn grid_for_energy(potential: &Potential, top: f64, mass: f64, hbar: f64) -> Grid1D {
    let (xt, slope) = potential.turning_point(top).unwrap();
    let airy = cbrt(hbar * hbar / (2.0 * mass * slope.max(1e-12)));
    let half_width = xt + 12.0 * airy;
    let kinetic = (top - potential.minimum()).max(1e-12);
    let wavelength = 2.0 * PI * hbar / sqrt(2.0 * mass * kinetic);
    let step = wavelength / 60.0;
    let mut n = (ceil(2.0 * half_width / step) as usize + 1).clamp(401, 40_001);
    if n.is_multiple_of(2) {
        n += 1;
    }
    Grid1D::symmetric(half_width, n).unwrap()
}

fn estimate_level(potential: &Potential, levels: usize, hbar: f64) -> Result<f64> {
    let mass = potential.mass();
    // start from the minima region and widen until the grid contains the level
    let mut grid = match *potential {
        Potential::DoubleWell { mu, lambda, .. } => Grid1D::symmetric(2.0 * sqrt(mu / lambda) + 2.0, 401)?,
        _ => Grid1D::symmetric(10.0, 401)?,
    };
    let mut top = f64::NAN;
    for _ in 0..8 {
        let h = build_hamiltonian(grid, potential, hbar)?;
        let count = levels.min(grid.len() - 2);
        top = h.matrix().eigenvalue(count - 1);
        let next = grid_for_energy(potential, top, mass, hbar);
        if next.x_max() <= grid.x_max() * 1.0001 && next.spacing() >= grid.spacing() * 0.9999 {
            break;
        }
        grid = Grid1D::symmetric(next.x_max(), next.len().min(4001))?;
    }
    Ok(top)
}

/// Solves on [`auto_grid`], enlarging the domain while the tail warning fires.
pub fn auto_spectrum(potential: &Potential, levels: usize, hbar: f64) -> Result<Spectrum> {
    let mut grid = auto_grid(potential, levels, hbar)?;
    let mut spectrum = solve_spectrum(&build_hamiltonian(grid, potential, hbar)?, levels)?;
    for _ in 0..3 {
        if !spectrum.tail_warning() {
            break;
        }
        let n = ((grid.len() as f64 * 1.25) as usize) | 1;
        grid = Grid1D::symmetric(grid.x_max() * 1.25, n)?;
        spectrum = solve_spectrum(&build_hamiltonian(grid, potential, hbar)?, levels)?;
    }
    Ok(spectrum)
}
