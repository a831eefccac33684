//! Two bilinearly coupled oscillators, `H = H_1 + H_2 + γ x_1 x_2`, in a
//! truncated product number basis. Mode 1 is measured; the spread of mode 2
//! is reported as an indirect uncertainty.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{dense_symmetric_eigen, DenseEigen};
use crate::math::{cos, exp, sin, sqrt};
use crate::measurement::Kernel;
use crate::rng;
use crate::sequence::{
    effective_uncertainty, most_probable, sample_result, OutcomeDensity, ProbabilityMode,
    ResultGrid, ResultPolicy,
};

/// Leak above which a mode-1 measurement is flagged.
pub const LEAK_WARNING: f64 = 1e-3;

/// Points in the automatic mode-1 result grid.
pub const COUPLED_RESULT_POINTS: usize = 401;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledConfig {
    pub m1: f64,
    pub m2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub gamma: f64,
    /// Width of the Gaussian measuring `x_1`.
    pub da1: f64,
    pub hbar: f64,
    /// Number states kept per mode.
    pub n1: usize,
    pub n2: usize,
}

impl CoupledConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, f: &'static str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(f, "must be finite and > 0"))
            }
        };
        pos(self.m1, "coupled.m1")?;
        pos(self.m2, "coupled.m2")?;
        pos(self.omega1, "coupled.omega1")?;
        pos(self.omega2, "coupled.omega2")?;
        pos(self.da1, "coupled.da1")?;
        pos(self.hbar, "hbar")?;
        if !self.gamma.is_finite() {
            return Err(Error::invalid("coupled.gamma", "must be finite"));
        }
        if stability_margin(self) <= 0.0 {
            return Err(Error::invalid(
                "coupled.gamma",
                "coupling too strong: need gamma^2 < m1 m2 omega1^2 omega2^2",
            ));
        }
        if self.n1 < 2 || self.n2 < 2 {
            return Err(Error::invalid("coupled.n", "need at least 2 states per mode"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n1 * self.n2
    }

    /// Oscillator length `sqrt(ħ / (m ω))` of each mode.
    pub fn lengths(&self) -> (f64, f64) {
        (
            sqrt(self.hbar / (self.m1 * self.omega1)),
            sqrt(self.hbar / (self.m2 * self.omega2)),
        )
    }
}

/// Smallest eigenvalue of the potential form `[[m1 ω1², γ], [γ, m2 ω2²]]`.
/// Positive exactly when the coupled system is bound.
pub fn stability_margin(c: &CoupledConfig) -> f64 {
    let a = c.m1 * c.omega1 * c.omega1;
    let d = c.m2 * c.omega2 * c.omega2;
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    mean - sqrt(half * half + c.gamma * c.gamma)
}

/// Normal-mode angular frequencies `(ω_-, ω_+)`.
pub fn normal_mode_frequencies(c: &CoupledConfig) -> (f64, f64) {
    let w1 = c.omega1 * c.omega1;
    let w2 = c.omega2 * c.omega2;
    let k = c.gamma * c.gamma / (c.m1 * c.m2);
    let mean = 0.5 * (w1 + w2);
    let root = sqrt(0.25 * (w1 - w2) * (w1 - w2) + k);
    (sqrt(mean - root), sqrt(mean + root))
}

/// `⟨n| x |n+1⟩` for an oscillator of length `l`.
fn x_upper(l: f64, n: usize) -> f64 {
    l * sqrt((n + 1) as f64 / 2.0)
}

/// Position matrix of one mode, dense row-major.
fn position_matrix(l: f64, n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n * n];
    for i in 0..n - 1 {
        let v = x_upper(l, i);
        x[i * n + i + 1] = v;
        x[(i + 1) * n + i] = v;
    }
    x
}

/// `⟨i| x² |j⟩` from the untruncated operator.
fn position_sq_matrix(l: f64, n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n * n];
    for i in 0..n {
        x[i * n + i] = l * l * (i as f64 + 0.5);
        if i + 2 < n {
            let v = 0.5 * l * l * sqrt(((i + 1) * (i + 2)) as f64);
            x[i * n + i + 2] = v;
            x[(i + 2) * n + i] = v;
        }
    }
    x
}

/// Dense row-major Hamiltonian on the product basis, index `n_1 · N_2 + n_2`.
pub fn coupled_hamiltonian(config: &CoupledConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let (n1, n2) = (config.n1, config.n2);
    let (l1, l2) = config.lengths();
    let x1 = position_matrix(l1, n1);
    let x2 = position_matrix(l2, n2);
    let dim = n1 * n2;
    let mut h = vec![0.0; dim * dim];
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let row = i1 * n2 + i2;
            h[row * dim + row] = config.hbar
                * (config.omega1 * (i1 as f64 + 0.5) + config.omega2 * (i2 as f64 + 0.5));
            for j1 in 0..n1 {
                let a = x1[i1 * n1 + j1];
                if a == 0.0 {
                    continue;
                }
                for j2 in 0..n2 {
                    let b = x2[i2 * n2 + j2];
                    if b != 0.0 {
                        h[row * dim + j1 * n2 + j2] += config.gamma * a * b;
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Amplitudes on the product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    amps: Vec<Complex64>,
}

impl CoupledState {
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        if amps.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(Error::invalid("state", "amplitudes must be finite"));
        }
        Ok(Self { amps })
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn normalized(mut self) -> Result<(Self, f64)> {
        let n = sqrt(self.norm_sq());
        if n == 0.0 || !n.is_finite() {
            return Err(Error::AnnihilatedState { result: f64::NAN });
        }
        for a in &mut self.amps {
            *a /= n;
        }
        Ok((self, n))
    }
}

/// Outcome of one mode-1 measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledMeasurement {
    /// Normalized post-measurement state.
    pub state: CoupledState,
    /// `1 - ‖W c‖² / (c† W² c)`.
    pub leak: f64,
    pub warning: bool,
    /// `‖W c‖` for the incoming state.
    pub norm_ratio: f64,
}

/// Solved coupled system with the mode-1 quadrature tables.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    config: CoupledConfig,
    eigen: DenseEigen,
    x1: Vec<f64>,
    x2: Vec<f64>,
    x2_sq: Vec<f64>,
    /// Mode-1 quadrature nodes and weights.
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Hermite functions at the nodes, `phi[k * n1 + n]`.
    phi: Vec<f64>,
}

impl CoupledSystem {
    pub fn new(config: CoupledConfig) -> Result<Self> {
        let h = coupled_hamiltonian(&config)?;
        let eigen = dense_symmetric_eigen(&h, config.dim())?;
        let (l1, l2) = config.lengths();

        // uniform rule in ξ = x/ℓ over the classically relevant range; the
        // spacing also resolves the kernel
        let half = sqrt(2.0 * config.n1 as f64 + 1.0) + 10.0;
        let step = (0.02f64).min(0.1 * config.da1 / l1);
        let count = (2.0 * half / step) as usize + 1;
        let step = 2.0 * half / (count - 1) as f64;
        let mut nodes = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let mut phi = vec![0.0; count * config.n1];
        let norm0 = 1.0 / sqrt(sqrt(core::f64::consts::PI) * l1);
        for k in 0..count {
            let xi = -half + k as f64 * step;
            nodes.push(xi * l1);
            weights.push(if k == 0 || k + 1 == count { 0.5 } else { 1.0 } * step * l1);
            let row = &mut phi[k * config.n1..(k + 1) * config.n1];
            row[0] = norm0 * exp(-0.5 * xi * xi);
            if config.n1 > 1 {
                row[1] = sqrt(2.0) * xi * row[0];
            }
            for n in 1..config.n1 - 1 {
                let nf = n as f64;
                row[n + 1] =
                    sqrt(2.0 / (nf + 1.0)) * xi * row[n] - sqrt(nf / (nf + 1.0)) * row[n - 1];
            }
        }
        Ok(Self {
            x1: position_matrix(l1, config.n1),
            x2: position_matrix(l2, config.n2),
            x2_sq: position_sq_matrix(l2, config.n2),
            config,
            eigen,
            nodes,
            weights,
            phi,
        })
    }

    pub fn config(&self) -> &CoupledConfig {
        &self.config
    }

    /// Eigenvalues of the truncated Hamiltonian, ascending.
    pub fn energies(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn ground_state(&self) -> CoupledState {
        CoupledState {
            amps: self
                .eigen
                .vector(0)
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect(),
        }
    }

    pub fn evolve(&self, state: &CoupledState, dt: f64) -> CoupledState {
        let dim = self.config.dim();
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for k in 0..dim {
            let v = self.eigen.vector(k);
            let d: Complex64 = v.iter().zip(&state.amps).map(|(a, b)| b * a).sum();
            let theta = self.eigen.values[k] * dt / self.config.hbar;
            let d = d * Complex64::new(cos(theta), -sin(theta));
            for (o, a) in out.iter_mut().zip(v) {
                *o += d * a;
            }
        }
        CoupledState { amps: out }
    }

    /// Mode-1 kernel matrix `⟨n| w_a |n'⟩`, dense row-major.
    pub fn mode1_kernel(&self, kernel: &Kernel, a: f64) -> Vec<f64> {
        let n1 = self.config.n1;
        let reach = kernel.support();
        let mut w = vec![0.0; n1 * n1];
        for (k, &x) in self.nodes.iter().enumerate() {
            if (x - a).abs() > reach {
                continue;
            }
            let f = kernel.weight(x, a) * self.weights[k];
            if f == 0.0 {
                continue;
            }
            let row = &self.phi[k * n1..(k + 1) * n1];
            for i in 0..n1 {
                let fi = f * row[i];
                for j in i..n1 {
                    w[i * n1 + j] += fi * row[j];
                }
            }
        }
        for i in 0..n1 {
            for j in 0..i {
                w[i * n1 + j] = w[j * n1 + i];
            }
        }
        w
    }

    fn apply_mode1(&self, w: &[f64], state: &CoupledState) -> Vec<Complex64> {
        let (n1, n2) = (self.config.n1, self.config.n2);
        let mut out = vec![Complex64::new(0.0, 0.0); n1 * n2];
        for i in 0..n1 {
            for j in 0..n1 {
                let f = w[i * n1 + j];
                if f == 0.0 {
                    continue;
                }
                for m in 0..n2 {
                    out[i * n2 + m] += state.amps[j * n2 + m] * f;
                }
            }
        }
        out
    }

    /// Gaussian of width `Δa_1` used for mode-1 measurements.
    pub fn kernel(&self) -> Kernel {
        Kernel::Gaussian {
            width: self.config.da1,
        }
    }

    /// `(W_1(a) ⊗ I) c`, unnormalized.
    pub fn apply_x1(&self, state: &CoupledState, a1: f64, kernel: &Kernel) -> CoupledState {
        let w = self.mode1_kernel(kernel, a1);
        CoupledState {
            amps: self.apply_mode1(&w, state),
        }
    }

    /// `W_1(a) ⊗ I` with the configured Gaussian, followed by
    /// renormalization.
    pub fn measure_x1(&self, state: &CoupledState, a1: f64) -> Result<CoupledMeasurement> {
        self.measure_x1_with(state, a1, &self.kernel())
    }

    pub fn measure_x1_with(
        &self,
        state: &CoupledState,
        a1: f64,
        kernel: &Kernel,
    ) -> Result<CoupledMeasurement> {
        let (state, _) = state.clone().normalized()?;
        let filtered = self.apply_x1(&state, a1, kernel);
        let kept = filtered.norm_sq();
        let squared = self.mode1_kernel(&squared_kernel(kernel), a1);
        let full = expectation(&squared, &state, self.config.n1, self.config.n2);
        let leak = if full > 0.0 {
            (1.0 - kept / full).max(0.0)
        } else {
            0.0
        };
        let (post, norm) = filtered
            .normalized()
            .map_err(|_| Error::AnnihilatedState { result: a1 })?;
        Ok(CoupledMeasurement {
            state: post,
            leak,
            warning: leak > LEAK_WARNING,
            norm_ratio: norm,
        })
    }

    /// `(⟨x_1⟩, Δx_1)` from the truncated position matrix.
    pub fn mode1_moments(&self, state: &CoupledState) -> (f64, f64) {
        let (n1, n2) = (self.config.n1, self.config.n2);
        let mean = expectation(&self.x1, state, n1, n2) / state.norm_sq();
        let (l1, _) = self.config.lengths();
        let sq = expectation(&position_sq_matrix(l1, n1), state, n1, n2) / state.norm_sq();
        (mean, sqrt((sq - mean * mean).max(0.0)))
    }

    /// `sqrt(2 Var x_2)` with exact `x_2` and `x_2²` matrix elements.
    pub fn indirect_uncertainty(&self, state: &CoupledState) -> f64 {
        let (n1, n2) = (self.config.n1, self.config.n2);
        let norm = state.norm_sq();
        let mean = expectation_mode2(&self.x2, state, n1, n2) / norm;
        let sq = expectation_mode2(&self.x2_sq, state, n1, n2) / norm;
        sqrt(2.0 * (sq - mean * mean).max(0.0))
    }

    /// Mode-1 outcome density `‖(W_1(a) ⊗ I) c‖²` on `grid`.
    pub fn mode1_density(
        &self,
        state: &CoupledState,
        grid: &ResultGrid,
        kernel: &Kernel,
        mode: ProbabilityMode,
    ) -> Result<OutcomeDensity> {
        let weights = grid
            .points()
            .map(|a| {
                let w = self.mode1_kernel(kernel, a);
                mode.weight(
                    self.apply_mode1(&w, state)
                        .iter()
                        .map(|v| v.norm_sqr())
                        .sum(),
                )
            })
            .collect();
        OutcomeDensity::new(*grid, weights, mode)
    }

    /// Automatic mode-1 result grid around the current state.
    pub fn mode1_grid(&self, state: &CoupledState, points: usize) -> Result<ResultGrid> {
        let (mean, spread) = self.mode1_moments(state);
        ResultGrid::centered(mean, 6.0 * self.config.da1.max(spread), points)
    }

    /// Experimental: `Δa_eff` of a direct Gaussian measurement of `x_2` with
    /// width `da2`, from exact Gaussian algebra in the mode-2 position
    /// distribution sampled at `points` grid points.
    pub fn mode2_outcome_spread(&self, state: &CoupledState, da2: f64, points: usize) -> Result<f64> {
        if !(da2.is_finite() && da2 > 0.0) {
            return Err(Error::invalid("coupled.da2", "must be finite and > 0"));
        }
        let (n1, n2) = (self.config.n1, self.config.n2);
        let norm = state.norm_sq();
        let mean = expectation_mode2(&self.x2, state, n1, n2) / norm;
        let sq = expectation_mode2(&self.x2_sq, state, n1, n2) / norm;
        let spread = sqrt((sq - mean * mean).max(0.0));
        let grid = ResultGrid::centered(mean, 6.0 * da2.max(spread), points)?;
        // ‖w_a ⊗ ψ‖² = ∫ exp(-(x-a)²/Δa²) ρ_2(x) dx with ρ_2 on a fine rule
        let (_, l2) = self.config.lengths();
        let half = sqrt(2.0 * n2 as f64 + 1.0) + 10.0;
        let count = 4001;
        let step = 2.0 * half / (count - 1) as f64;
        let mut xs = Vec::with_capacity(count);
        let mut rho = Vec::with_capacity(count);
        let norm0 = 1.0 / sqrt(sqrt(core::f64::consts::PI) * l2);
        let mut row = vec![0.0; n2];
        for k in 0..count {
            let xi = -half + k as f64 * step;
            row[0] = norm0 * exp(-0.5 * xi * xi);
            row[1] = sqrt(2.0) * xi * row[0];
            for n in 1..n2 - 1 {
                let nf = n as f64;
                row[n + 1] =
                    sqrt(2.0 / (nf + 1.0)) * xi * row[n] - sqrt(nf / (nf + 1.0)) * row[n - 1];
            }
            let mut p = 0.0;
            for i1 in 0..n1 {
                let amp: Complex64 = (0..n2).map(|m| state.amps[i1 * n2 + m] * row[m]).sum();
                p += amp.norm_sqr();
            }
            let w = if k == 0 || k + 1 == count { 0.5 } else { 1.0 };
            xs.push(xi * l2);
            rho.push(p * w * step * l2 / norm);
        }
        let weights = grid
            .points()
            .map(|a| {
                xs.iter()
                    .zip(&rho)
                    .map(|(x, r)| r * exp(-(x - a) * (x - a) / (da2 * da2)))
                    .sum()
            })
            .collect();
        let density = OutcomeDensity::new(grid, weights, ProbabilityMode::Linear)?;
        Ok(effective_uncertainty(&density, most_probable(&density)))
    }
}

/// Kernel whose weight is the square of `kernel`'s.
fn squared_kernel(kernel: &Kernel) -> Kernel {
    match *kernel {
        Kernel::Gaussian { width } => Kernel::Gaussian {
            width: width / core::f64::consts::SQRT_2,
        },
        k @ Kernel::Window { .. } => k,
    }
}

/// `c† (A ⊗ I) c` for a real symmetric mode-1 operator.
fn expectation(op: &[f64], state: &CoupledState, n1: usize, n2: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n1 {
        for j in 0..n1 {
            let f = op[i * n1 + j];
            if f == 0.0 {
                continue;
            }
            for m in 0..n2 {
                s += f * (state.amps[i * n2 + m].conj() * state.amps[j * n2 + m]).re;
            }
        }
    }
    s
}

/// `c† (I ⊗ A) c` for a real symmetric mode-2 operator.
fn expectation_mode2(op: &[f64], state: &CoupledState, n1: usize, n2: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n1 {
        let block = &state.amps[i * n2..(i + 1) * n2];
        for m in 0..n2 {
            for k in 0..n2 {
                let f = op[m * n2 + k];
                if f != 0.0 {
                    s += f * (block[m].conj() * block[k]).re;
                }
            }
        }
    }
    s
}

/// Per-measurement diagnostics of a coupled run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledStep {
    pub result: f64,
    /// `Δa_eff` of the mode-1 density the result was drawn from.
    pub direct_uncertainty: f64,
    pub indirect_uncertainty: f64,
    pub leak: f64,
    pub warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrace {
    /// Indirect uncertainty of the coupled ground state before any
    /// measurement.
    pub initial_indirect: f64,
    pub steps: Vec<CoupledStep>,
    pub final_state: CoupledState,
}

impl CoupledTrace {
    /// `N + 1` indirect uncertainties, the initial one first.
    pub fn indirect_uncertainties(&self) -> Vec<f64> {
        core::iter::once(self.initial_indirect)
            .chain(self.steps.iter().map(|s| s.indirect_uncertainty))
            .collect()
    }

    pub fn max_leak(&self) -> f64 {
        self.steps.iter().map(|s| s.leak).fold(0.0, f64::max)
    }
}

/// `measurements` mode-1 measurements separated by `dt`, starting from the
/// coupled ground state at `t = 0` (the first one happens at `t = 0`).
/// A fixed policy needs exactly `measurements` results.
pub fn coupled_sequence(
    system: &CoupledSystem,
    measurements: usize,
    dt: f64,
    policy: &ResultPolicy,
    mode: ProbabilityMode,
) -> Result<CoupledTrace> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("coupled.dt", "quiescent time must be > 0"));
    }
    if let ResultPolicy::Fixed(list) = policy {
        if list.len() != measurements {
            return Err(Error::invalid(
                "coupled.results",
                "fixed policy needs one result per measurement",
            ));
        }
    }
    let kernel = system.kernel();
    let mut state = system.ground_state();
    let initial_indirect = system.indirect_uncertainty(&state);
    let mut rng = match policy {
        ResultPolicy::Sampled { seed } => Some(rng::stream(*seed)),
        _ => None,
    };
    let mut steps = Vec::with_capacity(measurements);
    for k in 0..measurements {
        if k > 0 {
            state = system.evolve(&state, dt);
        }
        let grid = system.mode1_grid(&state, COUPLED_RESULT_POINTS)?;
        let density = system.mode1_density(&state, &grid, &kernel, mode)?;
        let a_tilde = most_probable(&density);
        let a = match (policy, rng.as_mut()) {
            (ResultPolicy::Fixed(list), _) => list[k],
            (ResultPolicy::Sampled { .. }, Some(r)) => sample_result(&density, r),
            _ => a_tilde,
        };
        let m = system.measure_x1(&state, a)?;
        state = m.state;
        steps.push(CoupledStep {
            result: a,
            direct_uncertainty: effective_uncertainty(&density, a_tilde),
            indirect_uncertainty: system.indirect_uncertainty(&state),
            leak: m.leak,
            warning: m.warning,
        });
    }
    Ok(CoupledTrace {
        initial_indirect,
        steps,
        final_state: state,
    })
}
