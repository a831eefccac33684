//! Packaged scenarios: the harmonic QND scan, the double-well (SQuID flux)
//! scan, the Leggett-Garg correlator estimate, and the position commutator.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math::{sin, sqrt};
use crate::measurement::{kernel_matrix, Kernel, KernelMatrix};
use crate::rng;
use crate::sequence::{
    curve_point, open_dt_grid, sample_index, validate_dt_grid, CurvePoint, ProbabilityMode,
    ResultGrid, ResultGridSpec, ResultPolicy, SequenceConfig, UncertaintyCurve,
};
use crate::spectral::{auto_spectrum, harmonic_oracle, reformation_time, Potential, Spectrum};
use crate::state::StateCoefficients;

/// Amplitude of `[x(t + ΔT), x(t)] / i` for an oscillator:
/// `(ħ / (m ω)) sin(ω ΔT)`. Zero marks quantum-nondemolition spacings.
pub fn commutator_amplitude(mass: f64, omega: f64, hbar: f64, dt: f64) -> f64 {
    hbar / (mass * omega) * sin(omega * dt)
}

/// Everything needed to evaluate an uncertainty curve point by point.
#[derive(Debug, Clone)]
pub struct ScanPlan {
    pub spectrum: Spectrum,
    pub initial: StateCoefficients,
    pub config: SequenceConfig,
    pub dt_grid: Vec<f64>,
}

impl ScanPlan {
    pub fn point(&self, index: usize) -> Result<CurvePoint> {
        curve_point(
            &self.spectrum,
            &self.initial,
            &self.config,
            self.dt_grid[index],
            index,
        )
    }

    /// Sequential evaluation of the whole grid.
    pub fn run(&self) -> UncertaintyCurve {
        let results = (0..self.dt_grid.len()).map(|i| self.point(i)).collect();
        self.assemble(results)
    }

    pub fn assemble(&self, results: Vec<Result<CurvePoint>>) -> UncertaintyCurve {
        UncertaintyCurve::assemble(&self.dt_grid, results, self.config.mode)
    }
}

/// Oscillator scan starting from the ground state.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicScan {
    pub mass: f64,
    pub omega: f64,
    pub hbar: f64,
    pub kernel: Kernel,
    pub measurements: usize,
    pub dt_grid: Vec<f64>,
    pub policy: ResultPolicy,
    pub mode: ProbabilityMode,
    pub levels: usize,
    pub result_grid: ResultGridSpec,
}

impl HarmonicScan {
    /// Defaults: N = 8, 64 points over `(0, 2π/ω]`, most probable results,
    /// linear mode, 32 levels.
    pub fn new(mass: f64, omega: f64, hbar: f64, kernel: Kernel) -> Self {
        Self {
            mass,
            omega,
            hbar,
            kernel,
            measurements: 8,
            dt_grid: open_dt_grid(2.0 * PI / omega, 64),
            policy: ResultPolicy::MostProbable,
            mode: ProbabilityMode::Linear,
            levels: 32,
            result_grid: ResultGridSpec::default(),
        }
    }

    /// Ground-state position spread `sqrt(ħ / (2 m ω))`.
    pub fn ground_sigma(&self) -> f64 {
        sqrt(self.hbar / (2.0 * self.mass * self.omega))
    }

    pub fn plan(&self) -> Result<ScanPlan> {
        validate_dt_grid(&self.dt_grid)?;
        let potential = Potential::harmonic(self.mass, self.omega)?;
        let spectrum = auto_spectrum(&potential, self.levels, self.hbar)?;
        let initial = StateCoefficients::basis(self.levels, 1)?;
        let config = SequenceConfig {
            kernel: self.kernel,
            quiescent_time: self.dt_grid[0],
            measurements: self.measurements,
            result_grid: self.result_grid,
            mode: self.mode,
            policy: self.policy.clone(),
        };
        config.validate()?;
        Ok(ScanPlan {
            spectrum,
            initial,
            config,
            dt_grid: self.dt_grid.clone(),
        })
    }

    /// Largest relative deviation of the solved levels from `ħω(k - 1/2)`.
    pub fn oracle_deviation(spectrum: &Spectrum, omega: f64) -> f64 {
        let exact = harmonic_oracle(spectrum.mass(), omega, spectrum.hbar(), spectrum.levels());
        spectrum
            .energies()
            .iter()
            .zip(&exact)
            .map(|(e, x)| ((e - x) / x).abs())
            .fold(0.0, f64::max)
    }
}

/// Runs a [`HarmonicScan`] sequentially.
pub fn qnd_harmonic_scan(scan: &HarmonicScan) -> Result<UncertaintyCurve> {
    Ok(scan.plan()?.run())
}

/// Double-well scan starting from the left-localized doublet combination.
#[derive(Debug, Clone, PartialEq)]
pub struct SquidScan {
    pub mu: f64,
    pub lambda: f64,
    pub mass: f64,
    pub hbar: f64,
    pub kernel: Kernel,
    pub measurements: usize,
    /// Number of points over `(0, span · T_12]` when `dt_grid` is `None`.
    pub points: usize,
    pub span: f64,
    pub dt_grid: Option<Vec<f64>>,
    pub policy: ResultPolicy,
    pub mode: ProbabilityMode,
    pub levels: usize,
    pub result_grid: ResultGridSpec,
}

impl SquidScan {
    /// Defaults: N = 8, 96 points over `(0, 2.5 T_12]`, most probable
    /// results, linear mode, 16 levels.
    pub fn new(mu: f64, lambda: f64, mass: f64, hbar: f64, kernel: Kernel) -> Self {
        Self {
            mu,
            lambda,
            mass,
            hbar,
            kernel,
            measurements: 8,
            points: 96,
            span: 2.5,
            dt_grid: None,
            policy: ResultPolicy::MostProbable,
            mode: ProbabilityMode::Linear,
            levels: 16,
            result_grid: ResultGridSpec::default(),
        }
    }

    /// Well minima at `±sqrt(μ/λ)`.
    pub fn well_position(&self) -> f64 {
        sqrt(self.mu / self.lambda)
    }

    pub fn plan(&self) -> Result<SquidPlan> {
        let potential = Potential::double_well(self.mu, self.lambda, self.mass)?;
        if self.levels < 2 {
            return Err(Error::invalid("basis.levels", "the doublet needs M >= 2"));
        }
        let spectrum = auto_spectrum(&potential, self.levels, self.hbar)?;
        let t12 = reformation_time(&spectrum, 1, 2)?;
        let initial = left_localized(&spectrum)?;
        let dt_grid = match &self.dt_grid {
            Some(g) => g.clone(),
            None => open_dt_grid(self.span * t12, self.points),
        };
        validate_dt_grid(&dt_grid)?;
        let config = SequenceConfig {
            kernel: self.kernel,
            quiescent_time: dt_grid[0],
            measurements: self.measurements,
            result_grid: self.result_grid,
            mode: self.mode,
            policy: self.policy.clone(),
        };
        config.validate()?;
        Ok(SquidPlan {
            plan: ScanPlan {
                spectrum,
                initial,
                config,
                dt_grid,
            },
            t12,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SquidPlan {
    pub plan: ScanPlan,
    /// Tunnelling period `T_12`.
    pub t12: f64,
}

#[derive(Debug, Clone)]
pub struct SquidScanOutput {
    pub curve: UncertaintyCurve,
    pub t12: f64,
}

/// Runs a [`SquidScan`] sequentially.
pub fn squid_scan(scan: &SquidScan) -> Result<SquidScanOutput> {
    let plan = scan.plan()?;
    Ok(SquidScanOutput {
        curve: plan.plan.run(),
        t12: plan.t12,
    })
}

/// `⟨1| x |2⟩` by grid quadrature.
fn doublet_dipole(spectrum: &Spectrum) -> f64 {
    let grid = spectrum.grid();
    spectrum
        .state(1)
        .iter()
        .zip(spectrum.state(2))
        .enumerate()
        .map(|(i, (a, b))| a * b * grid.point(i) * grid.trapezoid_weight(i))
        .sum()
}

/// `(φ_1 ± φ_2)/√2` with the sign that puts `⟨x⟩ < 0`.
pub fn left_localized(spectrum: &Spectrum) -> Result<StateCoefficients> {
    if spectrum.levels() < 2 {
        return Err(Error::invalid("basis.levels", "the doublet needs M >= 2"));
    }
    let s = if doublet_dipole(spectrum) > 0.0 { -1.0 } else { 1.0 };
    let mut amps = vec![0.0; spectrum.levels()];
    amps[0] = core::f64::consts::FRAC_1_SQRT_2;
    amps[1] = s * core::f64::consts::FRAC_1_SQRT_2;
    StateCoefficients::from_real(&amps)
}

/// How the three-time correlators are collected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LgProtocol {
    /// Every trial measures at `t_1`, `t_2` and `t_3`.
    #[default]
    Sequential,
    /// Each correlator `C_ij` comes from its own run that measures only at
    /// `t_i` and `t_j`.
    Pairwise,
}

impl LgProtocol {
    pub fn as_str(self) -> &'static str {
        match self {
            LgProtocol::Sequential => "sequential",
            LgProtocol::Pairwise => "pairwise",
        }
    }
}

/// Measurement model used for the dichotomic flux sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LgMeasurement {
    /// Kernel reductions in the full spectrum basis; results drawn from the
    /// outcome density on a fixed grid of `result_points`.
    Kernel {
        kernel: Kernel,
        result_points: usize,
    },
    /// Doublet-only model with exact projections onto the localized states
    /// `(φ_1 ± φ_2)/√2`.
    ProjectiveTwoLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeggettGargConfig {
    pub potential: Potential,
    pub tau_12: f64,
    pub tau_23: f64,
    pub measurement: LgMeasurement,
    pub trials: usize,
    pub seed: u64,
    pub mode: ProbabilityMode,
    pub protocol: LgProtocol,
}

impl LeggettGargConfig {
    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        if !matches!(self.potential, Potential::DoubleWell { .. }) {
            return Err(Error::invalid("potential.kind", "Leggett-Garg runs need a double well"));
        }
        if !(self.tau_12.is_finite() && self.tau_12 > 0.0) {
            return Err(Error::invalid("lg.tau12", "must be > 0"));
        }
        if !(self.tau_23.is_finite() && self.tau_23 > 0.0) {
            return Err(Error::invalid("lg.tau23", "must be > 0"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("lg.trials", "need at least one trial"));
        }
        if let LgMeasurement::Kernel {
            kernel,
            result_points,
        } = self.measurement
        {
            kernel.validate()?;
            if result_points < 3 {
                return Err(Error::invalid("lg.result_points", "need at least 3 points"));
            }
        }
        Ok(())
    }
}

/// Dichotomic outcomes of one trial: `(q_i, q_j)` for the pairs 12, 23, 13.
/// In the sequential protocol the three pairs share the same three values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub pairs: [[i8; 2]; 3],
    /// Results that were exactly zero (assigned `q = +1`).
    pub zero_signs: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeggettGargResult {
    pub c12: f64,
    pub c23: f64,
    pub c13: f64,
    pub se12: f64,
    pub se23: f64,
    pub se13: f64,
    /// `K = C_12 + C_23 - C_13`.
    pub k: f64,
    pub se_k: f64,
    /// `K - 1 > 2 se_K`.
    pub violation: bool,
    pub zero_signs: u64,
    pub protocol: LgProtocol,
    pub trials: Vec<TrialOutcome>,
}

impl LeggettGargResult {
    pub fn from_trials(trials: Vec<TrialOutcome>, protocol: LgProtocol) -> Self {
        let t = trials.len() as f64;
        let stats = |pair: usize| {
            let mean = trials
                .iter()
                .map(|o| f64::from(o.pairs[pair][0] * o.pairs[pair][1]))
                .sum::<f64>()
                / t;
            (mean, standard_error(mean, 1.0, t))
        };
        let (c12, se12) = stats(0);
        let (c23, se23) = stats(1);
        let (c13, se13) = stats(2);
        let k = c12 + c23 - c13;
        let se_k = match protocol {
            LgProtocol::Pairwise => sqrt(se12 * se12 + se23 * se23 + se13 * se13),
            LgProtocol::Sequential => {
                let per: Vec<f64> = trials
                    .iter()
                    .map(|o| {
                        let p = |i: usize| f64::from(o.pairs[i][0] * o.pairs[i][1]);
                        p(0) + p(1) - p(2)
                    })
                    .collect();
                let second = per.iter().map(|v| v * v).sum::<f64>() / t;
                standard_error(k, second, t)
            }
        };
        let zero_signs = trials.iter().map(|o| u64::from(o.zero_signs)).sum();
        Self {
            c12,
            c23,
            c13,
            se12,
            se23,
            se13,
            k,
            se_k,
            violation: k - 1.0 > 2.0 * se_k,
            zero_signs,
            protocol,
            trials,
        }
    }
}

/// Standard error of a mean from its first and second sample moments.
fn standard_error(mean: f64, second: f64, n: f64) -> f64 {
    if n < 2.0 {
        return 0.0;
    }
    let var = ((second - mean * mean) * n / (n - 1.0)).max(0.0);
    sqrt(var / n)
}

/// Precomputed per-run data; trials are independent given their index.
#[derive(Debug, Clone)]
pub struct LgPlan {
    config: LeggettGargConfig,
    model: LgModel,
    initial: Vec<Complex64>,
}

#[derive(Debug, Clone)]
enum LgModel {
    Kernel {
        energies: Vec<f64>,
        hbar: f64,
        grid: ResultGrid,
        matrices: Vec<KernelMatrix>,
    },
    TwoLevel {
        energies: [f64; 2],
        hbar: f64,
        /// Right-localized state in the doublet basis.
        right: [f64; 2],
    },
}

impl LgPlan {
    pub fn new(config: &LeggettGargConfig, spectrum: &Spectrum) -> Result<Self> {
        config.validate()?;
        let initial = left_localized(spectrum)?;
        let (model, initial) = match config.measurement {
            LgMeasurement::Kernel {
                kernel,
                result_points,
            } => {
                let g = spectrum.grid();
                let center = 0.5 * (g.x_min() + g.x_max());
                let half = 0.5 * (g.x_max() - g.x_min()) + 6.0 * kernel.width();
                let grid = ResultGrid::centered(center, half, result_points)?;
                let matrices = grid.points().map(|a| kernel_matrix(spectrum, &kernel, a)).collect();
                (
                    LgModel::Kernel {
                        energies: spectrum.energies().to_vec(),
                        hbar: spectrum.hbar(),
                        grid,
                        matrices,
                    },
                    initial.amps().to_vec(),
                )
            }
            LgMeasurement::ProjectiveTwoLevel => {
                let left = initial.amps();
                let right = [left[0].re, -left[1].re];
                (
                    LgModel::TwoLevel {
                        energies: [spectrum.energy(1), spectrum.energy(2)],
                        hbar: spectrum.hbar(),
                        right,
                    },
                    left[..2].to_vec(),
                )
            }
        };
        Ok(Self {
            config: config.clone(),
            model,
            initial,
        })
    }

    pub fn config(&self) -> &LeggettGargConfig {
        &self.config
    }

    /// Runs trial `index` on its own derived stream.
    pub fn trial(&self, index: usize) -> Result<TrialOutcome> {
        let mut rng = rng::stream(rng::derive_seed(self.config.seed, index as u64));
        let (t12, t23) = (self.config.tau_12, self.config.tau_23);
        let mut zeros = 0u32;
        let mut measure = |c: &mut Vec<Complex64>, rng: &mut rng::Stream| -> Result<i8> {
            let (q, zero) = self.measure(c, rng)?;
            zeros += u32::from(zero);
            Ok(q)
        };
        let pairs = match self.config.protocol {
            LgProtocol::Sequential => {
                let mut c = self.initial.clone();
                let q1 = measure(&mut c, &mut rng)?;
                self.evolve(&mut c, t12);
                let q2 = measure(&mut c, &mut rng)?;
                self.evolve(&mut c, t23);
                let q3 = measure(&mut c, &mut rng)?;
                [[q1, q2], [q2, q3], [q1, q3]]
            }
            LgProtocol::Pairwise => {
                let mut c = self.initial.clone();
                let a1 = measure(&mut c, &mut rng)?;
                self.evolve(&mut c, t12);
                let a2 = measure(&mut c, &mut rng)?;

                let mut c = self.initial.clone();
                self.evolve(&mut c, t12);
                let b2 = measure(&mut c, &mut rng)?;
                self.evolve(&mut c, t23);
                let b3 = measure(&mut c, &mut rng)?;

                let mut c = self.initial.clone();
                let d1 = measure(&mut c, &mut rng)?;
                self.evolve(&mut c, t12 + t23);
                let d3 = measure(&mut c, &mut rng)?;
                [[a1, a2], [b2, b3], [d1, d3]]
            }
        };
        Ok(TrialOutcome {
            pairs,
            zero_signs: zeros,
        })
    }

    fn evolve(&self, c: &mut [Complex64], dt: f64) {
        let (energies, hbar): (&[f64], f64) = match &self.model {
            LgModel::Kernel { energies, hbar, .. } => (energies, *hbar),
            LgModel::TwoLevel { energies, hbar, .. } => (energies, *hbar),
        };
        for (a, e) in c.iter_mut().zip(energies) {
            let theta = e * dt / hbar;
            *a *= Complex64::new(crate::math::cos(theta), -sin(theta));
        }
    }

    /// Samples one result, collapses `c` (normalized) and returns
    /// `(sign, result was exactly zero)`.
    fn measure(&self, c: &mut Vec<Complex64>, rng: &mut rng::Stream) -> Result<(i8, bool)> {
        match &self.model {
            LgModel::TwoLevel { right, .. } => {
                let overlap = c[0] * right[0] + c[1] * right[1];
                let p_right = overlap.norm_sqr();
                if rng::uniform(rng) < p_right {
                    *c = vec![Complex64::new(right[0], 0.0), Complex64::new(right[1], 0.0)];
                    Ok((1, false))
                } else {
                    *c = vec![Complex64::new(right[1], 0.0), Complex64::new(-right[0], 0.0)];
                    Ok((-1, false))
                }
            }
            LgModel::Kernel { grid, matrices, .. } => {
                let state = StateCoefficients::new(c.clone())?;
                let weights: Vec<f64> = matrices
                    .iter()
                    .map(|w| self.config.mode.weight(sq_norm(&w.apply(&state))))
                    .collect();
                if !weights.iter().any(|w| *w > 0.0) {
                    return Err(Error::DegenerateDensity);
                }
                let j = sample_index(&weights, rng);
                let a = grid.point(j);
                let next = matrices[j].apply(&state);
                let (next, _) = crate::measurement::renormalize(&next)
                    .map_err(|_| Error::AnnihilatedState { result: a })?;
                *c = next.into_amps();
                Ok((if a >= 0.0 { 1 } else { -1 }, a == 0.0))
            }
        }
    }

    /// All trials in order.
    pub fn run(&self) -> Result<LeggettGargResult> {
        let trials = (0..self.config.trials)
            .map(|i| self.trial(i))
            .collect::<Result<Vec<_>>>()?;
        Ok(LeggettGargResult::from_trials(trials, self.config.protocol))
    }
}

fn sq_norm(c: &StateCoefficients) -> f64 {
    c.amps().iter().map(|a| a.norm_sqr()).sum()
}

/// Monte Carlo estimate of the three-time flux-sign correlators.
pub fn leggett_garg_run(config: &LeggettGargConfig, spectrum: &Spectrum) -> Result<LeggettGargResult> {
    LgPlan::new(config, spectrum)?.run()
}

/// `K(τ) = 2 cos(ω τ) - cos(2 ω τ)` for equal spacings with projective
/// measurements of a two-level system with Bohr frequency `ω`.
pub fn two_level_lg_parameter(omega: f64, tau: f64) -> f64 {
    2.0 * crate::math::cos(omega * tau) - crate::math::cos(2.0 * omega * tau)
}
