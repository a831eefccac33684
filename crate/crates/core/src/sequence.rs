//! Alternating impulsive measurements and free evolution in an energy
//! eigenbasis.
//!
//! A run measures at `t = 0` (result `a_0`) and then repeats free evolution
//! over the quiescent time followed by another measurement, `N` times:
//! `c ← W(a_N) U(ΔT) ⋯ W(a_1) U(ΔT) W(a_0) c⁽⁰⁾`. Before each measurement the
//! outcome density over a result grid gives the effective uncertainty and the
//! most probable result.

use alloc::vec::Vec;

use num_complex::Complex64;
use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::math::{cos, exp, ln, sin, sqrt};
use crate::measurement::{synthesize, Kernel};
use crate::rng;
use crate::spectral::Spectrum;
use crate::state::{norm_of, StateCoefficients};

/// Default number of points in an automatic result grid.
pub const DEFAULT_RESULT_POINTS: usize = 801;
/// Weights within this relative distance of the maximum count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Exponent applied to `‖W(a) c‖²` when forming the outcome density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbabilityMode {
    /// `P(a) ∝ ‖W(a)c‖²`; reproduces `Δa_eff = Δa` in the classical limit.
    #[default]
    Linear,
    /// `P(a) ∝ (‖W(a)c‖²)²`, the squared-norm expression taken literally.
    Literal,
}

impl ProbabilityMode {
    pub fn exponent(self) -> i32 {
        match self {
            ProbabilityMode::Linear => 1,
            ProbabilityMode::Literal => 2,
        }
    }

    /// Density weight for a filtered squared norm.
    pub fn weight(self, norm_sq: f64) -> f64 {
        match self {
            ProbabilityMode::Linear => norm_sq,
            ProbabilityMode::Literal => norm_sq * norm_sq,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProbabilityMode::Linear => "linear",
            ProbabilityMode::Literal => "literal",
        }
    }
}

/// Uniform grid of candidate measurement results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultGrid {
    start: f64,
    end: f64,
    points: usize,
}

impl ResultGrid {
    pub fn new(start: f64, end: f64, points: usize) -> Result<Self> {
        if points < 3 {
            return Err(Error::invalid("sequence.result_points", "need at least 3 points"));
        }
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::invalid("sequence.result_grid", "need finite end > start"));
        }
        Ok(Self { start, end, points })
    }

    /// Grid centered on `center` spanning `±half_width`.
    pub fn centered(center: f64, half_width: f64, points: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, points)
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.end - self.start) / (self.points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        let center = 0.5 * (self.start + self.end);
        center + (i as f64 - 0.5 * (self.points - 1) as f64) * self.step()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |i| self.point(i))
    }

    fn trapezoid(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.points {
            0.5
        } else {
            1.0
        }
    }
}

/// How the result grid of each step is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResultGridSpec {
    /// Centered on the current `⟨x⟩` with half-width
    /// `6 max(Δa, position spread)`.
    Auto { points: usize },
    Fixed(ResultGrid),
}

impl Default for ResultGridSpec {
    fn default() -> Self {
        ResultGridSpec::Auto {
            points: DEFAULT_RESULT_POINTS,
        }
    }
}

/// Unnormalized outcome density `P(a)` on a result grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDensity {
    grid: ResultGrid,
    weights: Vec<f64>,
    mode: ProbabilityMode,
}

impl OutcomeDensity {
    pub fn new(grid: ResultGrid, weights: Vec<f64>, mode: ProbabilityMode) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::invalid("weights", "one weight per grid point"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights", "weights must be finite and >= 0"));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::DegenerateDensity);
        }
        Ok(Self {
            grid,
            weights,
            mode,
        })
    }

    pub fn grid(&self) -> &ResultGrid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mode(&self) -> ProbabilityMode {
        self.mode
    }

    /// Index of the grid argmax; ties go to the smallest `|a|`, then the
    /// smaller `a`.
    pub fn most_probable_index(&self) -> usize {
        let max = self.weights.iter().copied().fold(0.0, f64::max);
        let floor = max * (1.0 - TIE_TOLERANCE);
        let mut best: Option<usize> = None;
        for (i, &w) in self.weights.iter().enumerate() {
            if w < floor {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let (a, ab) = (self.grid.point(i), self.grid.point(b));
                    if a.abs() < ab.abs() || (a.abs() == ab.abs() && a < ab) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best.unwrap()
    }

    /// True when a second, separate local maximum reaches 99% of the
    /// chosen peak, so the argmax is a tie-break between modes.
    pub fn has_competing_peak(&self) -> bool {
        let top = self.most_probable_index();
        let max = self.weights[top];
        let w = &self.weights;
        let n = w.len();
        (0..n).any(|i| {
            if i == top || w[i] < 0.99 * max {
                return false;
            }
            let left = i == 0 || w[i] >= w[i - 1];
            let right = i + 1 == n || w[i] >= w[i + 1];
            if !(left && right) {
                return false;
            }
            // separated from the chosen peak by a dip below 99%
            let (lo, hi) = if i < top { (i, top) } else { (top, i) };
            w[lo..=hi].iter().any(|&v| v < 0.99 * max)
        })
    }

    fn total(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.grid.trapezoid(i))
            .sum()
    }

    /// Trapezoid mean of the normalized density.
    pub fn mean(&self) -> f64 {
        let s: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.grid.trapezoid(i) * self.grid.point(i))
            .sum();
        s / self.total()
    }

    /// Trapezoid variance of the normalized density.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let s: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let d = self.grid.point(i) - mu;
                w * self.grid.trapezoid(i) * d * d
            })
            .sum();
        s / self.total()
    }
}

/// Most probable result `ã` (see [`OutcomeDensity::most_probable_index`]).
pub fn most_probable(density: &OutcomeDensity) -> f64 {
    density.grid.point(density.most_probable_index())
}

/// `Δa_eff = sqrt(2 Σ (a - ã)² P(a) / Σ P(a))` with trapezoid weights.
pub fn effective_uncertainty(density: &OutcomeDensity, a_tilde: f64) -> f64 {
    let s: f64 = density
        .weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let d = density.grid.point(i) - a_tilde;
            w * density.grid.trapezoid(i) * d * d
        })
        .sum();
    sqrt(2.0 * s / density.total())
}

/// Draws a grid point with probability proportional to its weight.
pub fn sample_result<R: RngCore + ?Sized>(density: &OutcomeDensity, rng: &mut R) -> f64 {
    density.grid.point(sample_index(&density.weights, rng))
}

pub(crate) fn sample_index<R: RngCore + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng::uniform(rng) * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if acc > target && w > 0.0 {
            return i;
        }
    }
    last_positive
}

/// Diagonal of `exp(-i H ΔT / ħ)` in the spectrum basis.
pub fn free_propagator(spectrum: &Spectrum, dt: f64) -> Vec<Complex64> {
    let hbar = spectrum.hbar();
    spectrum
        .energies()
        .iter()
        .map(|e| {
            let theta = e * dt / hbar;
            Complex64::new(cos(theta), -sin(theta))
        })
        .collect()
}

/// `U(ΔT) c`.
pub fn evolve(c: &StateCoefficients, spectrum: &Spectrum, dt: f64) -> StateCoefficients {
    let u = free_propagator(spectrum, dt);
    StateCoefficients::from_raw(c.amps().iter().zip(&u).map(|(a, p)| a * p).collect())
}

/// Kernel reach, in widths, used when evaluating outcome densities.
const DENSITY_SUPPORT: f64 = 12.0;

/// Applies `W(a)` to states synthesized on the grid, reusing the synthesis
/// across many candidate results.
pub(crate) struct Filter<'a> {
    spectrum: &'a Spectrum,
    kernel: Kernel,
    psi: Vec<Complex64>,
    weights: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

pub(crate) struct Filtered {
    pub amps: Vec<Complex64>,
    /// `‖w_a ψ‖²` on the grid (before projection).
    pub grid_norm_sq: f64,
}

impl<'a> Filter<'a> {
    pub fn new(spectrum: &'a Spectrum, kernel: Kernel, c: &StateCoefficients) -> Self {
        Self {
            spectrum,
            kernel,
            psi: synthesize(spectrum, c),
            weights: Vec::new(),
            re: Vec::new(),
            im: Vec::new(),
        }
    }

    /// `⟨x⟩` and position spread of the synthesized state.
    pub fn position_moments(&self) -> (f64, f64) {
        let grid = self.spectrum.grid();
        let (mut m0, mut m1) = (0.0, 0.0);
        for (i, p) in self.psi.iter().enumerate() {
            let w = p.norm_sqr() * grid.trapezoid_weight(i);
            m0 += w;
            m1 += w * grid.point(i);
        }
        let mean = m1 / m0;
        let var: f64 = self
            .psi
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d = grid.point(i) - mean;
                p.norm_sqr() * grid.trapezoid_weight(i) * d * d
            })
            .sum::<f64>()
            / m0;
        (mean, sqrt(var.max(0.0)))
    }

    pub fn apply(&mut self, a: f64) -> Filtered {
        let grid = self.spectrum.grid();
        let range = grid.index_range(a - self.kernel.support(), a + self.kernel.support());
        self.weights.clear();
        self.weights
            .extend(range.clone().map(|i| self.kernel.weight(grid.point(i), a)));
        self.project(range.start)
    }

    /// `‖W(a) c‖²` for a density. Points where the kernel weight is below
    /// `exp(-72)` of its peak are skipped, and Gaussian weights come from a
    /// multiplicative recurrence outward from the point nearest `a`.
    pub fn density_weight(&mut self, a: f64) -> f64 {
        let grid = self.spectrum.grid();
        let support = self.kernel.support().min(DENSITY_SUPPORT * self.kernel.width());
        let range = grid.index_range(a - support, a + support);
        self.weights.clear();
        self.weights.resize(range.len(), 0.0);
        match self.kernel {
            Kernel::Gaussian { width } if !range.is_empty() => {
                let h = grid.spacing();
                let s = 1.0 / (2.0 * width * width);
                let q = exp(-2.0 * h * h * s);
                let start = range.start;
                let nearest = ((a - grid.point(start)) / h)
                    .round()
                    .clamp(0.0, (range.len() - 1) as f64) as usize;
                let d0 = grid.point(start + nearest) - a;
                self.weights[nearest] = exp(-d0 * d0 * s);
                // w(d + h)/w(d) = exp(-(2 d h + h²) s), each step multiplies the ratio by q
                let mut w = self.weights[nearest];
                let mut r = exp(-(2.0 * d0 * h + h * h) * s);
                for j in nearest + 1..range.len() {
                    w *= r;
                    r *= q;
                    self.weights[j] = w;
                }
                let mut w = self.weights[nearest];
                let mut r = exp(-(-2.0 * d0 * h + h * h) * s);
                for j in (0..nearest).rev() {
                    w *= r;
                    r *= q;
                    self.weights[j] = w;
                }
            }
            _ => {
                for (j, i) in range.clone().enumerate() {
                    self.weights[j] = self.kernel.weight(grid.point(i), a);
                }
            }
        }
        let f = self.project(range.start);
        f.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Projects `w ψ` (weights starting at grid index `start`) on the levels.
    fn project(&mut self, start: usize) -> Filtered {
        let grid = self.spectrum.grid();
        let m = self.spectrum.levels();
        self.re.clear();
        self.re.resize(m, 0.0);
        self.im.clear();
        self.im.resize(m, 0.0);
        let mut grid_norm_sq = 0.0;
        for (j, &w) in self.weights.iter().enumerate() {
            let i = start + j;
            let g = self.psi[i] * w;
            let tw = grid.trapezoid_weight(i);
            grid_norm_sq += g.norm_sqr() * tw;
            let g = g * tw;
            let phi = self.spectrum.point_row(i);
            for ((re, im), p) in self.re.iter_mut().zip(self.im.iter_mut()).zip(phi) {
                *re += p * g.re;
                *im += p * g.im;
            }
        }
        let amps = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| Complex64::new(*r, *i))
            .collect();
        Filtered { amps, grid_norm_sq }
    }
}

/// `W(a) c`, unnormalized.
pub fn measure(
    c: &StateCoefficients,
    a: f64,
    spectrum: &Spectrum,
    kernel: &Kernel,
) -> Result<StateCoefficients> {
    let out = Filter::new(spectrum, *kernel, c).apply(a).amps;
    if norm_of(&out) == 0.0 {
        return Err(Error::AnnihilatedState { result: a });
    }
    Ok(StateCoefficients::from_raw(out))
}

/// One factor pair `W(a) U(ΔT)` applied to `c`, unnormalized.
pub fn step(
    c: &StateCoefficients,
    a: f64,
    spectrum: &Spectrum,
    kernel: &Kernel,
    dt: f64,
) -> Result<StateCoefficients> {
    measure(&evolve(c, spectrum, dt), a, spectrum, kernel)
}

/// Outcome density of the next measurement for a state that has already been
/// evolved up to the measurement time.
pub fn conditional_density(
    c: &StateCoefficients,
    grid: &ResultGrid,
    spectrum: &Spectrum,
    kernel: &Kernel,
    mode: ProbabilityMode,
) -> Result<OutcomeDensity> {
    let mut filter = Filter::new(spectrum, *kernel, c);
    density_from_filter(&mut filter, grid, mode)
}

fn density_from_filter(
    filter: &mut Filter<'_>,
    grid: &ResultGrid,
    mode: ProbabilityMode,
) -> Result<OutcomeDensity> {
    let weights = grid
        .points()
        .map(|a| {
            mode.weight(filter.density_weight(a))
        })
        .collect();
    OutcomeDensity::new(*grid, weights, mode)
}

/// Result selection rule for [`run_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub enum ResultPolicy {
    MostProbable,
    /// Inverse-CDF draws from one ChaCha stream seeded with `seed`.
    Sampled { seed: u64 },
    /// Prescribed results `a_0, …, a_N`.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceConfig {
    pub kernel: Kernel,
    pub quiescent_time: f64,
    /// Number of measurements after `a_0`.
    pub measurements: usize,
    pub result_grid: ResultGridSpec,
    pub mode: ProbabilityMode,
    pub policy: ResultPolicy,
}

impl SequenceConfig {
    pub fn new(kernel: Kernel, quiescent_time: f64, measurements: usize) -> Self {
        Self {
            kernel,
            quiescent_time,
            measurements,
            result_grid: ResultGridSpec::default(),
            mode: ProbabilityMode::Linear,
            policy: ResultPolicy::MostProbable,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.quiescent_time.is_finite() && self.quiescent_time > 0.0) {
            return Err(Error::invalid("sequence.dt", "quiescent time must be > 0"));
        }
        if let ResultGridSpec::Auto { points } = self.result_grid {
            if points < 3 {
                return Err(Error::invalid("sequence.result_points", "need at least 3 points"));
            }
        }
        if let ResultPolicy::Fixed(results) = &self.policy {
            if results.len() != self.measurements + 1 {
                return Err(Error::invalid(
                    "sequence.results",
                    "fixed policy needs exactly N + 1 results",
                ));
            }
            if results.iter().any(|a| !a.is_finite()) {
                return Err(Error::invalid("sequence.results", "results must be finite"));
            }
        }
        Ok(())
    }
}

/// Ordered results of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub results: Vec<f64>,
    pub quiescent_time: f64,
    pub kernel: Kernel,
}

impl MeasurementRecord {
    /// Time of measurement `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.quiescent_time
    }
}

/// Diagnostics of one measurement in a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub result: f64,
    /// `Δa_eff` of the density the result was selected from.
    pub effective_uncertainty: f64,
    /// `ã` of that density.
    pub most_probable: f64,
    /// `1 - ‖W c‖² / ‖w_a ψ‖²_grid`: probability lost to basis truncation.
    pub leak: f64,
    /// `‖W(a) c‖ / ‖c‖` for the normalized incoming state.
    pub norm_ratio: f64,
    pub competing_peak: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRun {
    pub record: MeasurementRecord,
    pub steps: Vec<StepReport>,
    /// Normalized state after the last measurement.
    pub final_state: StateCoefficients,
    pub max_leak: f64,
    /// `ln ‖B c⁽⁰⁾‖²` for normalized `c⁽⁰⁾`: the record likelihood.
    pub log_likelihood: f64,
    pub mode: ProbabilityMode,
}

impl SequenceRun {
    pub fn effective_uncertainties(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.effective_uncertainty).collect()
    }
}

/// A run aborted by a module error, with everything recorded before it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error} (after {} recorded results)", record.results.len())]
pub struct SequenceFailure {
    pub record: MeasurementRecord,
    pub steps: Vec<StepReport>,
    pub error: Error,
}

/// Runs `N + 1` measurements separated by `ΔT`, starting at `t = 0`.
pub fn run_sequence(
    spectrum: &Spectrum,
    initial: &StateCoefficients,
    config: &SequenceConfig,
) -> Result<SequenceRun, SequenceFailure> {
    let mut record = MeasurementRecord {
        results: Vec::with_capacity(config.measurements + 1),
        quiescent_time: config.quiescent_time,
        kernel: config.kernel,
    };
    let mut steps = Vec::with_capacity(config.measurements + 1);
    let fail = |record: &MeasurementRecord, steps: &Vec<StepReport>, error| SequenceFailure {
        record: record.clone(),
        steps: steps.clone(),
        error,
    };

    if let Err(e) = config.validate() {
        return Err(fail(&record, &steps, e));
    }
    if initial.len() != spectrum.levels() {
        return Err(fail(
            &record,
            &steps,
            Error::invalid("initial", "state length must equal the basis size"),
        ));
    }
    let mut c = match crate::measurement::renormalize(initial) {
        Ok((c, _)) => c,
        Err(e) => return Err(fail(&record, &steps, e)),
    };

    let mut rng = match config.policy {
        ResultPolicy::Sampled { seed } => Some(rng::stream(seed)),
        _ => None,
    };
    let mut log_likelihood = 0.0;
    let mut max_leak = 0.0f64;

    for k in 0..=config.measurements {
        if k > 0 {
            c = evolve(&c, spectrum, config.quiescent_time);
        }
        let mut filter = Filter::new(spectrum, config.kernel, &c);
        let grid = match config.result_grid {
            ResultGridSpec::Fixed(g) => Ok(g),
            ResultGridSpec::Auto { points } => {
                let (mean, spread) = filter.position_moments();
                ResultGrid::centered(mean, 6.0 * config.kernel.width().max(spread), points)
            }
        };
        let density = match grid.and_then(|g| density_from_filter(&mut filter, &g, config.mode)) {
            Ok(d) => d,
            Err(e) => return Err(fail(&record, &steps, e)),
        };
        let a_tilde = most_probable(&density);
        let da_eff = effective_uncertainty(&density, a_tilde);
        let a = match (&config.policy, rng.as_mut()) {
            (ResultPolicy::MostProbable, _) => a_tilde,
            (ResultPolicy::Sampled { .. }, Some(r)) => sample_result(&density, r),
            (ResultPolicy::Fixed(list), _) => list[k],
            (ResultPolicy::Sampled { .. }, None) => unreachable!(),
        };

        let filtered = filter.apply(a);
        let norm = norm_of(&filtered.amps);
        if norm == 0.0 {
            return Err(fail(&record, &steps, Error::AnnihilatedState { result: a }));
        }
        let leak = if filtered.grid_norm_sq > 0.0 {
            (1.0 - norm * norm / filtered.grid_norm_sq).max(0.0)
        } else {
            0.0
        };
        max_leak = max_leak.max(leak);
        log_likelihood += 2.0 * ln(norm);
        c = StateCoefficients::from_raw(filtered.amps.iter().map(|x| x / norm).collect());

        record.results.push(a);
        steps.push(StepReport {
            result: a,
            effective_uncertainty: da_eff,
            most_probable: a_tilde,
            leak,
            norm_ratio: norm,
            competing_peak: density.has_competing_peak(),
        });
    }

    Ok(SequenceRun {
        record,
        steps,
        final_state: c,
        max_leak,
        log_likelihood,
        mode: config.mode,
    })
}

/// One sample of an [`UncertaintyCurve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub quiescent_time: f64,
    /// `Δa_eff` at the last (N-th) measurement.
    pub effective_uncertainty: f64,
    pub most_probable: f64,
    pub leak: f64,
    pub competing_peak: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveFailure {
    pub index: usize,
    pub quiescent_time: f64,
    pub error: Error,
}

/// Sampled map `ΔT ↦ Δa_eff`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyCurve {
    pub points: Vec<CurvePoint>,
    pub failures: Vec<CurveFailure>,
    pub mode: ProbabilityMode,
}

impl UncertaintyCurve {
    /// Collects per-point results in grid order.
    pub fn assemble(
        dt_grid: &[f64],
        results: Vec<Result<CurvePoint>>,
        mode: ProbabilityMode,
    ) -> Self {
        let mut points = Vec::new();
        let mut failures = Vec::new();
        for (index, (r, &dt)) in results.into_iter().zip(dt_grid).enumerate() {
            match r {
                Ok(p) => points.push(p),
                Err(error) => failures.push(CurveFailure {
                    index,
                    quiescent_time: dt,
                    error,
                }),
            }
        }
        Self {
            points,
            failures,
            mode,
        }
    }

    /// Index of the global minimum; among values equal to the minimum within
    /// a relative `1e-9`, the earliest point wins.
    pub fn global_minimum(&self) -> Option<usize> {
        let min = self
            .points
            .iter()
            .map(|p| p.effective_uncertainty)
            .fold(f64::INFINITY, f64::min);
        self.points
            .iter()
            .position(|p| p.effective_uncertainty <= min + 1e-9 * min.abs())
    }

    /// Interior local minima, deepest first.
    pub fn local_minima(&self) -> Vec<usize> {
        let v: Vec<f64> = self.points.iter().map(|p| p.effective_uncertainty).collect();
        let mut idx: Vec<usize> = (1..v.len().saturating_sub(1))
            .filter(|&i| v[i] < v[i - 1] && v[i] <= v[i + 1])
            .collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
        idx
    }
}

/// Evaluates one curve point: the run at quiescent time `dt` with the
/// sampling seed derived from `(seed, index)`.
pub fn curve_point(
    spectrum: &Spectrum,
    initial: &StateCoefficients,
    config: &SequenceConfig,
    dt: f64,
    index: usize,
) -> Result<CurvePoint> {
    let mut cfg = config.clone();
    cfg.quiescent_time = dt;
    if let ResultPolicy::Sampled { seed } = config.policy {
        cfg.policy = ResultPolicy::Sampled {
            seed: rng::derive_seed(seed, index as u64),
        };
    }
    let run = run_sequence(spectrum, initial, &cfg).map_err(|f| f.error)?;
    let last = run.steps.last().expect("a run records at least a_0");
    Ok(CurvePoint {
        quiescent_time: dt,
        effective_uncertainty: last.effective_uncertainty,
        most_probable: last.most_probable,
        leak: run.max_leak,
        competing_peak: last.competing_peak,
    })
}

/// Runs [`run_sequence`] for every `ΔT` in `dt_grid` and reports the last
/// step's `Δa_eff` and `ã`. Per-point errors are collected, not raised.
pub fn uncertainty_curve(
    spectrum: &Spectrum,
    initial: &StateCoefficients,
    config: &SequenceConfig,
    dt_grid: &[f64],
) -> Result<UncertaintyCurve> {
    validate_dt_grid(dt_grid)?;
    let results = dt_grid
        .iter()
        .enumerate()
        .map(|(i, &dt)| curve_point(spectrum, initial, config, dt, i))
        .collect();
    Ok(UncertaintyCurve::assemble(dt_grid, results, config.mode))
}

pub fn validate_dt_grid(dt_grid: &[f64]) -> Result<()> {
    if dt_grid.is_empty() {
        return Err(Error::invalid("scan.points", "ΔT grid must be nonempty"));
    }
    if dt_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::invalid("scan.dt", "quiescent times must be > 0"));
    }
    if dt_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("scan.dt", "quiescent times must be strictly increasing"));
    }
    Ok(())
}

/// `k · dt_max / points`, `k = 1..=points`: the grid over `(0, dt_max]`.
pub fn open_dt_grid(dt_max: f64, points: usize) -> Vec<f64> {
    (1..=points)
        .map(|k| dt_max * k as f64 / points as f64)
        .collect()
}

/// Leaked-probability helper for externally evolved states.
pub fn truncation_leak(spectrum: &Spectrum, psi: &[Complex64]) -> f64 {
    let c = crate::measurement::project(spectrum, psi);
    let g = crate::measurement::grid_norm(spectrum.grid(), psi);
    if g == 0.0 {
        return 0.0;
    }
    (1.0 - (c.norm() / g) * (c.norm() / g)).max(0.0)
}
