//! Experiment dispatch.

use std::io;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use qnd_core::coupled::{coupled_sequence, CoupledSystem};
use qnd_core::experiments::{
    commutator_amplitude, left_localized, LeggettGargConfig, LeggettGargResult, LgMeasurement,
    LgPlan, LgProtocol, ScanPlan,
};
use qnd_core::sequence::{
    open_dt_grid, run_sequence, ResultGridSpec, ResultPolicy, SequenceConfig, SequenceFailure,
    UncertaintyCurve,
};
use qnd_core::spectral::{
    auto_spectrum, build_hamiltonian, reformation_time, solve_spectrum, Grid1D, Potential,
    Spectrum,
};
use qnd_core::state::StateCoefficients;

use crate::config::{
    ConfigError, DtGridSpec, Experiment, InitialSpec, LgMeasurementSpec, PolicySpec, RunConfig,
};
use crate::output::{num, sha256_hex, Artifacts, RunManifest, Timing};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] qnd_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("could not start the worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl RunError {
    /// 2 config, 3 solver failure, 4 degenerate run, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Core(e) => match e {
                qnd_core::Error::InvalidInput { .. } => 2,
                qnd_core::Error::SolverFailure { .. } | qnd_core::Error::Degeneracy { .. } => 3,
                qnd_core::Error::AnnihilatedState { .. } | qnd_core::Error::DegenerateDensity => 4,
            },
            RunError::Io(_) | RunError::Pool(_) => 1,
        }
    }
}

/// Runs `config`, writing artifacts and `manifest.json` into `out`.
/// `threads = 0` lets the pool pick its size; it never changes results.
pub fn dispatch(config: &RunConfig, out: &Path, threads: usize) -> Result<RunManifest, RunError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let start = Instant::now();
    let mut artifacts = Artifacts::new(out)?;
    let (diagnostics, results) = pool.install(|| match config.experiment {
        Experiment::Spectrum => run_spectrum(config, &mut artifacts),
        Experiment::QndHarmonic | Experiment::SquidScan => run_scan(config, &mut artifacts),
        Experiment::Sequence => run_sequence_experiment(config, &mut artifacts),
        Experiment::LeggettGarg => run_leggett_garg(config, &mut artifacts),
        Experiment::Coupled => run_coupled(config, &mut artifacts),
    })?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: config.experiment.to_string(),
        config: config.document.echo(),
        config_sha256: sha256_hex(&config.document.canonical()),
        seed: config.seed,
        artifacts: artifacts.names().to_vec(),
        timing: Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
            threads: pool.current_num_threads(),
        },
        diagnostics,
        results,
    };
    manifest.write(out)?;
    Ok(manifest)
}

type Outcome = Result<(Value, Value), RunError>;

pub fn build_spectrum(config: &RunConfig) -> Result<Spectrum, qnd_core::Error> {
    match config.grid {
        Some((half, n)) => {
            let grid = Grid1D::symmetric(half, n)?;
            solve_spectrum(&build_hamiltonian(grid, &config.potential, config.hbar)?, config.levels)
        }
        None => auto_spectrum(&config.potential, config.levels, config.hbar),
    }
}

fn spectrum_diagnostics(s: &Spectrum) -> Value {
    json!({
        "levels": s.levels(),
        "grid_points": s.grid().len(),
        "grid_half_width": s.grid().x_max(),
        "energy_estimate": format!("{:?}", s.estimate()).to_lowercase(),
        "worst_residual": s.worst_residual(),
        "tail_mass": s.tail_mass(),
        "tail_warning": s.tail_warning(),
    })
}

fn initial_state(config: &RunConfig, s: &Spectrum) -> Result<StateCoefficients, qnd_core::Error> {
    match config.initial {
        InitialSpec::Level(k) => StateCoefficients::basis(s.levels(), k),
        InitialSpec::Left => left_localized(s),
    }
}

fn policy(config: &RunConfig) -> ResultPolicy {
    match config.policy {
        PolicySpec::MostProbable => ResultPolicy::MostProbable,
        PolicySpec::Sampled => ResultPolicy::Sampled { seed: config.seed },
        PolicySpec::Fixed => ResultPolicy::Fixed(config.results.clone()),
    }
}

fn sequence_config(config: &RunConfig, dt: f64) -> SequenceConfig {
    SequenceConfig {
        kernel: config.kernel,
        quiescent_time: dt,
        measurements: config.measurements,
        result_grid: ResultGridSpec::Auto {
            points: config.result_points,
        },
        mode: config.mode,
        policy: policy(config),
    }
}

fn run_spectrum(config: &RunConfig, out: &mut Artifacts) -> Outcome {
    let s = build_spectrum(config)?;
    out.csv(
        "energies.csv",
        &["level", "energy", "discrete_energy"],
        (1..=s.levels()).map(|k| {
            vec![
                k.to_string(),
                num(s.energy(k)),
                num(s.discrete_energies()[k - 1]),
            ]
        }),
    )?;
    let mut header = vec!["x".to_string()];
    header.extend((1..=s.levels()).map(|k| format!("phi_{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "states.csv",
        &header,
        (0..s.grid().len()).map(|i| {
            let mut row = vec![num(s.grid().point(i))];
            row.extend((1..=s.levels()).map(|k| num(s.state(k)[i])));
            row
        }),
    )?;
    let mut results = json!({ "energies": s.energies() });
    if let Potential::Harmonic { omega, .. } = config.potential {
        results["max_relative_error_vs_oscillator"] =
            json!(qnd_core::experiments::HarmonicScan::oracle_deviation(&s, omega));
    }
    if s.levels() >= 2 {
        if let Ok(t) = reformation_time(&s, 1, 2) {
            results["t12"] = json!(t);
        }
    }
    Ok((spectrum_diagnostics(&s), results))
}

/// Scan plan for the qnd-harmonic and squid-scan experiments.
pub fn scan_plan(config: &RunConfig) -> Result<(ScanPlan, Option<f64>), qnd_core::Error> {
    let spectrum = build_spectrum(config)?;
    let t12 = if spectrum.levels() >= 2 {
        Some(reformation_time(&spectrum, 1, 2)?)
    } else {
        None
    };
    let dt_grid = match &config.dt_grid {
        DtGridSpec::Explicit(list) => list.clone(),
        DtGridSpec::Open { dt_max, points } => open_dt_grid(*dt_max, *points),
        DtGridSpec::Periods { span, points } => {
            let t = t12.ok_or_else(|| qnd_core::Error::InvalidInput {
                field: "scan.span",
                reason: "a period-based grid needs M >= 2".into(),
            })?;
            open_dt_grid(span * t, *points)
        }
    };
    qnd_core::sequence::validate_dt_grid(&dt_grid)?;
    let initial = initial_state(config, &spectrum)?;
    let seq = sequence_config(config, dt_grid[0]);
    seq.validate()?;
    Ok((
        ScanPlan {
            spectrum,
            initial,
            config: seq,
            dt_grid,
        },
        t12,
    ))
}

/// Evaluates every grid point on the current pool; order is preserved.
pub fn run_plan(plan: &ScanPlan) -> UncertaintyCurve {
    let results = (0..plan.dt_grid.len())
        .into_par_iter()
        .map(|i| plan.point(i))
        .collect();
    plan.assemble(results)
}

pub fn write_curve(curve: &UncertaintyCurve, out: &mut Artifacts) -> io::Result<()> {
    out.csv(
        "curve.csv",
        &["dt", "da_eff", "a_tilde", "leak"],
        curve.points.iter().map(|p| {
            vec![
                num(p.quiescent_time),
                num(p.effective_uncertainty),
                num(p.most_probable),
                num(p.leak),
            ]
        }),
    )
}

fn run_scan(config: &RunConfig, out: &mut Artifacts) -> Outcome {
    let (plan, t12) = scan_plan(config)?;
    let curve = run_plan(&plan);
    write_curve(&curve, out)?;
    let minimum = curve.global_minimum().map(|i| {
        let p = &curve.points[i];
        json!({ "dt": p.quiescent_time, "da_eff": p.effective_uncertainty })
    });
    let minima: Vec<Value> = curve
        .local_minima()
        .into_iter()
        .map(|i| {
            let p = &curve.points[i];
            json!({ "dt": p.quiescent_time, "da_eff": p.effective_uncertainty })
        })
        .collect();
    let failures: Vec<Value> = curve
        .failures
        .iter()
        .map(|f| json!({ "index": f.index, "dt": f.quiescent_time, "error": f.error.to_string() }))
        .collect();
    let mut results = json!({
        "global_minimum": minimum,
        "local_minima": minima,
        "t12": t12,
        "points": curve.points.len(),
    });
    if let Potential::Harmonic { mass, omega } = config.potential {
        results["half_period"] = json!(std::f64::consts::PI / omega);
        if let Some(i) = curve.global_minimum() {
            results["commutator_at_minimum"] = json!(commutator_amplitude(
                mass,
                omega,
                config.hbar,
                curve.points[i].quiescent_time
            ));
        }
    }
    let max_leak = curve.points.iter().map(|p| p.leak).fold(0.0, f64::max);
    let competing = curve.points.iter().filter(|p| p.competing_peak).count();
    let mut diagnostics = spectrum_diagnostics(&plan.spectrum);
    diagnostics["max_leak"] = json!(max_leak);
    diagnostics["competing_peak_points"] = json!(competing);
    diagnostics["failures"] = json!(failures);
    diagnostics["probability_mode"] = json!(curve.mode.as_str());
    Ok((diagnostics, results))
}

fn write_record(run_steps: &[qnd_core::sequence::StepReport], dt: f64, out: &mut Artifacts) -> io::Result<()> {
    out.csv(
        "record.csv",
        &["k", "t_k", "a_k", "da_eff_k", "leak_k"],
        run_steps.iter().enumerate().map(|(k, s)| {
            vec![
                k.to_string(),
                num(k as f64 * dt),
                num(s.result),
                num(s.effective_uncertainty),
                num(s.leak),
            ]
        }),
    )
}

fn run_sequence_experiment(config: &RunConfig, out: &mut Artifacts) -> Outcome {
    let spectrum = build_spectrum(config)?;
    let initial = initial_state(config, &spectrum)?;
    let dt = config.dt.expect("validated");
    let seq = sequence_config(config, dt);
    match run_sequence(&spectrum, &initial, &seq) {
        Ok(run) => {
            write_record(&run.steps, dt, out)?;
            let mut diagnostics = spectrum_diagnostics(&spectrum);
            diagnostics["max_leak"] = json!(run.max_leak);
            diagnostics["competing_peaks"] =
                json!(run.steps.iter().filter(|s| s.competing_peak).count());
            diagnostics["probability_mode"] = json!(run.mode.as_str());
            let results = json!({
                "results": run.record.results,
                "effective_uncertainties": run.effective_uncertainties(),
                "log_likelihood": run.log_likelihood,
            });
            Ok((diagnostics, results))
        }
        Err(SequenceFailure { steps, error, .. }) => {
            // keep what was recorded before the failure
            write_record(&steps, dt, out)?;
            Err(error.into())
        }
    }
}

pub fn lg_plan(config: &RunConfig, spectrum: &Spectrum) -> Result<LgPlan, qnd_core::Error> {
    let t12 = reformation_time(spectrum, 1, 2)?;
    let lg = &config.lg;
    let measurement = match lg.measurement {
        LgMeasurementSpec::Kernel => LgMeasurement::Kernel {
            kernel: config.kernel,
            result_points: lg.result_points,
        },
        LgMeasurementSpec::Projective => LgMeasurement::ProjectiveTwoLevel,
    };
    let cfg = LeggettGargConfig {
        potential: config.potential.clone(),
        tau_12: lg.tau_12.unwrap_or(t12 / 6.0),
        tau_23: lg.tau_23.unwrap_or(t12 / 6.0),
        measurement,
        trials: lg.trials,
        seed: config.seed,
        mode: config.mode,
        protocol: lg.protocol,
    };
    LgPlan::new(&cfg, spectrum)
}

/// All trials on the current pool, in index order.
pub fn run_lg_plan(plan: &LgPlan) -> Result<LeggettGargResult, qnd_core::Error> {
    let trials = (0..plan.config().trials)
        .into_par_iter()
        .map(|i| plan.trial(i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LeggettGargResult::from_trials(trials, plan.config().protocol))
}

fn run_leggett_garg(config: &RunConfig, out: &mut Artifacts) -> Outcome {
    let spectrum = build_spectrum(config)?;
    let plan = lg_plan(config, &spectrum)?;
    let r = run_lg_plan(&plan)?;
    let q = |v: i8| v.to_string();
    match r.protocol {
        LgProtocol::Sequential => out.csv(
            "trials.csv",
            &["trial", "q1", "q2", "q3"],
            r.trials.iter().enumerate().map(|(i, t)| {
                vec![i.to_string(), q(t.pairs[0][0]), q(t.pairs[0][1]), q(t.pairs[1][1])]
            }),
        )?,
        LgProtocol::Pairwise => out.csv(
            "trials.csv",
            &["trial", "q1_12", "q2_12", "q2_23", "q3_23", "q1_13", "q3_13"],
            r.trials.iter().enumerate().map(|(i, t)| {
                let mut row = vec![i.to_string()];
                row.extend(t.pairs.iter().flat_map(|p| [q(p[0]), q(p[1])]));
                row
            }),
        )?,
    }
    let t12 = reformation_time(&spectrum, 1, 2)?;
    let report = json!({
        "protocol": r.protocol.as_str(),
        "measurement": match plan.config().measurement {
            LgMeasurement::Kernel { .. } => "kernel",
            LgMeasurement::ProjectiveTwoLevel => "projective-two-level",
        },
        "tau12": plan.config().tau_12,
        "tau23": plan.config().tau_23,
        "t12": t12,
        "trials": r.trials.len(),
        "c12": r.c12, "se12": r.se12,
        "c23": r.c23, "se23": r.se23,
        "c13": r.c13, "se13": r.se13,
        "k": r.k, "se_k": r.se_k,
        "violation": r.violation,
    });
    out.json("lg_report.json", &report)?;
    let mut diagnostics = spectrum_diagnostics(&spectrum);
    diagnostics["zero_results_counted_positive"] = json!(r.zero_signs);
    Ok((diagnostics, report))
}

fn run_coupled(config: &RunConfig, out: &mut Artifacts) -> Outcome {
    let spec = &config.coupled;
    let system = CoupledSystem::new(spec.config)?;
    let policy = match config.policy {
        PolicySpec::Sampled => ResultPolicy::Sampled { seed: config.seed },
        _ => ResultPolicy::MostProbable,
    };
    let trace = coupled_sequence(&system, spec.measurements, spec.dt, &policy, config.mode)?;
    let first = vec!["0".to_string(), String::new(), num(trace.initial_indirect), num(0.0)];
    out.csv(
        "trace.csv",
        &["k", "a1_k", "indirect_spread_k", "leak_k"],
        std::iter::once(first).chain(trace.steps.iter().enumerate().map(|(k, s)| {
            vec![
                (k + 1).to_string(),
                num(s.result),
                num(s.indirect_uncertainty),
                num(s.leak),
            ]
        })),
    )?;
    let (lo, hi) = qnd_core::coupled::normal_mode_frequencies(&spec.config);
    let mut results = json!({
        "indirect_uncertainty_definition": "sqrt(2 Var x2) of the conditioned state",
        "indirect_uncertainties": trace.indirect_uncertainties(),
        "results": trace.steps.iter().map(|s| s.result).collect::<Vec<_>>(),
        "direct_uncertainties": trace.steps.iter().map(|s| s.direct_uncertainty).collect::<Vec<_>>(),
        "normal_mode_frequencies": [lo, hi],
    });
    if let Some(da2) = spec.da2 {
        results["experimental_mode2_outcome_spread"] =
            json!(system.mode2_outcome_spread(&trace.final_state, da2, 801)?);
    }
    let diagnostics = json!({
        "dimension": spec.config.dim(),
        "max_leak": trace.max_leak(),
        "leak_warnings": trace.steps.iter().filter(|s| s.warning).count(),
        "probability_mode": config.mode.as_str(),
    });
    Ok((diagnostics, results))
}
