//! Flat `key = value` run configurations.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use qnd_core::experiments::LgProtocol;
use qnd_core::measurement::Kernel;
use qnd_core::sequence::ProbabilityMode;
use qnd_core::spectral::Potential;

/// Configuration problem, always naming the offending key.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("`{key}`: cannot parse `{value}` as {expected}")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("`{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<qnd_core::Error> for ConfigError {
    fn from(e: qnd_core::Error) -> Self {
        match e {
            qnd_core::Error::InvalidInput { field, reason } => ConfigError::Invalid {
                key: field.to_string(),
                reason,
            },
            other => ConfigError::Invalid {
                key: "config".into(),
                reason: other.to_string(),
            },
        }
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "hbar",
    "seed",
    "potential.kind",
    "potential.mass",
    "potential.omega",
    "potential.mu",
    "potential.lambda",
    "grid.half_width",
    "grid.points",
    "basis.levels",
    "kernel.kind",
    "kernel.width",
    "measurement.mode",
    "sequence.dt",
    "sequence.measurements",
    "sequence.policy",
    "sequence.results",
    "sequence.initial",
    "sequence.result_points",
    "scan.points",
    "scan.dt_max",
    "scan.span",
    "scan.dt",
    "lg.tau12",
    "lg.tau23",
    "lg.trials",
    "lg.protocol",
    "lg.measurement",
    "lg.result_points",
    "coupled.m1",
    "coupled.m2",
    "coupled.omega1",
    "coupled.omega2",
    "coupled.gamma",
    "coupled.da1",
    "coupled.n1",
    "coupled.n2",
    "coupled.dt",
    "coupled.measurements",
    "coupled.da2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Spectrum,
    QndHarmonic,
    SquidScan,
    LeggettGarg,
    Coupled,
    Sequence,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Spectrum,
        Experiment::QndHarmonic,
        Experiment::SquidScan,
        Experiment::LeggettGarg,
        Experiment::Coupled,
        Experiment::Sequence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::QndHarmonic => "qnd-harmonic",
            Experiment::SquidScan => "squid-scan",
            Experiment::LeggettGarg => "leggett-garg",
            Experiment::Coupled => "coupled",
            Experiment::Sequence => "sequence",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Experiment::ALL.into_iter().find(|e| e.as_str() == s).ok_or(())
    }
}

/// Raw document: keys in file order with their line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    entries: BTreeMap<String, (usize, String)>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                });
            }
            if entries.contains_key(key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.into(),
                });
            }
            entries.insert(key.to_string(), (line, value.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (0, value.into()));
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn get<T: FromStr>(&self, key: &str, expected: &'static str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::Type {
                key: key.into(),
                value: v.into(),
                expected,
            }),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.get(key, "a number")?.unwrap_or(default))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.get(key, "a non-negative integer")?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| ConfigError::Type {
                    key: key.into(),
                    value: v.into(),
                    expected: "a comma-separated list of numbers",
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn choice<T: Copy>(
        &self,
        key: &str,
        options: &[(&str, T)],
        default: T,
    ) -> Result<T, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => options
                .iter()
                .find(|(name, _)| *name == v)
                .map(|(_, t)| *t)
                .ok_or_else(|| {
                    let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                    ConfigError::invalid(key, format!("expected one of {}", names.join(", ")))
                }),
        }
    }

    /// Normalized `key = value` echo, sorted by key.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|(k, (_, v))| (k.clone(), v.clone()))
            .collect()
    }

    /// Canonical text used for hashing.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, (_, v)) in &self.entries {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    MostProbable,
    Sampled,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialSpec {
    /// Energy eigenstate, 1-based.
    Level(usize),
    /// Doublet combination localized in the left well.
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LgMeasurementSpec {
    Kernel,
    Projective,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DtGridSpec {
    Explicit(Vec<f64>),
    /// `points` values over `(0, dt_max]`.
    Open { dt_max: f64, points: usize },
    /// `points` values over `(0, span · T_12]`.
    Periods { span: f64, points: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LgSpec {
    pub tau_12: Option<f64>,
    pub tau_23: Option<f64>,
    pub trials: usize,
    pub protocol: LgProtocol,
    pub measurement: LgMeasurementSpec,
    pub result_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSpec {
    pub config: qnd_core::coupled::CoupledConfig,
    pub dt: f64,
    pub measurements: usize,
    pub da2: Option<f64>,
}

/// Validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub hbar: f64,
    pub seed: u64,
    pub potential: Potential,
    /// Explicit `(half_width, points)`; automatic grid otherwise.
    pub grid: Option<(f64, usize)>,
    pub levels: usize,
    pub kernel: Kernel,
    pub mode: ProbabilityMode,
    pub policy: PolicySpec,
    pub results: Vec<f64>,
    pub measurements: usize,
    pub dt: Option<f64>,
    pub dt_grid: DtGridSpec,
    pub initial: InitialSpec,
    pub result_points: usize,
    pub lg: LgSpec,
    pub coupled: CoupledSpec,
    pub document: Document,
}

/// Parses and validates a configuration for `experiment`. The document may
/// name the experiment itself; it must then agree.
pub fn parse_config(text: &str, experiment: Option<Experiment>) -> Result<RunConfig, ConfigError> {
    let doc = Document::parse(text)?;
    build(doc, experiment)
}

pub fn build(mut doc: Document, experiment: Option<Experiment>) -> Result<RunConfig, ConfigError> {
    let named = match doc.raw("experiment") {
        Some(v) => Some(
            v.parse::<Experiment>()
                .map_err(|_| ConfigError::invalid("experiment", format!("unknown experiment `{v}`")))?,
        ),
        None => None,
    };
    let experiment = match (experiment, named) {
        (Some(a), Some(b)) if a != b => {
            return Err(ConfigError::invalid(
                "experiment",
                format!("document says `{b}` but `{a}` was requested"),
            ))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(ConfigError::Missing { key: "experiment".into() }),
    };
    doc.set("experiment", experiment.as_str());

    let hbar = doc.f64_or("hbar", 1.0)?;
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(ConfigError::invalid("hbar", "must be finite and > 0"));
    }
    let seed = doc.get::<u64>("seed", "an unsigned 64-bit integer")?.unwrap_or(0);
    doc.set("seed", seed.to_string());

    let well_default = matches!(experiment, Experiment::SquidScan | Experiment::LeggettGarg);
    let kind = doc.choice(
        "potential.kind",
        &[("harmonic", false), ("double-well", true)],
        well_default,
    )?;
    let mass = doc.f64_or("potential.mass", 1.0)?;
    let potential = if kind {
        Potential::double_well(
            doc.f64_or("potential.mu", 1.0)?,
            doc.f64_or("potential.lambda", 1.0)?,
            mass,
        )?
    } else {
        Potential::harmonic(mass, doc.f64_or("potential.omega", 1.0)?)?
    };
    if well_default && !kind {
        return Err(ConfigError::invalid(
            "potential.kind",
            format!("{experiment} needs a double-well potential"),
        ));
    }

    let grid = match (
        doc.get::<f64>("grid.half_width", "a number")?,
        doc.get::<usize>("grid.points", "a non-negative integer")?,
    ) {
        (Some(h), Some(n)) => {
            if !(h.is_finite() && h > 0.0) {
                return Err(ConfigError::invalid("grid.half_width", "must be finite and > 0"));
            }
            if n < 3 {
                return Err(ConfigError::invalid("grid.points", "need at least 3 points"));
            }
            Some((h, n))
        }
        (None, None) => None,
        (Some(_), None) => return Err(ConfigError::Missing { key: "grid.points".into() }),
        (None, Some(_)) => return Err(ConfigError::Missing { key: "grid.half_width".into() }),
    };

    let default_levels = if experiment == Experiment::SquidScan { 16 } else { 32 };
    let levels = doc.usize_or("basis.levels", default_levels)?;
    if levels == 0 {
        return Err(ConfigError::invalid("basis.levels", "need at least one level"));
    }
    if let Some((_, n)) = grid {
        if levels > n - 2 {
            return Err(ConfigError::invalid("basis.levels", "need M <= grid.points - 2"));
        }
    }

    let default_width = match potential {
        Potential::Harmonic { mass, omega } => (hbar / (2.0 * mass * omega)).sqrt(),
        _ => 0.3,
    };
    let width = doc.f64_or("kernel.width", default_width)?;
    let kernel = if doc.choice("kernel.kind", &[("gaussian", true), ("window", false)], true)? {
        Kernel::gaussian(width)?
    } else {
        Kernel::window(width)?
    };
    let mode = doc.choice(
        "measurement.mode",
        &[("linear", ProbabilityMode::Linear), ("literal", ProbabilityMode::Literal)],
        ProbabilityMode::Linear,
    )?;

    let policy = doc.choice(
        "sequence.policy",
        &[
            ("most-probable", PolicySpec::MostProbable),
            ("sampled", PolicySpec::Sampled),
            ("fixed", PolicySpec::Fixed),
        ],
        PolicySpec::MostProbable,
    )?;
    let measurements = doc.usize_or("sequence.measurements", 8)?;
    let results = doc.list("sequence.results")?.unwrap_or_default();
    if policy == PolicySpec::Fixed {
        if doc.raw("sequence.results").is_none() {
            return Err(ConfigError::Missing { key: "sequence.results".into() });
        }
        if experiment != Experiment::Sequence {
            return Err(ConfigError::invalid(
                "sequence.policy",
                "fixed results are only supported by the sequence experiment",
            ));
        }
        if results.len() != measurements + 1 {
            return Err(ConfigError::invalid(
                "sequence.results",
                format!("need N + 1 = {} results", measurements + 1),
            ));
        }
    }
    let dt = doc.get::<f64>("sequence.dt", "a number")?;
    if let Some(t) = dt {
        if !(t.is_finite() && t > 0.0) {
            return Err(ConfigError::invalid("sequence.dt", "must be finite and > 0"));
        }
    }
    if experiment == Experiment::Sequence && dt.is_none() {
        return Err(ConfigError::Missing { key: "sequence.dt".into() });
    }
    let initial = match doc.raw("sequence.initial") {
        None if matches!(potential, Potential::DoubleWell { .. }) => InitialSpec::Left,
        None => InitialSpec::Level(1),
        Some("left") => InitialSpec::Left,
        Some("ground") => InitialSpec::Level(1),
        Some(v) => match v.parse::<usize>() {
            Ok(k) if k >= 1 && k <= levels => InitialSpec::Level(k),
            _ => {
                return Err(ConfigError::invalid(
                    "sequence.initial",
                    "expected `ground`, `left` or a level 1..=M",
                ))
            }
        },
    };
    if initial == InitialSpec::Left && levels < 2 {
        return Err(ConfigError::invalid("sequence.initial", "`left` needs M >= 2"));
    }
    let result_points = doc.usize_or("sequence.result_points", qnd_core::sequence::DEFAULT_RESULT_POINTS)?;
    if result_points < 3 {
        return Err(ConfigError::invalid("sequence.result_points", "need at least 3 points"));
    }

    let default_points = if experiment == Experiment::SquidScan { 96 } else { 64 };
    let points = doc.usize_or("scan.points", default_points)?;
    let dt_grid = if let Some(list) = doc.list("scan.dt")? {
        qnd_core::sequence::validate_dt_grid(&list).map_err(|e| ConfigError::invalid("scan.dt", e.to_string()))?;
        DtGridSpec::Explicit(list)
    } else {
        if points == 0 {
            return Err(ConfigError::invalid("scan.points", "need at least one point"));
        }
        match (doc.get::<f64>("scan.dt_max", "a number")?, doc.get::<f64>("scan.span", "a number")?) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::invalid("scan.span", "give either scan.dt_max or scan.span"))
            }
            (Some(m), None) => {
                if !(m.is_finite() && m > 0.0) {
                    return Err(ConfigError::invalid("scan.dt_max", "must be finite and > 0"));
                }
                DtGridSpec::Open { dt_max: m, points }
            }
            (None, Some(span)) => {
                if !(span.is_finite() && span > 0.0) {
                    return Err(ConfigError::invalid("scan.span", "must be finite and > 0"));
                }
                DtGridSpec::Periods { span, points }
            }
            (None, None) => match potential {
                Potential::Harmonic { omega, .. } => DtGridSpec::Open {
                    dt_max: 2.0 * PI / omega,
                    points,
                },
                _ => DtGridSpec::Periods { span: 2.5, points },
            },
        }
    };

    let positive_opt = |key: &str| -> Result<Option<f64>, ConfigError> {
        let v = doc.get::<f64>(key, "a number")?;
        if let Some(t) = v {
            if !(t.is_finite() && t > 0.0) {
                return Err(ConfigError::invalid(key, "must be finite and > 0"));
            }
        }
        Ok(v)
    };
    let lg = LgSpec {
        tau_12: positive_opt("lg.tau12")?,
        tau_23: positive_opt("lg.tau23")?,
        trials: doc.usize_or("lg.trials", 10_000)?,
        protocol: doc.choice(
            "lg.protocol",
            &[("sequential", LgProtocol::Sequential), ("pairwise", LgProtocol::Pairwise)],
            LgProtocol::Sequential,
        )?,
        measurement: doc.choice(
            "lg.measurement",
            &[("kernel", LgMeasurementSpec::Kernel), ("projective", LgMeasurementSpec::Projective)],
            LgMeasurementSpec::Kernel,
        )?,
        result_points: doc.usize_or("lg.result_points", 401)?,
    };
    if lg.trials == 0 {
        return Err(ConfigError::invalid("lg.trials", "need at least one trial"));
    }
    if lg.result_points < 3 {
        return Err(ConfigError::invalid("lg.result_points", "need at least 3 points"));
    }

    let coupled = CoupledSpec {
        config: qnd_core::coupled::CoupledConfig {
            m1: doc.f64_or("coupled.m1", 1.0)?,
            m2: doc.f64_or("coupled.m2", 1.0)?,
            omega1: doc.f64_or("coupled.omega1", 1.0)?,
            omega2: doc.f64_or("coupled.omega2", 1.5)?,
            gamma: doc.f64_or("coupled.gamma", 0.2)?,
            da1: doc.f64_or("coupled.da1", 0.5)?,
            hbar,
            n1: doc.usize_or("coupled.n1", 24)?,
            n2: doc.usize_or("coupled.n2", 24)?,
        },
        dt: doc.f64_or("coupled.dt", PI)?,
        measurements: doc.usize_or("coupled.measurements", 8)?,
        da2: positive_opt("coupled.da2")?,
    };
    if experiment == Experiment::Coupled {
        coupled.config.validate()?;
        if !(coupled.dt.is_finite() && coupled.dt > 0.0) {
            return Err(ConfigError::invalid("coupled.dt", "must be finite and > 0"));
        }
    }

    Ok(RunConfig {
        experiment,
        hbar,
        seed,
        potential,
        grid,
        levels,
        kernel,
        mode,
        policy,
        results,
        measurements,
        dt,
        dt_grid,
        initial,
        result_points,
        lg,
        coupled,
        document: doc,
    })
}

impl RunConfig {
    /// Overrides the seed and records it in the echoed document.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.document.set("seed", seed.to_string());
        self
    }
}
