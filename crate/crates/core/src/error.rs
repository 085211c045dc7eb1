use std::fmt;
use std::path::PathBuf;

/// Location of a backward-recursion step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Site {
    pub stage: usize,
    pub state: usize,
    pub input: usize,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k={} x={} u={}", self.stage, self.state, self.input)
    }
}

/// A single broken invariant found while validating a system.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension { field: &'static str, expected: usize, found: usize },
    EmptySpace { field: &'static str },
    NonStochasticRow { stage: Option<usize>, state: Option<usize>, input: Option<usize>, sum: f64 },
    NegativeProbability { stage: Option<usize>, state: Option<usize>, input: Option<usize>, dist: usize, value: f64 },
    OutOfRangeTransition { state: usize, input: usize, dist: usize, target: usize },
    NonFiniteCost { field: &'static str, index: usize },
    NotSymmetric { field: &'static str, asymmetry: f64 },
    NotSemidefinite { field: &'static str, min_eigenvalue: f64 },
    NotDefinite { field: &'static str, min_eigenvalue: f64 },
    NonFiniteEntry { field: &'static str },
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "*".to_string(), |i| i.to_string())
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension { field, expected, found } => {
                write!(f, "{field}: expected {expected} entries, found {found}")
            }
            Violation::EmptySpace { field } => write!(f, "{field} must be positive"),
            Violation::NonStochasticRow { stage, state, input, sum } => write!(
                f,
                "NonStochasticRow at (k={}, x={}, u={}): sum {sum}",
                opt(*stage),
                opt(*state),
                opt(*input)
            ),
            Violation::NegativeProbability { stage, state, input, dist, value } => write!(
                f,
                "NegativeProbability at (k={}, x={}, u={}, w={dist}): {value}",
                opt(*stage),
                opt(*state),
                opt(*input)
            ),
            Violation::OutOfRangeTransition { state, input, dist, target } => write!(
                f,
                "OutOfRangeTransition at (x={state}, u={input}, w={dist}): target {target}"
            ),
            Violation::NonFiniteCost { field, index } => {
                write!(f, "NonFiniteCost in {field} at index {index}")
            }
            Violation::NotSymmetric { field, asymmetry } => {
                write!(f, "{field} is not symmetric (max |X - X'| = {asymmetry:e})")
            }
            Violation::NotSemidefinite { field, min_eigenvalue } => {
                write!(f, "{field} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")
            }
            Violation::NotDefinite { field, min_eigenvalue } => {
                write!(f, "{field} is not positive definite (min eigenvalue {min_eigenvalue:e})")
            }
            Violation::NonFiniteEntry { field } => write!(f, "{field} has non-finite entries"),
        }
    }
}

/// Every invariant violation found in one validation pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }

    pub(crate) fn into_result(self) -> Result<(), ValidationReport> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(self)
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(#[from] ValidationReport),

    #[error("every disturbance has zero likelihood{}", .0.map(|s| format!(" at {s}")).unwrap_or_default())]
    AllAlphasInfinite(Option<Site>),

    #[error("softmax adversary requires gamma_e > 0")]
    TemperatureZero,

    #[error("M{} = gamma_h I - 2 D'P D is not positive definite (min eigenvalue {min_eigenvalue:e})", .stage.map(|k| format!("_{k}")).unwrap_or_default())]
    MBelowCritical { stage: Option<usize>, min_eigenvalue: f64 },

    #[error("R + B'PB is not positive definite")]
    SingularControlHessian,

    #[error("fixed-point iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("no finite critical gamma_h below {limit:e}")]
    NoFiniteCritical { limit: f64 },

    #[error("closed loop A - BG is unstable (spectral radius {spectral_radius})")]
    UnstableClosedLoop { spectral_radius: f64 },

    #[error("p puts mass on disturbance {index} where r is zero")]
    SupportViolation { index: usize },

    #[error("simplex search supports at most {max} disturbances, got {len}")]
    DimensionTooLarge { len: usize, max: usize },

    #[error("integrand does not decay (curvature {curvature:e} >= 0)")]
    DivergentIntegrand { curvature: f64 },

    #[error("grid axis {axis} needs at least 3 points, got {points}")]
    DegenerateGrid { axis: &'static str, points: usize },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: unsupported schema_version {version}")]
    SchemaVersionUnsupported { path: PathBuf, version: u32 },

    #[error("{path}: {field}: {message}")]
    ScenarioField { path: PathBuf, field: String, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "ValidationError",
            Error::AllAlphasInfinite(_) => "AllAlphasInfinite",
            Error::TemperatureZero => "TemperatureZero",
            Error::MBelowCritical { .. } => "MBelowCritical",
            Error::SingularControlHessian => "SingularControlHessian",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::NoFiniteCritical { .. } => "NoFiniteCritical",
            Error::UnstableClosedLoop { .. } => "UnstableClosedLoop",
            Error::SupportViolation { .. } => "SupportViolation",
            Error::DimensionTooLarge { .. } => "DimensionTooLarge",
            Error::DivergentIntegrand { .. } => "DivergentIntegrand",
            Error::DegenerateGrid { .. } => "DegenerateGrid",
            Error::ModelMismatch(_) => "ModelMismatch",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Parse { .. } => "ParseError",
            Error::SchemaVersionUnsupported { .. } => "SchemaVersionUnsupported",
            Error::ScenarioField { .. } => "ValidationError",
            Error::Io { .. } => "IoError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
