use thiserror::Error;

use crate::subset::Subset;

/// Errors raised while building or checking a problem instance.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScenarioError {
    #[error("trait labels must be non-empty and distinct: {0}")]
    Labels(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid value at {key}: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("triangle inequality fails: slack {slack} at ({i}, {j}, {k})")]
    SlackViolation { slack: f64, i: usize, j: usize, k: usize },
    #[error("initial mass {mass} outside [{lower}, {upper}] at eps = {eps}")]
    InitialMassViolation {
        eps: f64,
        mass: f64,
        lower: f64,
        upper: f64,
    },
    #[error("model bounds unavailable: {0}")]
    MissingBounds(String),
}

/// Failures of the steady-state machinery and of Hypothesis (H).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EquilibriumError {
    #[error("subset of size {size} exceeds the enumeration cap of {cap} supports")]
    EnumerationCap { size: usize, cap: usize },
    #[error("empty subset")]
    EmptySubset,
    #[error("non-hyperbolic steady state on {subset} (|Re lambda| = {re})")]
    NonHyperbolic { subset: Subset, re: f64 },
    #[error("no admissible steady state on {subset}")]
    NoAdmissible { subset: Subset },
    #[error("{count} admissible steady states on {subset}")]
    MultipleAdmissible { subset: Subset, count: usize },
    #[error("relaxation did not reach the {rho}-ball around the equilibrium by t = {t_cap}")]
    TimeoutNoConvergence { rho: f64, t_cap: f64 },
    #[error("Lotka-Volterra operation applied to a {0} model")]
    WrongFamily(&'static str),
    #[error("integration failed: {0}")]
    Integration(String),
}

/// Failures of the ODE integrators.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h})")]
    StepFailure { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HjError {
    #[error(transparent)]
    Hypothesis(#[from] EquilibriumError),
    #[error("events stalled at t = {t}: {state}")]
    EventStall { t: f64, state: String },
    #[error("max of values is {max}, expected 0 within {tol}")]
    MaxNotZero { max: f64, tol: f64 },
    #[error("dp grid drifted: max W = {max} at t = {t} (tolerance {tol})")]
    MaxDrift { t: f64, max: f64, tol: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MonteCarloError {
    #[error("resource schedule covers [{start}, {end}] but [0, {t}] is required")]
    ScheduleGap { start: f64, end: f64, t: f64 },
    #[error("exact quadrature supports at most 2 jumps, path has {0}")]
    TooManyJumps(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PdeError {
    #[error("boundary mass fraction {fraction:e} exceeds {limit:e} at t = {t}")]
    MassEscape { t: f64, fraction: f64, limit: f64 },
    #[error("initial resource {value} of resource {resource} outside [{v_min}, {v_max}]")]
    InitialMassViolation {
        resource: usize,
        value: f64,
        v_min: f64,
        v_max: f64,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{message} (line {line})")]
    Syntax { line: usize, message: String },
    #[error("schema error at `{key}` (line {line}): {reason}")]
    Schema {
        key: String,
        line: usize,
        reason: String,
    },
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
}

impl ScenarioError {
    pub fn class(&self) -> ErrorClass {
        ErrorClass::Input
    }
}

impl OdeError {
    pub fn class(&self) -> ErrorClass {
        match self {
            OdeError::Scenario(_) => ErrorClass::Input,
            _ => ErrorClass::Numerical,
        }
    }
}
