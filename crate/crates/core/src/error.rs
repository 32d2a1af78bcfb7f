use thiserror::Error;

/// Errors raised by the simulation and estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("observation count {0} is not a power of two >= 2")]
    ObservationCount(usize),

    #[error("simulation diverged at fine index {index} (state {value})")]
    SimulationDiverged { index: usize, value: f64 },

    #[error("state {value} left the evaluation domain [{lo}, {hi}] at fine index {index}")]
    DomainExit { index: usize, value: f64, lo: f64, hi: f64 },

    #[error("|b1({x})| = {value} is below the declared lower bound {bound}")]
    DegenerateVolatility { x: f64, value: f64, bound: f64 },

    #[error("first-variation process vanished at fine index {0}")]
    DegenerateVariation(usize),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("nonpositive variance estimate {0}")]
    NonpositiveVariance(f64),

    #[error("degenerate symbol matrix: {0}")]
    DegenerateSymbols(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("expression parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("empty sample")]
    EmptySample,

    #[error("config error: {0}")]
    Config(String),

    #[error("{failed} of {reps} replications failed at n = {n} (first: {first})")]
    FailureThreshold { n: usize, failed: usize, reps: usize, first: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short stable name of the variant, used as a failure-count key.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ObservationCount(_) => "observation_count",
            Error::SimulationDiverged { .. } => "simulation_diverged",
            Error::DomainExit { .. } => "domain_exit",
            Error::DegenerateVolatility { .. } => "degenerate_volatility",
            Error::DegenerateVariation(_) => "degenerate_variation",
            Error::Singularity(_) => "singularity",
            Error::Contract(_) => "contract",
            Error::NonpositiveVariance(_) => "nonpositive_variance",
            Error::DegenerateSymbols(_) => "degenerate_symbols",
            Error::DegenerateSample(_) => "degenerate_sample",
            Error::Parse { .. } => "parse",
            Error::EmptySample => "empty_sample",
            Error::Config(_) => "config",
            Error::FailureThreshold { .. } => "failure_threshold",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
