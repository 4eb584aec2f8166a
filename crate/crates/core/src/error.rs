use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("coefficient function `{0}` looks unbounded on probes")]
    UnboundedCoefficient(String),
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sequence is empty")]
    EmptySequence,
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error("non-finite state at step {step}, particle {particle}")]
    Overflow { step: usize, particle: usize },
    #[error("particle left the grid at step {step}")]
    ExitedGrid { step: usize },
    #[error("time {0} is not on the simulation grid")]
    OffGrid(f64),
    #[error("local measures need binary +-1 disorder")]
    NonBinaryDisorder,
    #[error("no particles carry disorder {0:+}")]
    EmptyPopulation(i32),
    #[error("combined atom count {count} exceeds budget {limit}; subsample the measures")]
    AtomBudget { count: usize, limit: usize },
    #[error("CFL violated: dt = {dt} exceeds limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("density went negative ({value}) at step {step}")]
    Negativity { step: usize, value: f64 },
    #[error("exponent {0} overflows; reduce N or T")]
    ExponentOverflow(f64),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), message: message.into() }
}
