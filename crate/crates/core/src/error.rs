use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("impact vector is not a unit vector (|omega| = {0})")]
    NonUnitImpact(f64),

    #[error("degenerate ensemble: 2E - |P|^2 = {0} must be positive")]
    DegenerateEnsemble(f64),

    #[error("{what} requires at least {min} particles, got {got}")]
    TooFewParticles {
        what: &'static str,
        min: usize,
        got: usize,
    },

    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("insufficient sample: {got} particles in cell, need at least {need}")]
    InsufficientSample { got: usize, need: usize },

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration value violates a constraint; `path` names the key.
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user configuration rather than by a failure
    /// during the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
