use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invariant violated: {what} (defect {defect:.3e}, tolerance {tolerance:.1e})")]
    Invariant {
        what: String,
        defect: f64,
        tolerance: f64,
    },

    #[error("boundary occupancy {occupancy:.3e} exceeds {limit:.1e}")]
    Boundary { occupancy: f64, limit: f64 },

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("at kick {kick}: {source}")]
    AtKick {
        kick: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invariant(what: impl Into<String>, defect: f64, tolerance: f64) -> Self {
        Error::Invariant {
            what: what.into(),
            defect,
            tolerance,
        }
    }

    pub fn at_kick(self, kick: usize) -> Self {
        Error::AtKick {
            kick,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::GridMismatch(_) => 2,
            Error::Invariant { .. } | Error::Boundary { .. } => 3,
            Error::Convergence(_) => 4,
            Error::AtKick { source, .. } => source.exit_code(),
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
