use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("CFL violation: dt = {dt:e} s exceeds the maximal stable dt = {max_dt:e} s")]
    Cfl { dt: f64, max_dt: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("Newton iteration did not converge after {iters} iterations (residual history: {history:?})")]
    NonConvergence { iters: usize, history: Vec<f64> },

    #[error("singular Jacobian: {0}")]
    Singular(String),

    #[error("shot {shot}: {source}")]
    Shot {
        shot: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code for this error class: 2 configuration, 3 numerical
    /// failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Cfl { .. }
            | Error::GridMismatch(_)
            | Error::Format { .. } => 2,
            Error::Degenerate(_)
            | Error::Domain(_)
            | Error::NonConvergence { .. }
            | Error::Singular(_) => 3,
            Error::Shot { source, .. } => source.exit_code(),
            Error::Io(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
