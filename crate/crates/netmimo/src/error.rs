use thiserror::Error;

/// Errors surfaced by the precoding library and simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-facing configuration (layout sizes, budgets, counts).
    #[error("configuration error: {0}")]
    Config(String),

    /// A channel matrix lost rank where full rank is required; the caller may
    /// re-draw the channel or drop a user.
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    /// A dual-variable evaluation left the positive-definite domain of the
    /// dual objective. Line searches catch this and backtrack; seeing it at
    /// the top level means the starting point or instance is invalid.
    #[error("dual objective evaluated outside its positive-definite domain")]
    DualDomain,

    /// Precoder recovery detected that the supplied multipliers are not close
    /// enough to optimal (significantly negative covariance eigenvalues).
    #[error("precoder recovery from non-optimal multipliers: {0}")]
    ConvergenceQuality(String),

    /// I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
