use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of a mathematical function.
    #[error("domain error in {func}: {msg}")]
    Domain { func: &'static str, msg: String },

    /// A parameter set violates one of the model invariants.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("{context}: no convergence after {subdivisions} subdivisions (estimate {value:e}, error {error:e})")]
    NonConvergence {
        context: String,
        subdivisions: usize,
        value: f64,
        error: f64,
    },

    /// An integrand produced NaN or an infinity inside the integration domain.
    #[error("{context}: integrand is not finite at x = {at:e}")]
    NonFiniteIntegrand { context: String, at: f64 },

    /// The model cannot produce a meaningful energy efficiency (zero power per area).
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// A channel matrix drawn by the simulator is not of full row rank.
    #[error("rank deficient channel ({rows}x{cols})")]
    RankDeficient { rows: usize, cols: usize },

    /// A tier that the simulation needs is empty in the sampled topology.
    #[error("tier {0} has no station in the simulation window")]
    EmptyTier(&'static str),

    /// Configuration file or override problem.
    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(func: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            func,
            msg: msg.into(),
        }
    }

    /// Prefixes the context of quadrature failures so callers know which
    /// integral failed.
    pub fn within(self, outer: &str) -> Self {
        match self {
            Error::NonConvergence {
                context,
                subdivisions,
                value,
                error,
            } => Error::NonConvergence {
                context: format!("{outer}/{context}"),
                subdivisions,
                value,
                error,
            },
            Error::NonFiniteIntegrand { context, at } => Error::NonFiniteIntegrand {
                context: format!("{outer}/{context}"),
                at,
            },
            other => other,
        }
    }

    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::InvalidParams(_) => "invalid-params",
            Error::NonConvergence { .. } => "non-convergence",
            Error::NonFiniteIntegrand { .. } => "non-finite",
            Error::DegenerateModel(_) => "degenerate-model",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::EmptyTier(_) => "empty-tier",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
