use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("log-likelihood is not concave at the MLE: {0}")]
    NonConcaveAtMle(String),

    #[error("quadrature did not converge: {0}")]
    NonConvergedQuadrature(String),

    #[error("argument out of domain: {0}")]
    ArgumentOutOfDomain(String),

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Prefixes the message with `ctx`, keeping the variant.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::InvalidParams(m) => Error::InvalidParams(format!("{ctx}: {m}")),
            Error::InvalidHyper(m) => Error::InvalidHyper(format!("{ctx}: {m}")),
            Error::InvalidInput(m) => Error::InvalidInput(format!("{ctx}: {m}")),
            Error::DegenerateData(m) => Error::DegenerateData(format!("{ctx}: {m}")),
            Error::NumericalDegeneracy(m) => Error::NumericalDegeneracy(format!("{ctx}: {m}")),
            Error::NonConcaveAtMle(m) => Error::NonConcaveAtMle(format!("{ctx}: {m}")),
            Error::NonConvergedQuadrature(m) => Error::NonConvergedQuadrature(format!("{ctx}: {m}")),
            Error::ArgumentOutOfDomain(m) => Error::ArgumentOutOfDomain(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Parse { line, msg } => Error::Parse { line, msg: format!("{ctx}: {msg}") },
            other => other,
        }
    }

    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) | Error::InvalidHyper(_) | Error::InvalidInput(_) => "invalid",
            Error::DegenerateData(_) => "degenerate",
            Error::NumericalDegeneracy(_)
            | Error::NonConcaveAtMle(_)
            | Error::NonConvergedQuadrature(_)
            | Error::ArgumentOutOfDomain(_) => "numerical",
            Error::InsufficientPoints { .. } => "insufficient",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> u8 {
        match self.category() {
            "invalid" | "config" => 2,
            "parse" => 3,
            "io" => 4,
            "degenerate" => 5,
            "numerical" => 6,
            _ => 1,
        }
    }
}
