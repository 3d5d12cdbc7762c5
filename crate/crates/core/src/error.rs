use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CboError {
    #[error("graph contains a cycle through nodes: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("node `{node}`: mechanism expects {expected} parent(s) but the graph gives it {found}")]
    Arity {
        node: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid mechanism for node `{node}`: {reason}")]
    InvalidMechanism { node: String, reason: String },

    #[error("malformed SCM spec: {0}")]
    MalformedSpec(String),

    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    #[error("regressor failure: {0}")]
    Regressor(String),

    #[error("exploration set is empty; fall back to all manipulative singletons")]
    EmptyExplorationSet,

    #[error("GP fit failed: {0}")]
    GpFit(String),

    #[error("query outside interventional domain: {0}")]
    OutOfDomain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CboError {
    fn from(e: std::io::Error) -> Self {
        CboError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CboError>;
