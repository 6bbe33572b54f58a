use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside the domain [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("moment order {0} is not supported (only 1, 2 and 3)")]
    UnsupportedOrder(u32),

    #[error("inconsistent moments: variance {kappa2:e} is negative beyond tolerance {tolerance:e}")]
    InconsistentMoments { kappa2: f64, tolerance: f64 },

    #[error("cannot build circuit: {0}")]
    Construction(String),

    #[error("gate targets qubit {qubit} but the register has {n_qubits} qubits")]
    InvalidTarget { qubit: usize, n_qubits: usize },

    #[error("term support spans qubit {qubit} but the register has {n_qubits} qubits")]
    SupportOutOfRange { qubit: usize, n_qubits: usize },

    #[error("{what} needs {required_bytes} bytes, over the budget of {budget_bytes} bytes")]
    Resource {
        what: &'static str,
        required_bytes: u128,
        budget_bytes: u128,
    },

    #[error(
        "bond {bond} needs dimension above max_bond = {max_bond}; \
         capping it would discard weight {discarded:e}"
    )]
    TruncationOverflow {
        bond: usize,
        max_bond: usize,
        discarded: f64,
    },

    #[error("state is not normalized (norm deviation {deviation:e})")]
    NotNormalized { deviation: f64 },

    #[error("readout correction is ill-conditioned on qubit {qubit}: factor {factor}")]
    IllConditioned { qubit: usize, factor: f64 },

    #[error("renormalization factor {value} is at or below the floor {floor}")]
    UnusableRenorm { value: f64, floor: f64 },

    #[error("batch contains no shots")]
    EmptyBatch,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("moments are infeasible: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Json(_) => ErrorKind::Config,
            Error::Resource { .. } | Error::Io(_) => ErrorKind::Resource,
            _ => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Resource,
    Numerical,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
