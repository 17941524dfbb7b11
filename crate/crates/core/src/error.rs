use std::path::PathBuf;

use thiserror::Error;

/// Every failure the simulator can report.
///
/// The variants that abort a run map onto distinct process exit codes (see
/// [`Error::exit_code`]) so that scripted sweeps can tell a tangled mesh from
/// an ill-posed construction request.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate flow map at t = {t}: min Jacobian {min_jacobian:.3e} below floor {floor:.1e}")]
    DegenerateMap { t: f64, min_jacobian: f64, floor: f64 },

    #[error("equation of state out of range: {0}")]
    EosRange(String),

    #[error(
        "initial-data iteration is not contracting at epsilon = {epsilon}: difference ratios {ratios:?} \
         (the construction needs epsilon large enough that each sweep shrinks the iterate difference)"
    )]
    EpsilonTooSmall { epsilon: f64, ratios: Vec<f64> },

    #[error("Picard iteration did not converge within {iterations} iterates (last difference {last:.3e}); shorten the horizon")]
    HorizonTooLong { iterations: usize, last: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("singular linear system in {0}")]
    Singular(String),

    #[error("operation requires slab mode: {0}")]
    RequiresSlab(&'static str),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed snapshot {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Unsupported(_) | Error::RequiresSlab(_) => 2,
            Error::DegenerateMap { .. } | Error::NonFinite(_) | Error::Singular(_) => 3,
            Error::EosRange(_) => 4,
            Error::EpsilonTooSmall { .. } => 5,
            Error::HorizonTooLong { .. } => 6,
            Error::Snapshot { .. } | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 7,
        }
    }
}
