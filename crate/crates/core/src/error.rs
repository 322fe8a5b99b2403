use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("validity report has hard failures: {}", .0.join(", "))]
    Validity(Vec<String>),

    /// The Hessian of the Hamiltonian stopped being negative definite.
    #[error("second-order condition breached at t = {t} (C - psi = {margin:e})")]
    SecondOrderBreach { t: f64, margin: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("non-finite coefficient at t = {t}")]
    NonFinite { t: f64 },

    #[error("no admissible root: {0}")]
    NoAdmissibleRoot(String),

    #[error("degenerate Hessian at t = {t}: determinant {delta:e}")]
    DegenerateHessian { t: f64, delta: f64 },

    #[error("schedule{}: {reason}", .row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    Schedule { row: Option<usize>, reason: String },

    #[error("config{}{}: {reason}",
        .line.map(|l| format!(" line {l}")).unwrap_or_default(),
        .field.as_ref().map(|f| format!(" field `{f}`")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: Option<String>,
        reason: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
