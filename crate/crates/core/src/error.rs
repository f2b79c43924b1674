use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: Bloch vector norm {norm} exceeds 1")]
    InvalidState { norm: f64 },

    #[error("invalid POVM: Bloch vector norm {norm} exceeds 1")]
    InvalidPovm { norm: f64 },

    #[error("matrix is not orthogonal (max |R^T R - I| = {deviation:e})")]
    NotOrthogonal { deviation: f64 },

    #[error("improper rotation (det = {det}) has no qubit unitary lift")]
    ImproperRotation { det: f64 },

    #[error("operator is not Hermitian (max |A - A^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("joint table violates the identical-detector symmetry by {violation:e} (tolerance {tolerance:e})")]
    AsymmetricTable { violation: f64, tolerance: f64 },

    #[error(
        "inconsistent statistics: squared component S{axis}^2 = {value:e} is below -{epsilon:e}"
    )]
    InconsistentStatistics {
        axis: usize,
        value: f64,
        epsilon: f64,
    },

    #[error(
        "degenerate statistics: all squared components vanish but cross term {cross:e} does not"
    )]
    DegenerateStatistics { cross: f64 },

    #[error("shot record for setting {setting} has zero shots")]
    ZeroShots { setting: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("Fock truncation needs {required} terms, above the cap of {cap}")]
    TruncationInfeasible { required: u64, cap: u64 },

    #[error("click table is inconsistent with the on/off model: {reason}")]
    InconsistentTable { reason: String },

    #[error("efficiency is unidentifiable at nbar = 0 (dark-count probability {p_dark})")]
    EtaUnidentifiable { p_dark: f64 },

    #[error("joint tomography is inconsistent: completeness residual {residual:e} exceeds {tolerance:e}")]
    InconsistentTomography { residual: f64, tolerance: f64 },

    #[error("inversion undefined: gamma_X = {gamma_x}, gamma_Y = {gamma_y}")]
    InversionUndefined { gamma_x: f64, gamma_y: f64 },

    #[error(
        "closed form deviates from the Born-rule oracle by {deviation:e} (tolerance {tolerance:e})"
    )]
    OracleMismatch { deviation: f64, tolerance: f64 },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
