use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("channel {channel} is outside the channel plan {min}..={max}")]
    ChannelOutOfPlan { channel: i32, min: i32, max: i32 },

    #[error("channel {0} is the degeneracy channel and has no symmetric partner")]
    DegenerateChannel(i32),

    #[error("{mode} index model evaluated at {thz} THz, outside its validity band [{lo}, {hi}] THz")]
    OutOfBand {
        mode: String,
        thz: f64,
        lo: f64,
        hi: f64,
    },

    #[error("phase-matching residual vanishes identically over the search band; the solution is not determined by the index model")]
    UndeterminedPhaseMatching,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no positive key rate at zero distance (R_key = {0})")]
    NoPositiveRate(f64),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("histogram set mismatch: {0}")]
    HistogramMismatch(String),

    #[error("missing settings: {}", .0.join(", "))]
    MissingSettings(Vec<String>),

    #[error("{file}:{line}: {reason}")]
    Parse {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("{0}")]
    Config(String),

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(name: &'static str, value: f64, domain: &'static str) -> Error {
    Error::Domain {
        name,
        value,
        domain,
    }
}

pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.into(),
        reason: reason.into(),
    }
}
