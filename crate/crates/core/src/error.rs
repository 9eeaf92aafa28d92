use thiserror::Error;

/// Last-iterate residuals carried by a solver failure.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualSnapshot {
    pub inner: f64,
    pub delta_rel: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("freeze time diverges: busy probability {0} is not below 1")]
    FreezeDivergence(f64),

    #[error("freeze mixture undefined: no transmission probability but {0} expected freezes")]
    UndefinedMixture(f64),

    #[error("lateral offset {offset} m is outside the coverage radius {radius} m")]
    OutOfCoverage { offset: f64, radius: f64 },

    #[error("scenario infeasible: {0}")]
    Infeasible(String),

    #[error(
        "fixed point did not converge after {outer} outer iterations \
         (inner residual {:.3e}, relative delta change {:.3e})",
        .residuals.inner, .residuals.delta_rel
    )]
    NonConvergence {
        outer: usize,
        residuals: ResidualSnapshot,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
