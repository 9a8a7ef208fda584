use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("rank r={r} out of range for sample size m={m} (need 0 <= r <= m-1)")]
    RankOutOfRange { r: usize, m: usize },
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("blocks calibrated on different sample sizes ({0} vs {1})")]
    MixedSampleSize(usize, usize),
    #[error("predicted output is not increasing in the input: {0}")]
    NonMonotone(String),
    #[error("unknown allocation label {0:?}")]
    UnknownLabel(String),
    #[error("continued fraction did not converge for a={a}, b={b}, x={x}")]
    Convergence { a: f64, b: f64, x: f64 },
    #[error("internal invariant failed: {0}")]
    Invariant(String),
    #[error("containment invariant violated in {count} trial(s), first at trial {first}")]
    ContainmentViolated { count: u64, first: u64 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
