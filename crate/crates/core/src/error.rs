use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument {value} outside domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("insufficient precision: {needed} bits required, point carries {available}")]
    PrecisionExhausted { needed: usize, available: usize },

    #[error("tail mean vanishes at N = {0}; ratio statistic undefined")]
    DegenerateMean(u64),

    #[error("tail variance vanishes at N = {0}")]
    DegenerateVariance(u64),

    #[error("normalizer undefined at this N: s2_N = {0} is not below 1/e")]
    NormalizerUndefined(f64),

    #[error("empty input")]
    EmptyInput,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by numeric limits rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::PrecisionExhausted { .. }
                | Error::DegenerateMean(_)
                | Error::DegenerateVariance(_)
                | Error::NormalizerUndefined(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
