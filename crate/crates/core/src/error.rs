use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model is not stationary: companion spectral radius {radius} >= 1")]
    NonStationary { radius: f64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("mean FD missing for subjects: {0:?}")]
    MissingMeanFd(Vec<String>),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("fold {fold} failed: {source}")]
    Fold { fold: usize, source: Box<Error> },
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
