use thiserror::Error;

/// Errors raised by the model, spectrum and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RcmError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("resource limit: {what} needs {needed}, budget is {budget}")]
    ResourceLimit {
        what: &'static str,
        needed: u128,
        budget: u128,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("integration rejected: {0}")]
    Unstable(String),

    #[error("set is not prefix-closed: {0}")]
    NotPrefixClosed(String),

    #[error("empty fit window: {0}")]
    EmptyFitWindow(String),
}

pub type Result<T> = std::result::Result<T, RcmError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(RcmError::Domain(msg.into()))
}
