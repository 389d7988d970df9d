use thiserror::Error;

/// Failure modes shared by every module.
///
/// The CLI maps `Config`/`Domain` to exit status 2, `Singular`/`Numeric` to 3 and
/// `Infeasible`/`Invariant` to 4.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular evaluation: {0}")]
    Singular(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
