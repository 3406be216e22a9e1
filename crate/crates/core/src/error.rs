use thiserror::Error;

use crate::network::{LinkId, NodeId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("density {density} outside [0, {jam}]")]
    DensityOutOfRange { density: f64, jam: f64 },
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid network: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("alpha {0} must lie in (0, 0.5)")]
    InvalidAlpha(f64),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive semidefinite (eigenvalue {0})")]
    NotPsd(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("CFL condition violated on link {link}: {detail}")]
    Cfl { link: LinkId, detail: String },
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed input: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
