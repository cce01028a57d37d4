use thiserror::Error;

use crate::netmodel::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed case file: {0}")]
    MalformedCase(String),

    #[error("no bus is flagged as the reference (slack) bus")]
    NoSlack,

    #[error("network is not connected: {unreached} bus(es) unreachable from bus {from}")]
    Disconnected { from: usize, unreached: usize },

    #[error("invalid network: {0:?}")]
    InvalidNetwork(Vec<Violation>),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("AC power flow did not converge after {iterations} iterations (max mismatch {max_mismatch:.3e} pu)")]
    NonConvergence { iterations: usize, max_mismatch: f64 },

    #[error("singular Jacobian in AC power flow")]
    SingularJacobian,

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("malformed zone file: {0}")]
    MalformedZones(String),

    #[error("bus {bus} is assigned to more than one zone")]
    OverlappingZones { bus: usize },

    #[error("zone file references unknown bus {0}")]
    UnknownBus(usize),

    #[error("reduced network is not connected ({components} components)")]
    DisconnectedReduction { components: usize },

    #[error("branch {branch} has zero reactance; baseline susceptance undefined")]
    ZeroReactanceBranch { branch: usize },

    #[error("{failed} of {total} scenarios failed AC power flow (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training aborted at iteration {iteration}: {reason}")]
    TrainingAborted { iteration: usize, reason: String },

    #[error("artifact hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::SingularJacobian
                | Error::SingularSystem(_)
                | Error::TooManyFailures { .. }
                | Error::TrainingAborted { .. }
        )
    }
}
