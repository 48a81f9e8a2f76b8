use thiserror::Error;

use crate::solver::lp::LpError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("line `{line}` references unknown stop `{stop}`")]
    UnknownStop { line: String, stop: String },
    #[error("unknown line `{0}`")]
    UnknownLine(String),
    #[error("unknown segment `{0}`")]
    UnknownSegment(String),
    #[error("nonpositive time for {0}")]
    NonPositiveTime(String),
    #[error("invalid fleet for line `{0}`: {1}")]
    InvalidFleet(String, String),
    #[error("OD pair {origin} -> {destination} has no path")]
    Disconnected { origin: String, destination: String },
    #[error("OD pair starts and ends at stop `{0}`")]
    DegenerateOd(String),
    #[error("unserved line `{0}` on path")]
    UnservedLine(String),
    #[error("relocation arc crosses modes: `{0}` -> `{1}`")]
    CrossModeArc(String, String),
    #[error("initiation time {0} is beyond the duration support")]
    InitiationBeyondSupport(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inconsistent plan: {0}")]
    InconsistentPlan(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("scenario schema error: {0}")]
    Schema(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 for bad input, 3 for infeasible scenarios, 4 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Infeasible(_) | Self::Disconnected { .. } | Self::InitiationBeyondSupport(_) => 3,
            Self::SolverFailure(_) | Self::Lp(_) | Self::InconsistentPlan(_) => 4,
            _ => 2,
        }
    }
}
