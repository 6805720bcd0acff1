use thiserror::Error;

use crate::lattice::SiteId;

/// Errors raised by the engines and probes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("absorbing site has no outgoing instructions: {0:?}")]
    AbsorbingSite(SiteId),
    #[error("site {0:?} is outside the graph")]
    SiteOutOfRange(SiteId),
    #[error("operation requires a torus, got {0}")]
    NotATorus(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("cannot parse graph spec {spec:?}: {reason}")]
    GraphSpec { spec: String, reason: String },
    #[error("empty set where a non-empty one is required: {0}")]
    EmptySet(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("instruction ({site:?}, {index}) is not in the truncated field")]
    Truncated { site: SiteId, index: u64 },
    #[error("inadmissible half-toppling at {0:?}")]
    InadmissibleHalfToppling(SiteId),
    #[error("mode unsupported: {0}")]
    UnsupportedMode(&'static str),
    #[error("strategy returned stable site {0:?}")]
    StrategyReturnedStable(SiteId),
    #[error("no empty settling site")]
    NoSettlingSite,
    #[error("walk exceeded its step budget of {0}")]
    WalkBudget(u64),
    #[error("configuration has {found} particles, expected {expected}")]
    ParticleCount { expected: u64, found: u64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("branch budget of {budget} exceeded after {explored} branches")]
    BranchBudget { budget: usize, explored: usize },
    #[error("hierarchy invariant violated: {0}")]
    Hierarchy(String),
    #[error("linear solve failed: {0}")]
    Solve(String),
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
