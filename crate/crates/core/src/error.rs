use thiserror::Error;

/// Errors surfaced by the protocols and their building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("privacy budget exceeded for agent {agent} in round {round}: would spend ({epsilon}, {delta})")]
    BudgetExceeded {
        agent: usize,
        round: u32,
        epsilon: f64,
        delta: f64,
    },
    #[error("infeasible budget scheme: shares sum to ({epsilon}, {delta}) of the total")]
    InfeasibleScheme { epsilon: f64, delta: f64 },
    #[error("ledger does not compose to the configured budget: agent {agent} spent ({epsilon}, {delta})")]
    LedgerMismatch {
        agent: usize,
        epsilon: f64,
        delta: f64,
    },
    #[error("the gaussian mechanism needs delta > 0")]
    ZeroDelta,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("value mapping is unbounded or missing its universe descriptor")]
    Unbounded,
    #[error("instance too large for exhaustive search (n = {n}, k = {k})")]
    TooLarge { n: usize, k: usize },
    #[error("lsh ratio {target} unreachable with t <= {t_max}; best ratio {best_ratio} at t = {best_t}")]
    LshUnreachable {
        target: f64,
        t_max: usize,
        best_t: usize,
        best_ratio: f64,
    },
    #[error("candidate set of size {total} exceeds the audit cap {cap}")]
    CandidateOverflow { total: usize, cap: u64 },
    #[error("missing histogram for level {0}")]
    MissingLevel(usize),
}

pub type Result<T> = core::result::Result<T, Error>;
