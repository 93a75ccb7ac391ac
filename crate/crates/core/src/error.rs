use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("power vector is not strictly convex: increment {index} ({next}) does not exceed increment {prev_index} ({prev})")]
    NonConvexPower {
        index: usize,
        prev_index: usize,
        next: f64,
        prev: f64,
    },
    #[error("parameter out of range: {0}")]
    BadRange(String),
    #[error("power[0] must be 0, got {0}")]
    NonzeroBase(f64),
    #[error("infeasible thresholds: {0}")]
    InfeasibleThresholds(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("policy induces {} closed classes and state 0 is transient: {classes:?}", classes.len())]
    MultiChain { classes: Vec<Vec<usize>> },
    #[error("policies must differ in exactly one row, found {0}")]
    RowMismatch(usize),
    #[error("segment is degenerate: both endpoints have the same average power")]
    DegenerateSegment,
    #[error("policy iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("power budget {budget} is below the minimum achievable average power {min_power}")]
    InfeasibleBudget { budget: f64, min_power: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("policy count {count} exceeds enumeration cap {cap}")]
    CountExceeded { count: u128, cap: u128 },
    #[error("queue overflow at slot {slot}: state {state} -> {next}")]
    OverflowViolated { slot: u64, state: usize, next: usize },
    #[error("queue underflow at slot {slot}: state {state} transmits {sent}")]
    UnderflowViolated { slot: u64, state: usize, sent: usize },
    #[error("invalid simulation config: {0}")]
    BadSimConfig(String),
    #[error("reference curve vertices {0} and {1} have no policies differing in one state")]
    NonAdjacentVertices(usize, usize),
}
