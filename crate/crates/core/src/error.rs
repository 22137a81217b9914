use std::fmt;

use crate::state::{Action, State};

/// Market assumption that a payoff matrix can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    HomogeneousPreferences,
    Supermodularity,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::HomogeneousPreferences => f.write_str("homogeneous preferences"),
            Assumption::Supermodularity => f.write_str("supermodularity"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{assumption} violated: {detail}")]
    AssumptionViolation {
        assumption: Assumption,
        detail: String,
    },
    #[error("{name} = {value} is out of range ({expected})")]
    RangeError {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("arrival probabilities must lie strictly inside (0, 1) (p = {p}, q = {q})")]
    DegenerateArrivals { p: f64, q: f64 },
    #[error("operation requires p = q (p = {p}, q = {q})")]
    AsymmetricArrivals { p: f64, q: f64 },
    #[error("r_HH = r_HL leaves no separation between H and L supply")]
    NoSeparation,
    #[error("cap {cap} is too small; need cap >= {required}")]
    CapTooSmall { cap: u32, required: u32 },
    #[error("value iteration did not converge within {max_iter} sweeps (span {span:e})")]
    NoConvergence { max_iter: u64, span: f64 },
    #[error("policy is not of threshold type at {state}: expected {expected}, found {found}")]
    StructureViolation {
        state: State,
        expected: Action,
        found: Action,
    },
    #[error("stationary system is singular or ill-conditioned")]
    SingularSystem,
    #[error("empirical mass on the expected recurrent class is only {in_class_mass}")]
    SupportMismatch { in_class_mass: f64 },
    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
