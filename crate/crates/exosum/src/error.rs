//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("table cap exceeded: level {level} needs {needed} elements (cap {cap})")]
    CapExceeded { level: usize, needed: u128, cap: u64 },
    #[error("enumeration budget exceeded: need {needed} elements (budget {budget})")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("level mismatch: expected {expected}, got {got}")]
    LevelMismatch { expected: usize, got: usize },
    #[error("{m} does not divide {n}")]
    NotDivisor { m: usize, n: usize },
    #[error("multiplicative character evaluated at zero")]
    CharAtZero,
    #[error("singular matrix")]
    Singular,
    #[error("characteristic polynomial has coefficients outside the base field")]
    NotRational,
    #[error("character {level}:{index} is not regular")]
    NotRegular { level: usize, index: u64 },
    #[error("representation is not generic")]
    NotGeneric,
    #[error("character does not factor through the requested norm")]
    DoesNotFactor,
    #[error("unknown check id `{0}`")]
    UnknownCheck(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
