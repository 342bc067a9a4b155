//! Error types shared across the engine.

use thiserror::Error;

/// Engine-level errors. Syntax errors have their own type, [`crate::io::ParseError`].
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("unknown logical variable `{0}`")]
    UnknownLogVar(String),
    #[error("unknown random variable `{0}`")]
    UnknownPrv(String),
    #[error("unknown ground atom `{0}`")]
    UnknownAtom(String),
    #[error("unknown range value `{value}` for `{prv}`")]
    UnknownRangeValue { prv: String, value: String },
    #[error("model failed validation: {0}")]
    InvalidModel(String),
    #[error("query term overlaps intervention targets: `{0}`")]
    QueryTargetOverlap(String),
    #[error("duplicate intervention target `{0}`")]
    DuplicateTarget(String),
    #[error("lifted separation check unsupported: {0}")]
    UnsupportedLiftedQuery(String),
    #[error("evidence has probability zero")]
    ZeroEvidenceProbability,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("state space too large: {size} assignments exceeds guard of {guard}")]
    StateSpaceTooLarge { size: f64, guard: f64 },
    #[error("too many ambiguous factors: {count} exceeds guard of {guard}")]
    TooManyAmbiguousFactors { count: usize, guard: usize },
    #[error("normalisation constant is not finite")]
    NonFiniteNormalisation,
}

pub type Result<T> = std::result::Result<T, Error>;
