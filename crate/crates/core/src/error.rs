use thiserror::Error;

use crate::value::{Slot, Value};

/// Errors produced by the filtering engine and its supporting modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value `{0}` is not contained in the urn")]
    ValueAbsent(Value),
    #[error("distribution supports {capacity} draws, {requested} requested")]
    CapacityExceeded { capacity: u64, requested: u64 },
    #[error("explosion guard hit: {count} exceeds limit {limit}")]
    ExplosionGuard { count: usize, limit: usize },
    #[error("no entity has slot `{0}`")]
    SlotAbsent(Slot),
    #[error("value `{value}` has zero probability in every label of slot `{slot}`")]
    ValueImpossible { slot: Slot, value: Value },
    #[error("more than one entity can hold `{slot}` = `{value}`")]
    SelectorAmbiguous { slot: Slot, value: Value },
    #[error("invalid effect in `{schema}`: {reason}")]
    InvalidEffect { schema: String, reason: String },
    #[error("`{slot}` = `{value}` must be decided by a split first")]
    Indeterminate { slot: Slot, value: Value },
    #[error("observation has zero likelihood under every hypothesis")]
    ImpossibleObservation,
    #[error("invalid lifted state: {0}")]
    InvalidState(#[from] Violation),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error at {location}: {message}")]
    Validation { location: String, message: String },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

impl Error {
    pub(crate) fn validation(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            location: location.into(),
            message: message.into(),
        }
    }
}

/// First violated validity rule of a lifted state.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Rule 1: a referenced label is not bound in the context.
    #[error("label L{label} is referenced but not defined")]
    DanglingLabel { label: u32 },
    /// Rule 2: an urn is asked for more draws than it holds.
    #[error("label L{label} supports {capacity} draws but {demand} entity slots reference it")]
    CapacityExceeded { label: u32, capacity: u64, demand: u64 },
    #[error("entity without slots")]
    EmptyEntity,
    #[error("entity binds slot `{0}` twice")]
    DuplicateSlot(Slot),
    #[error("group with multiplicity zero")]
    ZeroMultiplicity,
    #[error("label L{label} is not referenced by any entity")]
    UnreferencedLabel { label: u32 },
    #[error("label L{label}: {reason}")]
    MalformedDistribution { label: u32, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
