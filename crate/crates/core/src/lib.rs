//! Exact lifted Bayesian filtering for multiset rewriting systems.

pub mod action;
pub mod distribution;
pub mod error;
pub mod filter;
pub mod observation;
pub mod oracle;
pub mod prob;
pub mod random;
pub mod run;
pub mod scenario;
pub mod state;
pub mod value;

pub use distribution::{Capacity, Distribution};
pub use error::{Error, Result, Violation};
pub use prob::Prob;
pub use state::{GroundEntity, GroundState, LabelId, LiftedState, RawState};
pub use value::{Slot, Value};
