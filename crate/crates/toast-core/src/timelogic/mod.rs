//! Clocks, valuations, and the symbolic constraint algebra consumed by
//! every other module: satisfaction, satisfiability, entailment, reset,
//! past, and representative delays.
//!
//! All values are immutable after construction and safe to share across
//! threads.

pub mod clocks;
pub mod constraint;
pub mod interval;
pub mod zone;

pub use clocks::{ClockId, TimeValue, Valuation};
pub use constraint::{half_grid, representative_delays, Constraint};
pub use interval::{delay_projection, IntervalSet};
pub use zone::{
    constraint_reset, entails, equivalent, normalize, normalize_over, past, satisfiable, ZoneDnf,
};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TimeError {
    #[error("unknown clock `{0}`")]
    UnknownClock(String),
    #[error("time values must be non-negative, got {0}")]
    NegativeTime(String),
    #[error("zero denominator in time value")]
    ZeroDenominator,
    #[error("zone bound {0} is not integral; constraints carry natural constants")]
    NonIntegralBound(String),
}
