//! Risk-limiting audit engine with card-style data targeting.
//!
//! The crate covers the election data model, closed-form audit mathematics,
//! the seeded consistent sampler, the multi-round audit engine with its
//! persisted session log, and the workload studio that tabulates sample-size
//! comparisons with and without card-style data.

pub mod engine;
pub mod error;
pub mod math;
pub mod model;
pub mod real;
pub mod sampler;
pub mod studio;

pub use error::{Result, RlaError};
