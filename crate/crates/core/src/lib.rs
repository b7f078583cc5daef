//! Excess-risk bounds through Legendre conjugates of margin envelopes, the
//! peeling construction of `δ_{t,n}`, and penalized model selection with a
//! split sample.

pub mod bounds;
pub mod config;
pub mod convex;
pub mod error;
pub mod fixtures;
pub mod margin;
pub mod measures;
pub mod montecarlo;
pub mod pipeline;
pub mod report;
pub mod selection;
pub mod serde_ext;
pub mod suite;
pub mod tabulated;

pub use error::{Error, Result};
