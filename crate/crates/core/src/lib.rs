//! Data side of the weekly weather-guided surrogate pipeline.
//!
//! Everything here is deterministic and free of learned state: hourly
//! weather years (parsed from EPW or synthesised per climate zone), the
//! 168-hour windowing and unclipped min-max scaling, Latin hypercube design
//! sampling, the closed-form building energy oracle, and assembly of the
//! weekly training datasets.

pub mod climate;
pub mod conf;
pub mod dataset;
pub mod epw;
mod error;
pub mod fsio;
pub mod oracle;
pub mod rng;
pub mod sampling;
pub mod variability;
pub mod weather;

pub use error::{Error, Result};
