//! Streaming adaptive forecasting with the Adaptive Recurrent Unit (ARU).
//!
//! A global encoder-decoder network produces a per-step representation `h`;
//! the ARU keeps exponentially aged ridge-regression statistics over `h` and
//! adapts a local linear Gaussian model at every step, which the forecasting
//! head fuses with the global prediction.

pub mod aru;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
