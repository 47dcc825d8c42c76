//! Frequency-guided physics-informed neural networks.
//!
//! A low-frequency MLP and a high-frequency stack fed with a normalized
//! embedding of the known source term are fused and trained against PDE
//! residuals computed with exact forward-mode second derivatives.

pub mod analysis;
pub mod autodiff;
pub mod error;
pub mod exec;
pub mod field;
pub mod model;
pub mod problem;
pub mod sampling;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
