//! Adaptive penalized scalar-on-function regression.
//!
//! Predictors are curves sampled on a common grid over `[0, 1]`. Each
//! coefficient function is expanded in the leading eigenfunctions of a
//! kernel integral operator and penalized by the kernel norm, which both
//! smooths the estimate and zeroes out irrelevant predictors. A second,
//! adaptively weighted pass sharpens the selection.

pub mod dataset;
pub mod error;
pub mod exec;
pub mod function_space;
pub mod kernels;
pub mod model_selection;
pub mod simulation;
pub mod solver;

pub use error::{Error, Result};
pub use exec::Exec;
