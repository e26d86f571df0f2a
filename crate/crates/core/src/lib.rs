//! Iterative matrix inversion with matrix-valued, right-multiplicative step
//! sizes, plus the baselines, experiment presets and trace tooling around it.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod problem;
pub mod solvers;
pub mod trace;

pub use error::{Error, Result};
pub use linalg::Matrix;
