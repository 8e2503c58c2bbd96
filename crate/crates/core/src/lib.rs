//! Reconstruction of time-varying graph signals with space-time kernels
//! and the kernel Kalman filter.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod kernels;
pub mod kkf;
pub mod linalg;
pub mod sampling;
pub mod spectral;

pub use error::{Error, Result};
