//! Blind separation of time-warped stationary Gaussian sources mixed by a
//! slowly varying matrix.
//!
//! The pipeline alternates between per-source estimation of a time-warping
//! trajectory and an underlying stationary spectrum, and a sequential
//! constrained maximum-a-posteriori update of the unmixing matrices, all in
//! the continuous wavelet domain. SOBI and piecewise SOBI are provided as
//! baselines and for initialization.

pub mod baselines;
pub mod experiment;
pub mod error;
pub mod estimators;
pub mod likelihood;
pub mod metrics;
pub mod par;
pub mod signal;
pub mod spectral;
pub mod trajectory;

pub use error::{Error, Result};
pub use par::Parallelism;
