//! Stationary second-order baselines: SOBI and piecewise SOBI.

mod psobi;
mod sobi;

pub use psobi::{p_sobi, segment_ranges};
pub use sobi::{joint_diagonalize, off_diagonal_energy, sobi, sobi_detailed, LaggedCovarianceSet, SobiOutcome, DEFAULT_LAGS};
