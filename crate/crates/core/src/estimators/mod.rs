//! Estimation of the source models and the unmixing trajectory.

mod align;
mod convergence;
mod jefas;
mod spectrum;
mod state;
mod theta;
mod unmixing;

pub use align::{align_sources, is_stable, preference_lists, slice_similarity, stable_matching};
pub use convergence::convergence_criterion;
pub use jefas::{jefas_bss, jefas_bss_from, AlgorithmConfig, EstimationState};
pub use spectrum::{estimate_spectrum, welch_spectrum};
pub use state::{read_state, write_state, StoredState};
pub use theta::{estimate_theta_ml, estimate_theta_ml_in, ThetaEstimate, ThetaSearch};
pub use unmixing::{estimate_unmixing_frame, minimize_in_box, SolverOptions, UnmixingEstimate};
