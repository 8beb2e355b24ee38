//! Permanents of non-negative matrices next to their Bethe approximations,
//! with cycle-index sums for the ratio between the two.

pub mod bethe2;
pub mod bethe_vi;
pub mod cycle_index;
pub mod error;
pub mod experiments;
pub mod matrix;
pub mod numeric;
pub mod perm_group;
pub mod support;
pub mod verify;

pub use bethe2::{
    bethe2_cover_average, bethe2_grouped, bethe2_pairsum, bethe_m_exhaustive, config_from_pair,
    zhat_partition, Bethe2Method, EdgeLabel, ValidConfig,
};
pub use bethe_vi::{bethe_free_energy, bethe_permanent, BetheOptions, BetheResult, DoublyStochastic};
pub use cycle_index::{
    bell_polynomial, cycle_index, psi, psi_asymptotic, reference_ratios, z_all_one, z_bounds,
    CycleIndexWeights, PsiParams,
};
pub use error::{Error, Result};
pub use experiments::{
    exact_moment_bethe2_sq, exact_moment_perm_sq, gamma_ratio, run_scatter, sample_matrix, Distribution,
    EnsembleSpec, ExperimentRecord,
};
pub use matrix::{lift, log_permanent, permanent_naive, permanent_ryser, CoverAssignment, NonNegMatrix};
pub use numeric::LogValue;
pub use perm_group::{c_long, c_pair, compose, cycle_type, enumerate_all, inverse, CycleType, Permutation};
pub use verify::{verify_suite, Evaluators, Report, Suite};
