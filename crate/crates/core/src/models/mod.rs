//! Built-in families: the centered autologistic lattice model and two
//! continuous families with analytic normalizers used as oracles.

mod autologistic;
mod gaussian;
mod student_t;

pub use autologistic::{
    autologistic_conditional_p, autologistic_exact_log_z, autologistic_gibbs,
    autologistic_log_pmf_unnormalized, AutologisticDensity, AutologisticFamily,
    AutologisticModel, ParamLayout, ScanOrder, MAX_EXACT_SITES,
};
pub use gaussian::{GaussianDensity, GaussianFamily};
pub use student_t::{StudentTDensity, StudentTFamily};
