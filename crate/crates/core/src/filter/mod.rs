//! Generalized Bayesian filtering.
//!
//! The posterior over generalized states is approximated by a Gaussian whose
//! mean follows `μ̇ = Dμ − λ∇F_L(μ)` and whose covariance is the inverse
//! energy Hessian at the mean.

pub mod embed;
pub mod energy;
pub mod run;

pub use embed::{
    embed_finite_diff, embed_inverse_taylor, embed_series, interpolation_residual, Embedding, GenObservation,
};
pub use energy::{
    energy, energy_grad, energy_hessian, energy_linearized_at, free_energy_grad, laplace_free_energy, logdet_grad,
    optimal_cov, GenerativeModel, OptimalCov,
};
pub use run::{
    initial_mean, pseudo_inverse_estimate, rmse, run_filter, run_filter_with_bound, select_order, synthesize,
    FilterRun, FilterState, FilterTemplate, OrderSelection, Synthetic,
};
