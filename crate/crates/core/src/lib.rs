//! Generalized coordinates of motion for stochastic differential equations
//! driven by smooth (analytic) Gaussian noise.

pub mod action;
pub mod error;
pub mod expr;
pub mod filter;
pub mod flow;
pub mod gen;
pub mod integrate;
pub mod jet;
pub mod linalg;
pub mod linear;
pub mod model;
pub mod noise;
pub mod par;

pub use action::{lagrangian, lagrangian_grad, regularized_descent, DescentOptions, LagrangianContext};
pub use error::{Error, Result};
pub use expr::Expr;
pub use flow::{gen_flow, gen_flow_exact, gen_flow_linear, gen_jacobian, gen_likelihood, gen_obs_jacobian, FlowMode};
pub use gen::{GenNoise, GenPoint, MAX_ORDER};
pub use integrate::{euler_baseline, zigzag_solve, zigzag_trajectory, Method, Trajectory, Zigzag};
pub use linear::{convergence_radius, gaussian_pushforward, linear_cov, linear_mean, LinearModel};
pub use model::{Builtin, ModelSpec};
pub use noise::{build_cross_cov, build_gen_cov, first_zero_crossing, sample_gen_noise, GenCov, Kernel, KernelFamily};
pub use par::Execution;
