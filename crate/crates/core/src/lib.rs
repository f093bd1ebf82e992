//! Spatial SEIRS reaction-diffusion epidemics and optimal control of their
//! transmission rates.
//!
//! The crate provides a positivity-preserving, mass-conserving forward solver,
//! an interval-wise delayed integrator used as an independent cross-check, the
//! tangent (linearised) system, the backward adjoint system, and a projected
//! gradient method for the box-constrained control problem
//!
//! ```text
//! minimise  1/2 ∫_Ω ((e + i)(T) - λ)⁺²  +  1/2 ∫_Q (u_i² + u_e²)
//! over      0 <= u_i <= u_i_max,  0 <= u_e <= u_e_max.
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adjoint;
pub mod config;
pub mod delay;
pub mod error;
pub mod forward;
pub mod io;
pub mod mesh;
pub mod model;
pub mod norms;
pub mod optimizer;
pub mod sensitivity;

pub use adjoint::{solve_adjoint, terminal_conditions, AdjointState, AdjointTrajectory};
pub use error::{Error, NumericalError, Result, ValidationError};
pub use forward::{solve_forward, total_population, EpidemicState, Trajectory};
pub use mesh::{Field, LinearSolver, Mesh, TimeGrid};
pub use model::{
    validate_scenario, Compartment, ControlBounds, ControlPair, DiffusionSpec, InitialData, KappaSpec,
    RateConstants, Scenario, ScenarioInput, SpaceTimeField, WaningRate,
};
pub use optimizer::{evaluate_cost, projected_gradient_descent, reduced_gradient, CostBreakdown, GradientPair};
