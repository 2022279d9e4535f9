//! Rare-event probability estimation for reliability problems.
//!
//! Three estimators of `P(f(X) > u)` are provided:
//!
//! - crude Monte Carlo ([`estimators::crude_mc`]),
//! - subset simulation with adaptive intermediate levels ([`estimators::classic_subsim`]),
//! - Bayesian subset simulation ([`estimators::bayesian_subsim`]), which replaces the
//!   indicator of each intermediate failure event by the posterior excursion probability
//!   of a kriging model and only evaluates `f` where the model is unsure.
//!
//! The kriging model lives in [`gp`], the excursion/misclassification machinery and the
//! per-stage learning loop in [`excursion`], and the reweight/resample/move steps in [`smc`].

pub mod error;
pub mod estimators;
pub mod excursion;
pub mod expr;
pub mod gp;
pub mod normal;
pub mod points;
pub mod problem;
pub mod smc;

pub use error::{Error, Result};
pub use points::Points;
pub use problem::{InputDistribution, Performance, ReliabilityProblem};
