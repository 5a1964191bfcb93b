//! Spreading speeds for a reaction–diffusion model of a population with a
//! seasonal breeding window and a time-periodic maturation delay.
//!
//! The adult density evolves by diffusion and mortality throughout the year
//! and receives recruits that were born `τ(t)` earlier and dispersed as
//! juveniles. Sampling the adults once per period gives a discrete-time
//! integro-difference map whose kinetic part, spreading speed, and travelling
//! waves are computed here.

pub mod error;
pub mod immature;
pub mod kinetics;
pub mod model;
pub mod periodic;
pub mod quadrature;
pub mod solve;
pub mod spatial;
pub mod speed;

pub use error::{Error, Result};
pub use model::{
    validate, AssumptionCheck, BirthFn, BirthSpec, Model, ModelParams, ParamsSpec, SeasonStructure, ValidationReport,
};
pub use periodic::{PeriodicFn, PeriodicSpec};
