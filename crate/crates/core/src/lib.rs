//! Inter-frequency handover simulation and A5 parameter tuning.
//!
//! The pipeline runs in stages: simulate KPIs over a grid of A5 parameters
//! ([`sweep`]), fit regression surrogates to the resulting dataset
//! ([`surrogate`]), measure how much each parameter drives each KPI
//! ([`sensitivity`]) and search for the best joint setting ([`optimizer`]).

pub mod config;
pub mod error;
pub mod handover;
pub mod mobility;
pub mod optimizer;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod sensitivity;
pub mod surrogate;
pub mod sweep;

pub use error::{Error, Result};
