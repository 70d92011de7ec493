//! Configuration-driven experiment runner for the fracpinn solvers.

pub mod config;
pub mod experiment;
