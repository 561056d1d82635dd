//! Experiment runner plumbing: desk problems, grid search, configuration and the
//! `hpo` command implementations.

pub mod config;
pub mod desk;
pub mod grid;
pub mod runner;
