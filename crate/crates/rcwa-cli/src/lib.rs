//! Config-driven front end for the `rcwa` solver.

pub mod commands;
pub mod config;
