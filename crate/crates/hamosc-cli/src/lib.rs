//! Command-line oscillation analysis for linear matrix Hamiltonian systems.
//!
//! The library half of the `hamosc` binary: configuration ingestion
//! ([`config`]), machine-readable outputs ([`report`]) and the subcommand
//! implementations ([`commands`]). Keeping these in a library lets tests
//! exercise the full pipeline without spawning processes.

pub mod commands;
pub mod config;
pub mod report;
