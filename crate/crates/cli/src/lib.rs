//! Command-line harness for the TDSE solver.

pub mod config;
pub mod run;
pub mod selftest;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "TDSE_THREADS";
