//! Config-driven experiment runner around the `stein_hmm` library.
//!
//! Experiments are described by JSON configs with a mandatory master seed;
//! outputs are RFC-4180 CSV files plus a JSON manifest from which the run can
//! be reproduced byte for byte, replicate concurrency notwithstanding.

pub mod compare;
pub mod config;
pub mod runner;
