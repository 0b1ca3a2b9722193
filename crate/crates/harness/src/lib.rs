//! Evaluation harness for `cmdnet-core`: experiment configuration, parallel
//! Monte Carlo BER sweeps, soft-output calibration, parameter files, a
//! parallel training evaluator and the `cmdnet` command line.
//!
//! - [`config`]: TOML experiment files and detector construction.
//! - [`sweep`]: BER/SER/FER sweeps with a per-detector stop rule.
//! - [`calibration`]: reliability diagrams, ECE, KL to exact marginals.
//! - [`params_file`]: trained parameter persistence.
//! - [`parallel`]: rayon batch evaluator for training.
//! - [`selftest`]: runtime gradient and oracle checks.
//! - [`cli`]: argument parsing and subcommands.

pub mod calibration;
pub mod cli;
pub mod config;
mod error;
pub mod parallel;
pub mod params_file;
pub mod selftest;
pub mod sweep;

pub use config::{DetectorKind, DetectorSpec, ExperimentConfig, NamedDetector, StopRule};
pub use error::{HarnessError, Result};
pub use parallel::Parallel;
