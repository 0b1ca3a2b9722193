//! Concrete MAP detection (CMD) for linear Gaussian inverse problems.
//!
//! The discrete transmit vector of `y = Hx + n` is relaxed through the
//! concrete (Gumbel-softmax) distribution, and the relaxed MAP objective is
//! minimized by a fixed number of gradient steps. Untying the per-step
//! temperatures and step sizes turns the iteration into a small trainable
//! network (CMDNet) whose final softmax layer approximates the per-symbol
//! posteriors of the individually optimal detector.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs and an explicit RNG handle; file formats, the
//! command line and parallel Monte Carlo live in the `cmdnet-harness` crate.
//!
//! Module map:
//! - [`system`]: constellations, channel and instance sampling, the
//!   complex-to-real transformation.
//! - [`concrete`]: Gumbel sampling, Gumbel-max, tempered softmax and the
//!   concrete density.
//! - [`cmd`]: the relaxed objective, its gradients and the unfolded detector.
//! - [`reference`]: matched filter, MMSE and exhaustive MAP / IO oracles.
//! - [`training`]: reverse-mode gradients of the cross-entropy loss, Adam and
//!   the training loop.
//! - [`metrics`]: error counting, calibration and operation counts.

#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cmd;
pub mod concrete;
mod error;
pub mod linalg;
pub(crate) mod math;
pub mod metrics;
pub mod reference;
pub mod rng;
pub mod system;
pub mod training;

pub use cmd::{CmdDetector, CmdMode, CmdParams, DetectionResult, GumbelState};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use reference::{Detector, IoOracle, MapOracle, MatchedFilter, Mmse, OracleLimits};
pub use system::{ChannelConfig, ChannelModel, Constellation, Modulation, SystemInstance};
pub use training::{AdamConfig, InitSchedule, TrainConfig, TrainTrace};
