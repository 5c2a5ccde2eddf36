//! Adaptive physical-layer relay cooperation toolkit.
//!
//! The crate is split along the lines of the experiment pipeline:
//!
//! - [`topology`]: Rayleigh link statistics, channel sampling and
//!   time-varying topology schedules.
//! - [`outage`]: cut-set capacity approximation, analytic outage upper bound,
//!   Monte-Carlo oracle and outage-optimal relay subset search.
//! - [`netsim`]: cooperation modes and two-phase frame delivery.
//! - [`selection`]: the LEARN / SPA adaptive mode selection and baselines.
//! - [`ensemble`]: dataset recording, randomized ensemble samples and replay.
//! - [`macemu`]: trace-driven MAC retransmission emulation and the
//!   genie-aided routing oracle.

pub mod ensemble;
pub mod error;
pub mod macemu;
pub mod netsim;
pub mod outage;
pub mod quadrature;
pub mod rng;
pub mod selection;
pub mod stats;
pub mod topology;

pub use error::{Error, Result};
