//! Simulation and evaluation of pseudonym-changing privacy schemes for
//! vehicular beacons.
//!
//! The pipeline replays ground-truth traces ([`trace`]) as pseudonymous
//! beacon streams under a privacy scheme ([`schemes`]), attacks them with a
//! multi-target-tracking adversary ([`adversary`], built on [`mtt`]), and
//! scores the outcome with traceability metrics ([`metrics`]) and a
//! forward-collision-warning QoS model ([`qos`]). [`experiment`] wires the
//! pieces together.

pub mod adversary;
pub mod assignment;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod mtt;
pub mod qos;
pub mod rng;
pub mod schemes;
pub mod trace;

pub use error::{Error, Result};
