//! Simulation and analysis toolkit for PON monitoring beyond the splitter,
//! comparing a 1383 nm water-peak OTDR with a conventional 1650 nm one.
//!
//! - [`optics`]: attenuation spectra, bend loss, effective length, dB helpers
//! - [`topology`]: the monitored path, splitter model and loss-budget classes
//! - [`otdr`]: dynamic range, trace synthesis and event detection
//! - [`detectability`]: ONT ORL populations and detectable-share reports
//! - [`raman`]: Raman crosstalk between the OTDR and downstream channels
//! - [`interference`]: safe OTDR launch power at the headend
//! - [`scenario`] and [`cli`]: declarative configs and the `ponwm` front end

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detectability;
pub mod error;
pub mod interference;
pub mod optics;
pub mod otdr;
pub mod raman;
pub mod scenario;
pub mod topology;

pub use error::{PonError, Result};
