//! Simulator of counterfactual communication through nested
//! interferometers.
//!
//! A single photon enters an outer interferometer whose upper arm holds an
//! inner interferometer traversed twice (once on each side of a mirror).
//! Bob blocks or opens the inner arms to send a bit; Alice reads it from the
//! detector that clicks. Electro-optic modulators tag each arm with its own
//! frequency sidebands, so the detected spectrum shows which arms the
//! photon left a first-order trace in.
//!
//! - [`optics`]: photon states over (mode, sideband) and optical elements.
//! - [`circuit`]: the device, its tunings, forward/backward propagation and
//!   weak traces.
//! - [`spectral`]: etalons, detected spectra, peak extraction.
//! - [`protocol`]: imperfect trials, time-binned bits, image transmission.
//! - [`cli`]: the `cfcomm` command-line front end.

pub mod circuit;
pub mod cli;
pub mod config;
pub mod error;
pub mod optics;
pub mod protocol;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
