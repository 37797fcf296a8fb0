//! Driven-dissipative collective spin: mean-field flow, Lindblad dynamics in
//! the Dicke basis, Liouvillian spectra, phase diagnostics and finite-size
//! scaling.

pub mod band;
pub mod diagnostics;
pub mod error;
pub mod fss;
pub mod lindblad;
pub mod liouvillian;
mod lu;
pub mod meanfield;
pub mod model;
pub mod ode;
pub mod params;
pub mod sweep;

pub use error::{Error, Result};
pub use params::ModelParams;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
