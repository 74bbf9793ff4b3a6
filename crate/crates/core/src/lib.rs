//! Gaussian-state toolkit for pulsed two-oscillator entanglement experiments.
//!
//! The crate covers the full analysis chain: covariance dynamics of a cavity
//! coupled to two mechanical modes, a lossy concurrent quadrature readout,
//! moment tomography of the resulting records, loss correction with a
//! projection onto physical covariances, and bootstrap/systematic error
//! budgets for the entanglement eigenvalue.

pub mod correction;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod gaussian;
pub mod measurement;
pub mod registry;
pub mod rng;
pub mod serde_rows;
pub mod statistics;

pub use error::{Error, Result};
pub use gaussian::{CovarianceMatrix, ModeLabel};
