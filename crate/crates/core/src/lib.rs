//! Simulation and estimation toolkit for RIS-aided, access-point-free radio SLAM.
//!
//! The crate is organised bottom-up:
//! - [`geometry`]: frames, path parameters and the state-to-parameter Jacobian.
//! - [`channel`]: array responses, path gains and OFDM signal synthesis.
//! - [`profile`]: time-balanced RIS coding and spatial phase profiles.
//! - [`crlb`]: Fisher information, measurement covariances and state bounds.
//! - [`slam`]: the marginal Poisson multi-Bernoulli SLAM filter.
//! - [`metrics`]: MAE and GOSPA.
//! - [`scenario`]: scene construction, measurement generation and Monte Carlo driver.
//! - [`config`]: the serialisable configuration schema and override handling.

pub mod assignment;
pub mod channel;
pub mod config;
pub mod crlb;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod profile;
pub mod rng;
pub mod scenario;
pub mod slam;

pub use error::{Error, Result};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;
