//! Marginal Poisson multi-Bernoulli SLAM.

pub mod association;
mod filter;
pub mod gaussian;
pub mod model;

pub use filter::{
    Bernoulli, FilterConfig, LandmarkEstimate, MpmbFilter, PppComponent, PppIntensity, TypeDensity, UeEstimate,
    UpdateLog, RIS_ID,
};
pub use gaussian::GaussianDensity;
pub use model::{Dynamics, Measurement, MeasurementKind};
