//! Noise modeling, simulation and weighted calibration for display
//! tristimulus (CIE XYZ) measurements.
//!
//! Measurement noise from emissive displays is strongly anisotropic: most of
//! it lies along the measured XYZ vector, and its magnitude grows with
//! X+Y+Z. [`noise_model`] captures this as a covariance that depends only on
//! the measurement, [`calibration`] uses it to weight a linear cross-display
//! fit, and [`simulator`] generates synthetic campaigns under the model.

pub mod analysis;
pub mod calibration;
pub mod colorspace;
pub mod config;
pub mod error;
pub mod io;
pub mod noise_model;
pub mod protocol;
pub mod record;
pub mod report;
pub mod simulator;

pub use colorspace::Tristimulus;
pub use error::{Error, ErrorClass, Result};
pub use record::MeasurementRecord;
