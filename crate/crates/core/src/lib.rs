//! Streaming sequential anomaly detection with kNN evidence and an analytically
//! calibrated false-alarm threshold.
//!
//! The pipeline:
//!
//! 1. [`model::train`] splits nominal feature vectors into a held-out half and a
//!    reference half, and records the `(1 − α)` percentile `d_α` of held-out kNN
//!    distances together with the evidence bound `φ`.
//! 2. [`calibration::calibrate`] turns `(m, d_α, φ)` and a target false-alarm rate
//!    into a threshold `h`.
//! 3. [`detector::DetectorState::step`] consumes frames online, accumulating
//!    `δ_t = (max_i d_t^i)^m − d_α^m` in a floored cumulative sum and reporting
//!    anomalous segments.
//!
//! [`sim`] holds the Monte Carlo harness used to check the false-alarm bound.

pub mod calibration;
pub mod detector;
pub mod error;
pub mod feature;
pub mod knn;
pub mod model;
pub mod quadrature;
pub mod sim;
pub mod specfun;

pub use calibration::{calibrate, Calibration};
pub use detector::{AnomalyEvent, DetectorConfig, DetectorState, EmptyFramePolicy, Frame};
pub use error::{Error, Result};
pub use feature::{FeatureVector, FeatureWeights};
pub use model::{train, DetectorModel, PhiConvention, TrainParams};
