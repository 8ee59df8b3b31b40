//! Core of the PPG labeling pipeline.
//!
//! The crate turns a two-minute multi-sensor window into an HRV feature
//! vector ([`signal`]), scores its PPG quality ([`quality`]), predicts the
//! dominant physical activity ([`activity`]) and decides whether to ask the
//! wearer for a label ([`query`]). [`analytics`] computes the batch reports
//! over stored records and [`simulator`] produces synthetic subjects so the
//! whole loop can run without hardware.

pub mod activity;
pub mod analytics;
pub mod config;
pub mod dataset;
pub mod model;
pub mod quality;
pub mod query;
pub mod signal;
pub mod simulator;
pub mod spectrum;
pub(crate) mod stats;

pub use signal::{FeatureVector, FilterSpec, PpgWindow};
