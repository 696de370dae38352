//! Streaming RSSI link-quality outlier detection.
//!
//! The numeric core ([`stats`], [`ema`], [`detector`], [`baselines`]) is generic over the
//! scalar type through [`Real`]; the aliases below fix it to `f32` or `f64`. Trace IO,
//! simulation and the batch analysis work in `f64`.

pub mod analysis;
pub mod baselines;
pub mod channel;
pub mod config;
pub mod detector;
pub mod ema;
pub mod error;
pub mod io;
pub mod scalar;
pub mod stats;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Real;
pub use trace::{RssiSample, Trace};

pub type RunningStats64 = stats::RunningStats<f64>;
pub type RunningStats32 = stats::RunningStats<f32>;
pub type EmaState64 = ema::EmaState<f64>;
pub type EmaState32 = ema::EmaState<f32>;
pub type AlphaPolicy64 = ema::AlphaPolicy<f64>;
pub type AlphaPolicy32 = ema::AlphaPolicy<f32>;
pub type DetectorConfig64 = detector::DetectorConfig<f64>;
pub type DetectorConfig32 = detector::DetectorConfig<f32>;
pub type DetectorState64 = detector::DetectorState<f64>;
pub type DetectorState32 = detector::DetectorState<f32>;
pub type LinkDetector64 = detector::LinkDetector<f64>;
pub type LinkDetector32 = detector::LinkDetector<f32>;
