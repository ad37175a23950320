//! Unsupervised sleep/wake scoring of actigraphy counts with a two-state
//! hidden Markov model, a threshold-based comparator, and agreement metrics.
//!
//! The numerical core is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix it to `f64`, with `*32` variants for `f32`.

pub mod actiwatch;
pub mod emissions;
pub mod hmm;
pub mod ingest;
pub mod metrics;
pub mod postprocess;
pub mod report;
pub mod scalar;
pub mod simulate;
pub mod verify;

pub use ingest::{EpochSeries, State, StateSequence, StudyWindow};

pub type Params = hmm::HmmParams<f64>;
pub type Params32 = hmm::HmmParams<f32>;
pub type Sleep = emissions::SleepEmission<f64>;
pub type Sleep32 = emissions::SleepEmission<f32>;
pub type Wake = emissions::WakeEmission<f64>;
pub type Wake32 = emissions::WakeEmission<f32>;
pub type Logs = ingest::LogSeries<f64>;
pub type Logs32 = ingest::LogSeries<f32>;
pub type Fit = hmm::FitReport<f64>;
pub type Fit32 = hmm::FitReport<f32>;
