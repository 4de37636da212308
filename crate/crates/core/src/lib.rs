//! Joint identification and channel-state sensing over state-dependent
//! multiple access channels with noiseless strictly causal feedback.

pub mod binary_adder;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod fmt;
pub mod idf;
pub mod region;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` channel description.
pub type SdMacSpec64 = channel::SdMacSpec<f64>;
/// `f32` channel description.
pub type SdMacSpec32 = channel::SdMacSpec<f32>;
/// `f64` state-averaged channel.
pub type AveragedChannel64 = channel::AveragedChannel<f64>;
/// `f32` state-averaged channel.
pub type AveragedChannel32 = channel::AveragedChannel<f32>;
/// `f64` per-sender input model.
pub type InputModel64 = estimator::InputModel<f64>;
/// `f64` state-posterior table.
pub type PosteriorTable64 = estimator::PosteriorTable<f64>;
/// `f64` optimal-estimator table.
pub type EstimatorTable64 = estimator::EstimatorTable<f64>;
/// `f32` optimal-estimator table.
pub type EstimatorTable32 = estimator::EstimatorTable<f32>;
/// `f64` rate-distortion bound point.
pub type RegionPoint64 = region::RegionPoint<f64>;
/// `f32` rate-distortion bound point.
pub type RegionPoint32 = region::RegionPoint<f32>;
/// `f64` optimizer configuration.
pub type OptConfig64 = region::OptConfig<f64>;
/// `f64` code-construction parameters.
pub type BuildParams64 = idf::BuildParams<f64>;
/// `f64` built identification code.
pub type IdfCode64 = idf::IdfCode<f64>;
/// `f64` Monte Carlo statistics.
pub type ErrorStats64 = sim::ErrorStats<f64>;
/// `f64` binomial proportion with its interval.
pub type Proportion64 = sim::Proportion<f64>;
