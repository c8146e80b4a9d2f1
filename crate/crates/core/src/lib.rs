//! Analysis of crowd estimates before and after small-group deliberation.
//!
//! The numeric core (`normalize`, `rules`, `stats`) is generic over
//! [`num::Scalar`], implemented for `f32` and `f64`. Data handling,
//! resampling and simulation work in `f64`.

pub mod analysis;
pub mod dataset;
pub mod normalize;
pub mod num;
pub mod resample;
pub mod rng;
pub mod rules;
pub mod stats;
pub mod synth;

pub use num::Scalar;

pub type NormParams64 = normalize::NormParams<f64>;
pub type NormParams32 = normalize::NormParams<f32>;
pub type AggregationRule64 = rules::AggregationRule<f64>;
pub type AggregationRule32 = rules::AggregationRule<f32>;
pub type GroupInputs64<'a> = rules::GroupInputs<'a, f64>;
pub type GroupInputs32<'a> = rules::GroupInputs<'a, f32>;
