//! Median / median-absolute-deviance normalization and outlier rejection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{median, Scalar};

/// Default rejection threshold in MAD units.
pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 15.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("no responses to fit normalization parameters")]
    EmptyInput,
    #[error("median absolute deviance is zero")]
    DegenerateDispersion,
    #[error("non-finite response value")]
    NonFinite,
}

/// Location and robust scale of one question's response distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams<T> {
    pub median: T,
    pub mad: T,
}

impl<T: Scalar> NormParams<T> {
    /// Builds parameters from known values; `mad` must be positive and finite.
    pub fn new(median: T, mad: T) -> Result<Self, NormError> {
        if !median.is_finite() || !mad.is_finite() {
            return Err(NormError::NonFinite);
        }
        if mad <= T::zero() {
            return Err(NormError::DegenerateDispersion);
        }
        Ok(Self { median, mad })
    }

    /// Maps a response onto the common scale: `(x - median) / mad`.
    pub fn normalize(&self, x: T) -> T {
        (x - self.median) / self.mad
    }

    pub fn denormalize(&self, n: T) -> T {
        n * self.mad + self.median
    }
}

/// Fits median and MAD to a set of responses.
pub fn fit_params<T: Scalar>(responses: &[T]) -> Result<NormParams<T>, NormError> {
    fit_with_fallback(responses, None)
}

/// Like [`fit_params`], but substitutes `fallback_scale` when the MAD is
/// zero. The fallback is explicit; nothing is substituted silently.
pub fn fit_with_fallback<T: Scalar>(
    responses: &[T],
    fallback_scale: Option<T>,
) -> Result<NormParams<T>, NormError> {
    if responses.iter().any(|x| !x.is_finite()) {
        return Err(NormError::NonFinite);
    }
    let center = median(responses).ok_or(NormError::EmptyInput)?;
    let deviations: Vec<T> = responses.iter().map(|&x| (x - center).abs()).collect();
    let mad = median(&deviations).ok_or(NormError::EmptyInput)?;
    match (mad > T::zero(), fallback_scale) {
        (true, _) => NormParams::new(center, mad),
        (false, Some(scale)) => NormParams::new(center, scale),
        (false, None) => Err(NormError::DegenerateDispersion),
    }
}

pub fn normalize_value<T: Scalar>(x: T, params: &NormParams<T>) -> T {
    params.normalize(x)
}

/// Whether `x` lies more than `threshold` MADs from the median.
pub fn is_outlier<T: Scalar>(x: T, params: &NormParams<T>, threshold: T) -> bool {
    params.normalize(x).abs() > threshold
}

/// Keeps responses within `threshold` MADs of the median, in input order.
/// A value exactly at the threshold is kept.
pub fn reject_outliers<T: Scalar>(responses: &[T], params: &NormParams<T>, threshold: T) -> Vec<T> {
    assert!(threshold > T::zero(), "outlier threshold must be positive");
    responses
        .iter()
        .copied()
        .filter(|&x| !is_outlier(x, params, threshold))
        .collect()
}
