//! Bias and variance measures on the normalized scale, plus the
//! nonparametric tests used to compare them.

mod homogeneity;
mod wilcoxon;

pub use homogeneity::{squared_rank_homogeneity, HomogeneityResult, DEFAULT_PERMUTATIONS};
pub use wilcoxon::{wilcoxon_signed_rank, PairedSamples, WilcoxonMode, WilcoxonResult};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::normalize::NormParams;
use crate::num::Scalar;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("reference error is zero")]
    DivisionByZero,
}

/// Signed error of an estimate in MAD units.
pub fn signed_bias<T: Scalar>(estimate: T, truth: T, params: &NormParams<T>) -> T {
    (estimate - truth) / params.mad
}

/// Absolute distance between two estimates in MAD units.
pub fn distance<T: Scalar>(a: T, b: T, params: &NormParams<T>) -> T {
    (a - b).abs() / params.mad
}

/// Unbiased (n - 1) sample variance.
pub fn sample_variance<T: Scalar>(values: &[T]) -> Result<T, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::InsufficientData { needed: 2, got: values.len() });
    }
    let n = T::from_usize_lossy(values.len());
    let mean = values.iter().fold(T::zero(), |acc, &v| acc + v) / n;
    let ss = values.iter().fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean));
    Ok(ss / (n - T::one()))
}

/// Population (n) variance.
pub fn population_variance<T: Scalar>(values: &[T]) -> Result<T, StatsError> {
    if values.is_empty() {
        return Err(StatsError::InsufficientData { needed: 1, got: 0 });
    }
    let n = T::from_usize_lossy(values.len());
    let mean = values.iter().fold(T::zero(), |acc, &v| acc + v) / n;
    Ok(values.iter().fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / n)
}

/// Spread of one group's normalized estimates.
pub fn variance_within<T: Scalar>(group_values: &[T]) -> Result<T, StatsError> {
    sample_variance(group_values)
}

/// Spread of per-group mean normalized estimates across groups.
pub fn variance_between<T: Scalar>(group_means: &[T]) -> Result<T, StatsError> {
    sample_variance(group_means)
}

/// Percent decrease from `err_before` to `err_after`.
pub fn error_reduction<T: Scalar>(err_before: T, err_after: T) -> Result<T, StatsError> {
    if !(err_before > T::zero()) {
        return Err(StatsError::DivisionByZero);
    }
    Ok(T::lit(100.0) * (T::one() - err_after / err_before))
}

pub fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sem = match sample_variance(values) {
        Ok(var) => (var / n as f64).sqrt(),
        Err(_) => 0.0,
    };
    (mean, sem)
}

/// Average ranks (1-based) with ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p_two_sided: f64,
    pub n: usize,
}

/// Spearman rank correlation with a Student-t p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let n = x.len();
    if n < 3 {
        return Err(StatsError::InsufficientData { needed: 3, got: n });
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation { rho: 0.0, p_two_sided: 1.0, n });
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p_two_sided = if rho.abs() >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("valid degrees of freedom");
        2.0 * dist.cdf(-t.abs())
    };
    Ok(Correlation { rho, p_two_sided, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov-Smirnov test against Uniform(0, 1).
pub fn ks_uniform(samples: &[f64]) -> Result<KsResult, StatsError> {
    let n = samples.len();
    if n == 0 {
        return Err(StatsError::InsufficientData { needed: 1, got: 0 });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let u = u.clamp(0.0, 1.0);
            ((i + 1) as f64 / nf - u).max(u - i as f64 / nf)
        })
        .fold(0.0, f64::max);
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok(KsResult { statistic: d, p_value: kolmogorov_survival(lambda) })
}

fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64), StatsError> {
    if values.len() < 2 {
        return Err(StatsError::InsufficientData { needed: 2, got: values.len() });
    }
    let mut rng = rng::stream(seed, 0);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let pick = |q: f64| means[((q * (means.len() - 1) as f64).round() as usize).min(means.len() - 1)];
    Ok((pick(tail), pick(1.0 - tail)))
}
