use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::StatsError;

/// Paired observations `(a, b)`; differences are `a - b`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairedSamples {
    pub pairs: Vec<(f64, f64)>,
}

impl PairedSamples {
    pub fn new(pairs: Vec<(f64, f64)>) -> Self {
        Self { pairs }
    }

    pub fn from_columns(a: &[f64], b: &[f64]) -> Self {
        assert_eq!(a.len(), b.len(), "paired columns differ in length");
        Self { pairs: a.iter().copied().zip(b.iter().copied()).collect() }
    }

    pub fn differences(&self) -> Vec<f64> {
        self.pairs.iter().map(|(a, b)| a - b).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMode {
    /// Exact null distribution of the signed-rank sum.
    Exact,
    /// Normal approximation with tie, continuity and kurtosis corrections.
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences (W+).
    pub statistic: f64,
    /// Number of nonzero differences that were ranked.
    pub n: usize,
    /// Standardized W+ (continuity corrected).
    pub z: f64,
    pub p_two_sided: f64,
    /// P(W+ <= observed): evidence that `a` tends to be smaller than `b`.
    pub p_less: f64,
    /// P(W+ >= observed): evidence that `a` tends to be larger than `b`.
    pub p_greater: f64,
}

/// Wilcoxon signed-rank test. Zero differences are dropped before ranking;
/// tied magnitudes share their average rank.
pub fn wilcoxon_signed_rank(samples: &PairedSamples, mode: WilcoxonMode) -> Result<WilcoxonResult, StatsError> {
    let diffs: Vec<f64> = samples.differences().into_iter().filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Err(StatsError::AllZeroDifferences);
    }

    // Ranks are kept doubled so tied (half-integer) ranks stay integral.
    let doubled = doubled_ranks(&diffs);
    let w_plus2: u64 = diffs.iter().zip(&doubled).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let statistic = w_plus2 as f64 / 2.0;

    // W+ is a sum of independent r_i * Bernoulli(1/2) terms, which gives
    // its cumulants directly from the (tied) ranks.
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let ranks = doubled.iter().map(|&r| r as f64 / 2.0);
    let var: f64 = ranks.clone().map(|r| r * r).sum::<f64>() / 4.0;
    let kappa4: f64 = -ranks.map(|r| r.powi(4)).sum::<f64>() / 8.0;
    let sd = var.sqrt();
    let shift = statistic - mean;
    let z = if sd > 0.0 { shift.signum() * (shift.abs() - 0.5).max(0.0) / sd } else { 0.0 };

    let (p_less, p_greater) = match mode {
        WilcoxonMode::Exact => {
            let dist = exact_distribution(&doubled);
            let at_most: f64 = dist[..=w_plus2 as usize].iter().sum();
            let at_least: f64 = dist[w_plus2 as usize..].iter().sum();
            (at_most.min(1.0), at_least.min(1.0))
        }
        WilcoxonMode::NormalApprox => {
            if sd > 0.0 {
                let cdf = |x: f64| edgeworth_cdf(x / sd, kappa4 / (var * var));
                (cdf(shift + 0.5), 1.0 - cdf(shift - 0.5))
            } else {
                (1.0, 1.0)
            }
        }
    };
    let p_two_sided = (2.0 * p_less.min(p_greater)).min(1.0);

    Ok(WilcoxonResult { statistic, n, z, p_two_sided, p_less, p_greater })
}

fn doubled_ranks(diffs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut ranks = vec![0u64; diffs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && diffs[order[end]].abs() == diffs[order[start]].abs() {
            end += 1;
        }
        // positions start+1 ..= end share rank (start+1+end)/2
        let rank2 = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = rank2;
        }
        start = end;
    }
    ranks
}

/// Null distribution of doubled W+: each rank enters with probability 1/2.
fn exact_distribution(doubled: &[u64]) -> Vec<f64> {
    let total: u64 = doubled.iter().sum();
    let mut dist = vec![0.0; total as usize + 1];
    dist[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let p = dist[s] * 0.5;
            dist[s] = p;
            dist[s + r] += p;
        }
        reach += r;
    }
    dist
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Normal CDF with the excess-kurtosis term of the Edgeworth series; the
/// signed-rank null is symmetric, so there is no skewness term.
fn edgeworth_cdf(z: f64, excess_kurtosis: f64) -> f64 {
    let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (normal_cdf(z) - excess_kurtosis / 24.0 * (z.powi(3) - 3.0 * z) * density).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn all_negative_triplet() {
        let s = PairedSamples::new(vec![(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]);
        let r = wilcoxon_signed_rank(&s, WilcoxonMode::Exact).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.n, 3);
        assert_abs_diff_eq!(r.p_less, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(r.p_two_sided, 0.25, epsilon = 1e-15);
        assert_eq!(r.p_greater, 1.0);
    }

    #[test]
    fn zero_differences() {
        let s = PairedSamples::new(vec![(1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(wilcoxon_signed_rank(&s, WilcoxonMode::Exact), Err(StatsError::AllZeroDifferences));
        assert_eq!(wilcoxon_signed_rank(&s, WilcoxonMode::NormalApprox), Err(StatsError::AllZeroDifferences));
        let s = PairedSamples::new(vec![(1.0, 1.0), (2.0, 3.0)]);
        assert_eq!(wilcoxon_signed_rank(&s, WilcoxonMode::Exact).unwrap().n, 1);
    }

    #[test]
    fn tied_ranks_are_averaged() {
        // |d| = {1, 1, 2}: ranks 1.5, 1.5, 3
        let s = PairedSamples::from_columns(&[2.0, 0.0, 5.0], &[1.0, 1.0, 3.0]);
        let r = wilcoxon_signed_rank(&s, WilcoxonMode::Exact).unwrap();
        assert_eq!(r.statistic, 4.5);
        // signings with W+ >= 4.5: {1.5,3}, {1.5',3}, {1.5,1.5',3} -> 3/8
        assert_abs_diff_eq!(r.p_greater, 0.375, epsilon = 1e-15);
    }

    #[test]
    fn normal_approximation_symmetric_center() {
        // ranks 1.5, 1.5, 3.5, 3.5: W+ = 5 = n(n+1)/4
        let s = PairedSamples::from_columns(&[1.0, -1.0, 2.0, -2.0], &[0.0; 4]);
        let r = wilcoxon_signed_rank(&s, WilcoxonMode::NormalApprox).unwrap();
        assert_eq!(r.statistic, 5.0);
        assert_eq!(r.z, 0.0);
        assert_eq!(r.p_two_sided, 1.0);
    }
}
