use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{average_ranks, StatsError};
use crate::rng;

pub const DEFAULT_PERMUTATIONS: usize = 10_000;
const BLOCK: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityResult {
    /// Sum of squared ranks of the first sample's absolute deviations.
    pub statistic: f64,
    /// Permutation-null expectation of `statistic`.
    pub expected: f64,
    /// Two-sided permutation p-value.
    pub p: f64,
    pub permutations: usize,
}

/// Conover squared-ranks test for equal dispersion of two samples.
///
/// Deviations are taken from each sample's own mean, pooled and ranked; the
/// statistic is the first sample's sum of squared ranks. The p-value counts
/// label permutations at least as far from the null mean as the observed
/// statistic. Permutations run in blocks on independent random streams, so
/// the result does not depend on the thread count.
pub fn squared_rank_homogeneity(
    sample_a: &[f64],
    sample_b: &[f64],
    permutations: usize,
    seed: u64,
) -> Result<HomogeneityResult, StatsError> {
    for s in [sample_a, sample_b] {
        if s.len() < 2 {
            return Err(StatsError::InsufficientData { needed: 2, got: s.len() });
        }
    }
    let deviations = |s: &[f64]| {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(move |x| (x - mean).abs()).collect::<Vec<_>>()
    };
    let pooled: Vec<f64> = deviations(sample_a).into_iter().chain(deviations(sample_b)).collect();
    let squared: Vec<f64> = average_ranks(&pooled).into_iter().map(|r| r * r).collect();
    let n_a = sample_a.len();

    let statistic: f64 = squared[..n_a].iter().sum();
    let expected = n_a as f64 * squared.iter().sum::<f64>() / squared.len() as f64;
    let observed = (statistic - expected).abs();
    let tolerance = 1e-9 * expected.max(1.0);

    let blocks = permutations.div_ceil(BLOCK);
    let extreme: usize = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = rng::stream(seed, block as u64);
            let todo = BLOCK.min(permutations - block * BLOCK);
            let (mut scratch, mut picked) = (Vec::new(), Vec::new());
            (0..todo)
                .filter(|_| {
                    rng::sample_indices(&mut rng, squared.len(), n_a, &mut scratch, &mut picked);
                    let t: f64 = picked.iter().map(|&i| squared[i]).sum();
                    (t - expected).abs() >= observed - tolerance
                })
                .count()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();

    Ok(HomogeneityResult {
        statistic,
        expected,
        p: (extreme + 1) as f64 / (permutations + 1) as f64,
        permutations,
    })
}
