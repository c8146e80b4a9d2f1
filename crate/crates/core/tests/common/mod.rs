//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

/// Average ranks of `|d|`, computed by counting rather than sorting.
pub fn naive_abs_ranks(d: &[f64]) -> Vec<f64> {
    d.iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// One-sided p-values `(P(W+ <= w), P(W+ >= w))` by listing all 2^n signings.
pub fn enumerate_signed_rank(diffs: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let ranks = naive_abs_ranks(&d);
    let observed: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let total = 1u64 << n;
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0..total {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= observed + 1e-9 {
            le += 1;
        }
        if w >= observed - 1e-9 {
            ge += 1;
        }
    }
    (le as f64 / total as f64, ge as f64 / total as f64)
}

/// Collective estimate of a group by rule name, written from the rule
/// definitions without sharing any code with the library.
pub fn oracle_rule(name: &str, x: &[f64], revised: &[f64], confidence: &[u8], epsilon: f64, k: f64) -> f64 {
    let n = x.len() as f64;
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    match name {
        "resistance_weighted" => {
            let raw: Vec<f64> = x.iter().zip(revised).map(|(a, b)| 1.0 / ((b - a).abs() + epsilon)).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().zip(x).map(|(w, v)| w / total * v).sum()
        }
        "confidence_weighted" => {
            let total: f64 = confidence.iter().map(|&c| c as f64).sum();
            if total == 0.0 {
                x.iter().sum::<f64>() / n
            } else {
                confidence.iter().zip(x).map(|(&c, v)| c as f64 * v).sum::<f64>() / total
            }
        }
        "expert" => {
            let mut best = 0;
            for i in 1..x.len() {
                if confidence[i] > confidence[best] {
                    best = i;
                }
            }
            x[best]
        }
        "median" => {
            let m = sorted.len();
            if m % 2 == 1 {
                sorted[m / 2]
            } else {
                (sorted[m / 2 - 1] + sorted[m / 2]) / 2.0
            }
        }
        "soft_median" => 0.25 * sorted[1] + 0.5 * sorted[2] + 0.25 * sorted[3],
        "mean" => x.iter().sum::<f64>() / n,
        "robust_average" => {
            let center = (x.iter().sum::<f64>() / n).log10();
            let kept: Vec<f64> = x.iter().copied().filter(|v| (v.log10() - center).abs() <= k).collect();
            kept.iter().sum::<f64>() / kept.len() as f64
        }
        other => panic!("unknown rule {other}"),
    }
}
