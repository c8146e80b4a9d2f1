//! Simulated consensus rules.
//!
//! Each rule maps the initial estimates of a group (plus, depending on the
//! rule, revised estimates or confidence ratings) to one collective estimate
//! `j = sum_i w_i x_i`. [`weights`] exposes the weight vector; [`apply_rule`]
//! takes the weighted sum.

mod benchmark;

pub use benchmark::{
    default_epsilon_grid, default_k_grid, grid_search, rule_benchmark, BenchmarkConfig, BenchmarkError,
    BenchmarkReport, GridSearchResult, RuleScore, DEFAULT_SAMPLE_SIZE, EMPIRICAL_CONSENSUS,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;
use crate::rng;

/// Smoothing constant of the resistance-weighted rule.
pub const DEFAULT_EPSILON: f64 = 1.0;
/// Decades of tolerance of the robust average.
pub const DEFAULT_K: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("group has no estimates")]
    EmptyGroup,
    #[error("{rule} needs revised estimates")]
    MissingRevised { rule: &'static str },
    #[error("{rule} needs confidence ratings")]
    MissingConfidence { rule: &'static str },
    #[error("{field} has {found} entries, expected {expected}")]
    LengthMismatch { field: &'static str, expected: usize, found: usize },
    #[error("soft median is defined for groups of exactly 5, got {0}")]
    WrongGroupSize(usize),
    #[error("robust average requires strictly positive estimates")]
    NonPositiveEstimate,
    #[error("robust average excluded every estimate")]
    AllExcluded,
    #[error("invalid rule parameter: {0}")]
    InvalidParameter(&'static str),
}

/// How the expert rule resolves equal top confidences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ExpertTiebreak {
    #[default]
    LowestIndex,
    /// Uniform choice among the tied members, reproducible from the seed.
    Seeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AggregationRule<T> {
    ResistanceWeighted { epsilon: T },
    ConfidenceWeighted,
    Expert { tiebreak: ExpertTiebreak },
    Median,
    SoftMedian,
    Mean,
    RobustAverage { k: T },
}

impl<T: Scalar> AggregationRule<T> {
    /// The seven rules in their customary order, with default parameters.
    pub fn standard() -> Vec<Self> {
        vec![
            Self::ResistanceWeighted { epsilon: T::lit(DEFAULT_EPSILON) },
            Self::ConfidenceWeighted,
            Self::Expert { tiebreak: ExpertTiebreak::LowestIndex },
            Self::Median,
            Self::SoftMedian,
            Self::Mean,
            Self::RobustAverage { k: T::lit(DEFAULT_K) },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ResistanceWeighted { .. } => "resistance_weighted",
            Self::ConfidenceWeighted => "confidence_weighted",
            Self::Expert { .. } => "expert",
            Self::Median => "median",
            Self::SoftMedian => "soft_median",
            Self::Mean => "mean",
            Self::RobustAverage { .. } => "robust_average",
        }
    }
}

/// Inputs of one group. `revised` and `confidence` are only read by the
/// rules that need them.
#[derive(Debug, Clone, Copy)]
pub struct GroupInputs<'a, T> {
    pub initial: &'a [T],
    pub revised: Option<&'a [T]>,
    pub confidence: Option<&'a [u8]>,
}

impl<'a, T> GroupInputs<'a, T> {
    pub fn new(initial: &'a [T]) -> Self {
        Self { initial, revised: None, confidence: None }
    }

    pub fn with_revised(mut self, revised: &'a [T]) -> Self {
        self.revised = Some(revised);
        self
    }

    pub fn with_confidence(mut self, confidence: &'a [u8]) -> Self {
        self.confidence = Some(confidence);
        self
    }
}

/// Collective estimate produced by `rule` for one group.
pub fn apply_rule<T: Scalar>(rule: &AggregationRule<T>, inputs: &GroupInputs<'_, T>) -> Result<T, RuleError> {
    let w = weights(rule, inputs)?;
    Ok(w.iter()
        .zip(inputs.initial)
        .fold(T::zero(), |acc, (&wi, &xi)| acc + wi * xi))
}

/// Weight vector of `rule` over the group's initial estimates. Weights are
/// nonnegative and sum to one.
pub fn weights<T: Scalar>(rule: &AggregationRule<T>, inputs: &GroupInputs<'_, T>) -> Result<Vec<T>, RuleError> {
    let x = inputs.initial;
    let n = x.len();
    if n == 0 {
        return Err(RuleError::EmptyGroup);
    }
    match *rule {
        AggregationRule::ResistanceWeighted { epsilon } => {
            if !(epsilon > T::zero()) {
                return Err(RuleError::InvalidParameter("epsilon must be positive"));
            }
            let r = inputs.revised.ok_or(RuleError::MissingRevised { rule: rule.name() })?;
            check_len("revised", n, r.len())?;
            let resistance: Vec<T> = x
                .iter()
                .zip(r)
                .map(|(&xi, &ri)| T::one() / ((ri - xi).abs() + epsilon))
                .collect();
            Ok(normalized(resistance))
        }
        AggregationRule::ConfidenceWeighted => {
            let c = inputs.confidence.ok_or(RuleError::MissingConfidence { rule: rule.name() })?;
            check_len("confidence", n, c.len())?;
            let total: u32 = c.iter().map(|&ci| u32::from(ci)).sum();
            if total == 0 {
                return Ok(uniform(n));
            }
            Ok(c.iter().map(|&ci| T::lit(f64::from(ci)) / T::lit(f64::from(total))).collect())
        }
        AggregationRule::Expert { tiebreak } => {
            let c = inputs.confidence.ok_or(RuleError::MissingConfidence { rule: rule.name() })?;
            check_len("confidence", n, c.len())?;
            let top = *c.iter().max().expect("non-empty");
            let tied: Vec<usize> = (0..n).filter(|&i| c[i] == top).collect();
            let chosen = match tiebreak {
                ExpertTiebreak::LowestIndex => tied[0],
                ExpertTiebreak::Seeded(seed) => tied[rng::stream(seed, 0).gen_range(0..tied.len())],
            };
            Ok(one_hot(n, chosen))
        }
        AggregationRule::Median => {
            let order = ascending_order(x);
            let mut w = vec![T::zero(); n];
            if n % 2 == 1 {
                w[order[n / 2]] = T::one();
            } else {
                let half = T::lit(0.5);
                w[order[n / 2 - 1]] = half;
                w[order[n / 2]] = half;
            }
            Ok(w)
        }
        AggregationRule::SoftMedian => {
            if n != 5 {
                return Err(RuleError::WrongGroupSize(n));
            }
            let order = ascending_order(x);
            let by_rank = [0.0, 0.25, 0.5, 0.25, 0.0];
            let mut w = vec![T::zero(); n];
            for (rank, &member) in order.iter().enumerate() {
                w[member] = T::lit(by_rank[rank]);
            }
            Ok(w)
        }
        AggregationRule::Mean => Ok(uniform(n)),
        AggregationRule::RobustAverage { k } => {
            if !(k >= T::one()) {
                return Err(RuleError::InvalidParameter("k must be at least 1"));
            }
            if x.iter().any(|&xi| !(xi > T::zero())) {
                return Err(RuleError::NonPositiveEstimate);
            }
            let mean = x.iter().fold(T::zero(), |acc, &xi| acc + xi) / T::from_usize_lossy(n);
            let center = mean.log10();
            let keep: Vec<bool> = x.iter().map(|&xi| (xi.log10() - center).abs() <= k).collect();
            let survivors = keep.iter().filter(|&&kept| kept).count();
            if survivors == 0 {
                return Err(RuleError::AllExcluded);
            }
            let share = T::one() / T::from_usize_lossy(survivors);
            Ok(keep.iter().map(|&kept| if kept { share } else { T::zero() }).collect())
        }
    }
}

fn check_len(field: &'static str, expected: usize, found: usize) -> Result<(), RuleError> {
    if expected == found {
        Ok(())
    } else {
        Err(RuleError::LengthMismatch { field, expected, found })
    }
}

fn uniform<T: Scalar>(n: usize) -> Vec<T> {
    vec![T::one() / T::from_usize_lossy(n); n]
}

fn one_hot<T: Scalar>(n: usize, at: usize) -> Vec<T> {
    let mut w = vec![T::zero(); n];
    w[at] = T::one();
    w
}

fn normalized<T: Scalar>(raw: Vec<T>) -> Vec<T> {
    let total = raw.iter().fold(T::zero(), |acc, &v| acc + v);
    raw.into_iter().map(|v| v / total).collect()
}

/// Member indices sorted by estimate; equal estimates keep member order.
fn ascending_order<T: Scalar>(x: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(std::cmp::Ordering::Equal));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const X: [f64; 5] = [10.0, 20.0, 30.0, 40.0, 50.0];

    fn apply(rule: AggregationRule<f64>, inputs: GroupInputs<'_, f64>) -> f64 {
        apply_rule(&rule, &inputs).unwrap()
    }

    #[test]
    fn median_and_soft_median() {
        assert_eq!(apply(AggregationRule::Median, GroupInputs::new(&[2.0, 3.0, 5.0, 8.0, 100.0])), 5.0);
        assert_eq!(apply(AggregationRule::Median, GroupInputs::new(&[8.0, 2.0, 3.0, 100.0])), 5.5);
        assert_eq!(apply(AggregationRule::SoftMedian, GroupInputs::new(&[1.0, 2.0, 3.0, 4.0, 5.0])), 3.0);
        assert_eq!(apply(AggregationRule::SoftMedian, GroupInputs::new(&[5.0, 1.0, 4.0, 2.0, 3.0])), 3.0);
    }

    #[test]
    fn confidence_rules() {
        let c = [3, 9, 5, 1, 2];
        let expert = AggregationRule::Expert { tiebreak: ExpertTiebreak::LowestIndex };
        assert_eq!(apply(expert, GroupInputs::new(&X).with_confidence(&c)), 20.0);
        let c = [1, 1, 1, 1, 6];
        assert_abs_diff_eq!(
            apply(AggregationRule::ConfidenceWeighted, GroupInputs::new(&X).with_confidence(&c)),
            40.0,
            epsilon = 1e-12
        );
        let zeros = [0; 5];
        assert_abs_diff_eq!(
            apply(AggregationRule::ConfidenceWeighted, GroupInputs::new(&X).with_confidence(&zeros)),
            30.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn expert_ties() {
        let c = [7, 2, 7, 7, 1];
        let lowest = AggregationRule::Expert { tiebreak: ExpertTiebreak::LowestIndex };
        assert_eq!(apply(lowest, GroupInputs::new(&X).with_confidence(&c)), 10.0);
        for seed in 0..20 {
            let seeded = AggregationRule::Expert { tiebreak: ExpertTiebreak::Seeded(seed) };
            let j = apply(seeded, GroupInputs::new(&X).with_confidence(&c));
            assert!([10.0, 30.0, 40.0].contains(&j));
            assert_eq!(j, apply(seeded, GroupInputs::new(&X).with_confidence(&c)));
        }
    }

    #[test]
    fn resistance_weighted() {
        let r = [10.0, 25.0, 35.0, 40.0, 50.0];
        let rule = AggregationRule::ResistanceWeighted { epsilon: 1.0 };
        let w = weights(&rule, &GroupInputs::new(&X).with_revised(&r)).unwrap();
        for (got, want) in w.iter().zip([0.3, 0.05, 0.05, 0.3, 0.3]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(apply(rule, GroupInputs::new(&X).with_revised(&r)), 32.5, epsilon = 1e-12);
    }

    #[test]
    fn robust_average() {
        let rule = AggregationRule::RobustAverage { k: 4.0 };
        assert_abs_diff_eq!(apply(rule, GroupInputs::new(&[100.0, 120.0, 130.0, 110.0, 90.0])), 110.0, epsilon = 1e-9);
        assert_eq!(apply(rule, GroupInputs::new(&[100.0, 120.0, 130.0, 110.0, 2e9])), 2e9);
        assert_eq!(
            apply_rule(&rule, &GroupInputs::new(&[1.0, 0.0, 3.0])),
            Err(RuleError::NonPositiveEstimate)
        );
    }

    #[test]
    fn missing_inputs() {
        let resist = AggregationRule::ResistanceWeighted { epsilon: 1.0 };
        assert!(matches!(apply_rule(&resist, &GroupInputs::new(&X)), Err(RuleError::MissingRevised { .. })));
        assert!(matches!(
            apply_rule(&AggregationRule::ConfidenceWeighted, &GroupInputs::new(&X)),
            Err(RuleError::MissingConfidence { .. })
        ));
        assert!(matches!(
            apply_rule(&AggregationRule::Expert { tiebreak: ExpertTiebreak::LowestIndex }, &GroupInputs::new(&X)),
            Err(RuleError::MissingConfidence { .. })
        ));
        assert_eq!(
            apply_rule(&AggregationRule::SoftMedian, &GroupInputs::new(&[1.0, 2.0, 3.0])),
            Err(RuleError::WrongGroupSize(3))
        );
        assert_eq!(apply_rule(&AggregationRule::<f64>::Mean, &GroupInputs::new(&[])), Err(RuleError::EmptyGroup));
        let short = [1u8, 2];
        assert!(matches!(
            apply_rule(&AggregationRule::ConfidenceWeighted, &GroupInputs::new(&X).with_confidence(&short)),
            Err(RuleError::LengthMismatch { .. })
        ));
        let bad = AggregationRule::ResistanceWeighted { epsilon: 0.0 };
        assert!(matches!(
            apply_rule(&bad, &GroupInputs::new(&X).with_revised(&X)),
            Err(RuleError::InvalidParameter(_))
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let x = [10.0_f32, 20.0, 30.0, 40.0, 50.0];
        let j = apply_rule(&AggregationRule::SoftMedian, &GroupInputs::new(&x)).unwrap();
        assert_eq!(j, 30.0);
        assert_eq!(AggregationRule::<f32>::standard().len(), 7);
    }
}
