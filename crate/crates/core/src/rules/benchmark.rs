//! Benchmark of consensus rules against the groups' real consensus.
//!
//! Each rule turns every group into one collective estimate. An iteration
//! draws `sample_size` groups with replacement per question and scores the
//! average of their collective estimates; all rules and the empirical
//! consensus see the same draws, and scores are averaged across questions.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{apply_rule, AggregationRule, GroupInputs, RuleError};
use crate::dataset::QuestionPanel;
use crate::normalize::NormParams;
use crate::rng::{self, stream_id};
use crate::stats::mean_and_sem;

pub const DEFAULT_SAMPLE_SIZE: usize = 100;
/// Name under which the groups' own consensus is reported.
pub const EMPIRICAL_CONSENSUS: &str = "empirical_consensus";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchmarkError {
    #[error("no questions to benchmark")]
    NoPanels,
    #[error("question `{0}` has no groups")]
    EmptyPanel(String),
    #[error("{panels} panels but {params} normalization parameter sets")]
    ParamsMismatch { panels: usize, params: usize },
    #[error("group `{group}` on `{question}` has no numeric consensus")]
    MissingConsensus { question: String, group: String },
    #[error("{rule} failed on group `{group}`, question `{question}`: {source}")]
    Rule { rule: &'static str, question: String, group: String, source: RuleError },
    #[error("sample size and iterations must be positive")]
    ZeroSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub sample_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub rules: Vec<AggregationRule<f64>>,
}

impl BenchmarkConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self { sample_size: DEFAULT_SAMPLE_SIZE, iterations, seed, rules: AggregationRule::standard() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleScore {
    pub name: String,
    pub mean_error: f64,
    pub sem: f64,
    /// Question-averaged error of each iteration.
    #[serde(skip)]
    pub per_iteration: Vec<f64>,
}

impl RuleScore {
    fn new(name: &str, per_iteration: Vec<f64>) -> Self {
        let (mean_error, sem) = mean_and_sem(&per_iteration);
        Self { name: name.to_string(), mean_error, sem, per_iteration }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub questions: Vec<String>,
    pub sample_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// One score per configured rule, in configuration order.
    pub rules: Vec<RuleScore>,
    pub consensus: RuleScore,
}

impl BenchmarkReport {
    pub fn score(&self, name: &str) -> Option<&RuleScore> {
        std::iter::once(&self.consensus).chain(&self.rules).find(|s| s.name == name)
    }

    /// `{name: {mean_error, sem}}` including the empirical consensus.
    pub fn table(&self) -> serde_json::Value {
        let map = self
            .rules
            .iter()
            .chain(std::iter::once(&self.consensus))
            .map(|s| (s.name.clone(), serde_json::json!({ "mean_error": s.mean_error, "sem": s.sem })))
            .collect();
        serde_json::Value::Object(map)
    }

    /// Rules whose mean error is not above the consensus error.
    pub fn rules_matching_consensus(&self) -> Vec<&RuleScore> {
        self.rules.iter().filter(|s| s.mean_error <= self.consensus.mean_error).collect()
    }
}

/// Collective estimate of every group under every rule, plus the real consensus.
struct QuestionTable {
    by_rule: Vec<Vec<f64>>,
    consensus: Vec<f64>,
    truth: f64,
    mad: f64,
}

fn tabulate(
    panel: &QuestionPanel,
    params: &NormParams<f64>,
    rules: &[AggregationRule<f64>],
) -> Result<QuestionTable, BenchmarkError> {
    let code = &panel.question.code;
    if panel.groups.is_empty() {
        return Err(BenchmarkError::EmptyPanel(code.clone()));
    }
    let consensus = panel
        .groups
        .iter()
        .map(|g| {
            g.consensus.ok_or_else(|| BenchmarkError::MissingConsensus {
                question: code.clone(),
                group: g.group_id.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let by_rule = rules
        .iter()
        .map(|rule| {
            panel
                .groups
                .iter()
                .map(|g| {
                    // missing ratings count as zero, which the rule treats as equal weights
                    let zeros = vec![0u8; g.initial.len()];
                    let confidence = g.initial_confidence.as_deref().unwrap_or(&zeros);
                    let inputs = GroupInputs::new(&g.initial).with_revised(&g.revised).with_confidence(confidence);
                    apply_rule(rule, &inputs).map_err(|source| BenchmarkError::Rule {
                        rule: rule.name(),
                        question: code.clone(),
                        group: g.group_id.clone(),
                        source,
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QuestionTable { by_rule, consensus, truth: panel.question.truth, mad: params.mad })
}

/// Scores every configured rule and the empirical consensus.
pub fn rule_benchmark(
    panels: &[QuestionPanel],
    params: &[NormParams<f64>],
    config: &BenchmarkConfig,
) -> Result<BenchmarkReport, BenchmarkError> {
    if panels.is_empty() {
        return Err(BenchmarkError::NoPanels);
    }
    if panels.len() != params.len() {
        return Err(BenchmarkError::ParamsMismatch { panels: panels.len(), params: params.len() });
    }
    if config.sample_size == 0 || config.iterations == 0 {
        return Err(BenchmarkError::ZeroSize);
    }
    let tables = panels
        .iter()
        .zip(params)
        .map(|(p, np)| tabulate(p, np, &config.rules))
        .collect::<Result<Vec<_>, _>>()?;
    let n_rules = config.rules.len();
    let q = tables.len() as f64;

    // per iteration: errors for each rule followed by the consensus
    let rows: Vec<Vec<f64>> = (0..config.iterations)
        .into_par_iter()
        .map(|it| {
            let mut acc = vec![0.0; n_rules + 1];
            let mut draw = Vec::with_capacity(config.sample_size);
            for (qi, t) in tables.iter().enumerate() {
                let mut rng = rng::stream(config.seed, stream_id(it as u64, qi as u64));
                draw.clear();
                draw.extend((0..config.sample_size).map(|_| rng.gen_range(0..t.consensus.len())));
                let score = |values: &[f64]| {
                    let mean = draw.iter().map(|&g| values[g]).sum::<f64>() / draw.len() as f64;
                    (mean - t.truth).abs() / t.mad
                };
                for (r, values) in t.by_rule.iter().enumerate() {
                    acc[r] += score(values);
                }
                acc[n_rules] += score(&t.consensus);
            }
            acc.iter().map(|e| e / q).collect()
        })
        .collect();

    let column = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<_>>();
    Ok(BenchmarkReport {
        questions: panels.iter().map(|p| p.question.code.clone()).collect(),
        sample_size: config.sample_size,
        iterations: config.iterations,
        seed: config.seed,
        rules: config.rules.iter().enumerate().map(|(r, rule)| RuleScore::new(rule.name(), column(r))).collect(),
        consensus: RuleScore::new(EMPIRICAL_CONSENSUS, column(n_rules)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    /// `(epsilon, mean error)` of the resistance-weighted rule.
    pub epsilon_scores: Vec<(f64, f64)>,
    /// `(k, mean error)` of the robust average.
    pub k_scores: Vec<(f64, f64)>,
    pub best_epsilon: f64,
    pub best_k: f64,
    pub consensus_error: f64,
}

impl GridSearchResult {
    pub fn best_epsilon_error(&self) -> f64 {
        self.epsilon_scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min)
    }

    pub fn best_k_error(&self) -> f64 {
        self.k_scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min)
    }
}

/// Log-spaced smoothing constants from 0.1 to 1000, three per decade.
pub fn default_epsilon_grid() -> Vec<f64> {
    (0..=12).map(|i| 10f64.powf(-1.0 + i as f64 / 3.0)).collect()
}

/// Tolerances of 1 through 10 decades.
pub fn default_k_grid() -> Vec<f64> {
    (1..=10).map(f64::from).collect()
}

/// Tunes the two parameterized rules on the same draws as the consensus.
pub fn grid_search(
    panels: &[QuestionPanel],
    params: &[NormParams<f64>],
    config: &BenchmarkConfig,
    epsilons: &[f64],
    ks: &[f64],
) -> Result<GridSearchResult, BenchmarkError> {
    let rules = epsilons
        .iter()
        .map(|&epsilon| AggregationRule::ResistanceWeighted { epsilon })
        .chain(ks.iter().map(|&k| AggregationRule::RobustAverage { k }))
        .collect();
    let report = rule_benchmark(panels, params, &BenchmarkConfig { rules, ..config.clone() })?;
    let (eps_part, k_part) = report.rules.split_at(epsilons.len());
    let pick = |grid: &[f64], scores: &[RuleScore]| -> (Vec<(f64, f64)>, f64) {
        let pairs: Vec<(f64, f64)> = grid.iter().copied().zip(scores.iter().map(|s| s.mean_error)).collect();
        let best = pairs.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map_or(f64::NAN, |p| p.0);
        (pairs, best)
    };
    let (epsilon_scores, best_epsilon) = pick(epsilons, eps_part);
    let (k_scores, best_k) = pick(ks, k_part);
    Ok(GridSearchResult {
        epsilon_scores,
        k_scores,
        best_epsilon,
        best_k,
        consensus_error: report.consensus.mean_error,
    })
}
