//! End-to-end analyses over a [`Dataset`]: normalization fits, the
//! deliberation effect report, pooled error curves and error reduction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, GroupAnswers, QuestionPanel, Stage};
use crate::normalize::{fit_params, is_outlier, NormError, NormParams, DEFAULT_OUTLIER_THRESHOLD};
use crate::resample::{self, ErrorCurve, ReductionPoint, ResampleConfig, ResampleError, SamplingMode};
use crate::stats::{
    distance, signed_bias, squared_rank_homogeneity, wilcoxon_signed_rank, HomogeneityResult, PairedSamples,
    StatsError, WilcoxonMode, WilcoxonResult,
};

/// Largest sample handled by the exact Wilcoxon distribution by default.
pub const EXACT_WILCOXON_LIMIT: usize = 1_000;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("question `{code}`: {source}")]
    Norm { code: String, source: NormError },
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("no questions selected")]
    NoQuestions,
}

/// Panels of the selected questions with their first-stage normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSet {
    pub panels: Vec<QuestionPanel>,
    pub params: Vec<NormParams<f64>>,
}

/// Which questions an analysis covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuestionSelection {
    Discussed,
    Undiscussed,
    All,
}

impl PanelSet {
    pub fn build(dataset: &Dataset, selection: QuestionSelection) -> Result<Self, AnalysisError> {
        let (mut panels, mut params) = (Vec::new(), Vec::new());
        for q in &dataset.questions {
            let keep = match selection {
                QuestionSelection::Discussed => q.discussed,
                QuestionSelection::Undiscussed => !q.discussed,
                QuestionSelection::All => true,
            };
            if !keep {
                continue;
            }
            params.push(fit_question(dataset, &q.code)?);
            panels.push(dataset.panel(&q.code)?);
        }
        if panels.is_empty() {
            return Err(AnalysisError::NoQuestions);
        }
        Ok(Self { panels, params })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QuestionPanel, &NormParams<f64>)> {
        self.panels.iter().zip(&self.params)
    }
}

/// Median/MAD of every first-stage answer to `code`, grouped or not.
pub fn fit_question(dataset: &Dataset, code: &str) -> Result<NormParams<f64>, AnalysisError> {
    fit_params(&dataset.all_estimates(code, Stage::I1)).map_err(|source| AnalysisError::Norm { code: code.to_string(), source })
}

fn wilcoxon_auto(samples: &PairedSamples) -> Result<WilcoxonResult, StatsError> {
    let mode = if samples.pairs.len() <= EXACT_WILCOXON_LIMIT { WilcoxonMode::Exact } else { WilcoxonMode::NormalApprox };
    wilcoxon_signed_rank(samples, mode)
}

/// One paired comparison over groups: `a` is the post-deliberation quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub label_a: String,
    pub label_b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub pairs: usize,
    pub wilcoxon: WilcoxonResult,
}

impl PairedComparison {
    fn new(label_a: &str, label_b: &str, a: Vec<f64>, b: Vec<f64>) -> Result<Self, StatsError> {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let samples = PairedSamples::from_columns(&a, &b);
        Ok(Self {
            label_a: label_a.into(),
            label_b: label_b.into(),
            mean_a: mean(&a),
            mean_b: mean(&b),
            pairs: a.len(),
            wilcoxon: wilcoxon_auto(&samples)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetweenGroupComparison {
    pub variance_i1: f64,
    pub variance_i2: f64,
    pub values: usize,
    pub test: HomogeneityResult,
}

/// Group-level effects of deliberation on the discussed questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliberationReport {
    pub questions: Vec<String>,
    pub groups: usize,
    /// Signed bias of the consensus against that of the group's `I1` mean,
    /// each question's sign flipped so that its crowd bias is positive.
    pub bias: PairedComparison,
    /// Revised estimates' distance to the consensus against their distance
    /// to the group's `I1` mean.
    pub distance: PairedComparison,
    /// Within-group variance at `I2` against `I1`.
    pub within_variance: PairedComparison,
    /// Spread of group means at `I2` against `I1`, centered per question.
    pub between_variance: BetweenGroupComparison,
}

fn survivors(values: &[f64], params: &NormParams<f64>, threshold: f64) -> Vec<f64> {
    values.iter().copied().filter(|&x| !is_outlier(x, params, threshold)).collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn sample_var(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    (values.len() > 1).then(|| values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64)
}

/// Per-question, per-group normalized quantities.
struct GroupStats {
    bias_c: f64,
    bias_mean: f64,
    dist_c: f64,
    dist_mean: f64,
    var_i1: f64,
    var_i2: f64,
    mean_i1: f64,
    mean_i2: f64,
}

fn group_stats(g: &GroupAnswers, truth: f64, p: &NormParams<f64>, threshold: f64) -> Option<GroupStats> {
    let c = g.consensus?;
    let i1 = survivors(&g.initial, p, threshold);
    let i2 = survivors(&g.revised, p, threshold);
    let (m1, m2) = (mean(&i1)?, mean(&i2)?);
    let norm = |v: &[f64]| v.iter().map(|&x| p.normalize(x)).collect::<Vec<_>>();
    Some(GroupStats {
        bias_c: signed_bias(c, truth, p),
        bias_mean: signed_bias(m1, truth, p),
        dist_c: mean(&i2.iter().map(|&r| distance(r, c, p)).collect::<Vec<_>>())?,
        dist_mean: mean(&i2.iter().map(|&r| distance(r, m1, p)).collect::<Vec<_>>())?,
        var_i1: sample_var(&norm(&i1))?,
        var_i2: sample_var(&norm(&i2))?,
        mean_i1: p.normalize(m1),
        mean_i2: p.normalize(m2),
    })
}

/// Deliberation report with the default outlier threshold.
pub fn deliberation_report(set: &PanelSet, permutations: usize, seed: u64) -> Result<DeliberationReport, AnalysisError> {
    deliberation_report_with(set, permutations, seed, DEFAULT_OUTLIER_THRESHOLD)
}

/// Group-level quantities are averaged over the questions each group
/// answered, giving one pair per group. Between-group spread pools the
/// per-question group means after removing each question's average.
pub fn deliberation_report_with(
    set: &PanelSet,
    permutations: usize,
    seed: u64,
    threshold: f64,
) -> Result<DeliberationReport, AnalysisError> {
    let discussed: Vec<(&QuestionPanel, &NormParams<f64>)> = set.iter().filter(|(p, _)| p.question.discussed).collect();
    if discussed.is_empty() {
        return Err(AnalysisError::NoQuestions);
    }
    let mut per_group: std::collections::BTreeMap<&str, Vec<GroupStats>> = Default::default();
    let (mut between_i1, mut between_i2) = (Vec::new(), Vec::new());
    for (panel, params) in &discussed {
        let stats: Vec<(&str, GroupStats)> = panel
            .groups
            .iter()
            .filter_map(|g| Some((g.group_id.as_str(), group_stats(g, panel.question.truth, params, threshold)?)))
            .collect();
        // orient bias along the direction of this question's crowd error
        let orientation = stats.iter().map(|(_, s)| s.bias_mean).sum::<f64>().signum();
        let count = stats.len().max(1) as f64;
        let center1 = stats.iter().map(|(_, s)| s.mean_i1).sum::<f64>() / count;
        let center2 = stats.iter().map(|(_, s)| s.mean_i2).sum::<f64>() / count;
        between_i1.extend(stats.iter().map(|(_, s)| s.mean_i1 - center1));
        between_i2.extend(stats.iter().map(|(_, s)| s.mean_i2 - center2));
        for (id, mut s) in stats {
            s.bias_c *= orientation;
            s.bias_mean *= orientation;
            per_group.entry(id).or_default().push(s);
        }
    }
    let column = |f: fn(&GroupStats) -> f64| -> Vec<f64> {
        per_group.values().map(|v| v.iter().map(f).sum::<f64>() / v.len() as f64).collect()
    };
    let bias = PairedComparison::new("consensus", "group_mean_i1", column(|s| s.bias_c), column(|s| s.bias_mean))?;
    let distance = PairedComparison::new("to_consensus", "to_group_mean_i1", column(|s| s.dist_c), column(|s| s.dist_mean))?;
    let within_variance = PairedComparison::new("i2", "i1", column(|s| s.var_i2), column(|s| s.var_i1))?;
    let test = squared_rank_homogeneity(&between_i2, &between_i1, permutations, seed)?;
    Ok(DeliberationReport {
        questions: discussed.iter().map(|(p, _)| p.question.code.clone()).collect(),
        groups: per_group.len(),
        bias,
        distance,
        within_variance,
        between_variance: BetweenGroupComparison {
            variance_i1: sample_var(&between_i1).unwrap_or(0.0),
            variance_i2: sample_var(&between_i2).unwrap_or(0.0),
            values: between_i1.len(),
            test,
        },
    })
}

/// Per-question curves followed by their pooled average.
pub fn curves(
    set: &PanelSet,
    stage: Stage,
    mode: SamplingMode,
    ns: &[usize],
    config: &ResampleConfig,
) -> Result<Vec<ErrorCurve>, AnalysisError> {
    let mut out = set
        .iter()
        .map(|(panel, params)| resample::error_curve(panel, params, stage, mode, ns, config))
        .collect::<Result<Vec<_>, _>>()?;
    let pooled = resample::pool_curves(&out)?;
    out.push(pooled);
    Ok(out)
}

/// Pooled `I1 -> I2` error reduction at each crowd size.
pub fn reduction_table(
    set: &PanelSet,
    mode: SamplingMode,
    ns: &[usize],
    config: &ResampleConfig,
) -> Result<Vec<ReductionPoint>, AnalysisError> {
    let before = curves(set, Stage::I1, mode, ns, config)?;
    let after = curves(set, Stage::I2, mode, ns, config)?;
    Ok(resample::reduction_curve(before.last().expect("pooled"), after.last().expect("pooled"))?)
}
