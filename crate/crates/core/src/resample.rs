//! Subsampling engine for crowd-error curves.
//!
//! Every iteration draws a pool of groups without replacement. In the
//! within-groups mode the crowd is `m = n / 5` intact groups from that pool;
//! in the between-groups mode it is one member from each of `n` distinct
//! groups. The iteration's error is the mean crowd error over the enumerated
//! (or, past `combination_cap`, uniformly sampled) crowds.
//!
//! Random streams are addressed by `(n, iteration)`, so curves computed for
//! different stages, modes or questions with the same seed share their group
//! draws and can be compared pairwise.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{QuestionPanel, Stage, GROUP_SIZE};
use crate::normalize::{is_outlier, NormParams, DEFAULT_OUTLIER_THRESHOLD};
use crate::rng::{self, stream_id};
use crate::stats::{mean_and_sem, PairedSamples};

pub const DEFAULT_ITERATIONS: usize = 1_000;
pub const DEFAULT_COMBINATION_CAP: usize = 1_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResampleError {
    #[error("no estimates to average")]
    EmptyInput,
    #[error("crowd size {n} needs {needed} groups, only {available} available")]
    InsufficientGroups { n: usize, needed: usize, available: usize },
    #[error("crowd size {n} is invalid: {reason}")]
    InvalidCrowdSize { n: usize, reason: &'static str },
    #[error("group `{0}` has no numeric consensus")]
    MissingConsensus(String),
    #[error("consensus values cannot be sampled between groups")]
    ConsensusBetweenGroups,
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("curves to pool disagree on {0}")]
    IncompatibleCurves(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplingMode {
    WithinGroups,
    BetweenGroups,
}

impl SamplingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplingMode::WithinGroups => "within",
            SamplingMode::BetweenGroups => "between",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Maximum crowds evaluated per iteration.
    pub combination_cap: usize,
    /// Individual responses beyond this many MADs are dropped; `None` keeps all.
    pub outlier_threshold: Option<f64>,
}

impl ResampleConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            seed,
            combination_cap: DEFAULT_COMBINATION_CAP,
            outlier_threshold: Some(DEFAULT_OUTLIER_THRESHOLD),
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.combination_cap = cap.max(1);
        self
    }

    pub fn with_outlier_threshold(mut self, threshold: Option<f64>) -> Self {
        self.outlier_threshold = threshold;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub mean_error: f64,
    pub sem: f64,
    /// Error of each iteration, in iteration order.
    #[serde(skip)]
    pub errors: Vec<f64>,
}

impl CurvePoint {
    fn from_errors(n: usize, errors: Vec<f64>) -> Self {
        let (mean_error, sem) = mean_and_sem(&errors);
        Self { n, mean_error, sem, errors }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub question: String,
    pub stage: Stage,
    pub mode: SamplingMode,
    pub iterations: usize,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl ErrorCurve {
    pub fn point(&self, n: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.n == n)
    }
}

/// Normalized absolute error of the crowd average: `|mean - truth| / mad`.
pub fn crowd_error(estimates: &[f64], truth: f64, params: &NormParams<f64>) -> Result<f64, ResampleError> {
    if estimates.is_empty() {
        return Err(ResampleError::EmptyInput);
    }
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    Ok((mean - truth).abs() / params.mad)
}

/// Per-group answers of one stage; rejected outliers are `None`.
struct StageView {
    members: Vec<Vec<Option<f64>>>,
    /// Sum and count of each group's surviving answers.
    sums: Vec<f64>,
    counts: Vec<usize>,
    /// Surviving answers of each group.
    values: Vec<Vec<f64>>,
    truth: f64,
    mad: f64,
}

impl StageView {
    fn build(
        panel: &QuestionPanel,
        stage: Stage,
        params: &NormParams<f64>,
        threshold: Option<f64>,
    ) -> Result<Self, ResampleError> {
        let mut members = Vec::with_capacity(panel.groups.len());
        for g in &panel.groups {
            let row: Vec<Option<f64>> = match stage {
                Stage::C => vec![Some(g.consensus.ok_or_else(|| ResampleError::MissingConsensus(g.group_id.clone()))?)],
                Stage::I1 | Stage::I2 => {
                    let raw = if stage == Stage::I1 { &g.initial } else { &g.revised };
                    raw.iter()
                        .map(|&x| threshold.map_or(true, |t| !is_outlier(x, params, t)).then_some(x))
                        .collect()
                }
            };
            members.push(row);
        }
        let values: Vec<Vec<f64>> = members.iter().map(|m| m.iter().flatten().copied().collect()).collect();
        let sums = values.iter().map(|v| v.iter().sum()).collect();
        let counts = values.iter().map(Vec::len).collect();
        Ok(Self { members, sums, counts, values, truth: panel.question.truth, mad: params.mad })
    }

    fn groups(&self) -> usize {
        self.values.len()
    }

    fn error_of(&self, sum: f64, count: usize) -> f64 {
        (sum / count as f64 - self.truth).abs() / self.mad
    }

    /// `None` when every chosen group is empty.
    fn within_error(&self, groups: &[usize]) -> Option<f64> {
        let (sum, count) = groups.iter().fold((0.0, 0), |(s, c), &g| (s + self.sums[g], c + self.counts[g]));
        (count > 0).then(|| self.error_of(sum, count))
    }
}

fn binomial_at_most(n: usize, k: usize, cap: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

/// Calls `f` for every k-subset of `0..n`, in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else { return };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn within_iteration(view: &StageView, n: usize, cap: usize, rng: &mut impl Rng) -> f64 {
    let m = n / GROUP_SIZE;
    let pool_size = n.min(view.groups());
    let (mut scratch, mut pool, mut picked) = (Vec::new(), Vec::new(), Vec::new());
    rng::sample_indices(rng, view.groups(), pool_size, &mut scratch, &mut pool);

    let mut total = 0.0;
    let mut crowds = 0usize;
    match binomial_at_most(pool_size, m, cap) {
        Some(_) => for_each_combination(pool_size, m, |combo| {
            picked.clear();
            picked.extend(combo.iter().map(|&i| pool[i]));
            if let Some(e) = view.within_error(&picked) {
                total += e;
                crowds += 1;
            }
        }),
        None => {
            let mut chosen = Vec::new();
            for _ in 0..cap {
                rng::sample_indices(rng, pool_size, m, &mut scratch, &mut chosen);
                picked.clear();
                picked.extend(chosen.iter().map(|&i| pool[i]));
                if let Some(e) = view.within_error(&picked) {
                    total += e;
                    crowds += 1;
                }
            }
        }
    }
    // NaN only if every crowd drawn consisted of fully rejected groups
    total / crowds as f64
}

/// One member is drawn from each pooled group; members rejected as
/// outliers are then left out of the crowd average.
fn between_iteration(view: &StageView, n: usize, cap: usize, rng: &mut impl Rng) -> f64 {
    let (mut scratch, mut pool) = (Vec::new(), Vec::new());
    rng::sample_indices(rng, view.groups(), n, &mut scratch, &mut pool);
    let size = |g: usize| view.members[g].len();
    let crowd = |members: &mut dyn Iterator<Item = Option<f64>>| -> Option<f64> {
        let (sum, count) = members.flatten().fold((0.0, 0), |(s, c), x| (s + x, c + 1));
        (count > 0).then(|| view.error_of(sum, count))
    };

    let (mut total, mut crowds) = (0.0, 0usize);
    let product = pool.iter().try_fold(1usize, |acc, &g| acc.checked_mul(size(g)).filter(|&p| p <= cap));
    match product {
        Some(total_crowds) => {
            // mixed-radix enumeration of one member per group
            let mut digits = vec![0usize; n];
            for _ in 0..total_crowds {
                if let Some(e) = crowd(&mut pool.iter().zip(&digits).map(|(&g, &d)| view.members[g][d])) {
                    total += e;
                    crowds += 1;
                }
                for (digit, &g) in digits.iter_mut().zip(&pool) {
                    *digit += 1;
                    if *digit < size(g) {
                        break;
                    }
                    *digit = 0;
                }
            }
        }
        None => {
            for _ in 0..cap {
                let picks: Vec<Option<f64>> = pool.iter().map(|&g| view.members[g][rng.gen_range(0..size(g))]).collect();
                if let Some(e) = crowd(&mut picks.into_iter()) {
                    total += e;
                    crowds += 1;
                }
            }
        }
    }
    total / crowds as f64
}

fn check_n(n: usize, mode: SamplingMode, groups: usize) -> Result<(), ResampleError> {
    if n == 0 {
        return Err(ResampleError::InvalidCrowdSize { n, reason: "must be positive" });
    }
    match mode {
        SamplingMode::WithinGroups => {
            if n % GROUP_SIZE != 0 {
                return Err(ResampleError::InvalidCrowdSize { n, reason: "within-groups sizes must be multiples of 5" });
            }
            let needed = n / GROUP_SIZE;
            if needed > groups {
                return Err(ResampleError::InsufficientGroups { n, needed, available: groups });
            }
        }
        SamplingMode::BetweenGroups => {
            if n > groups {
                return Err(ResampleError::InsufficientGroups { n, needed: n, available: groups });
            }
        }
    }
    Ok(())
}

/// Mean ± s.e.m. crowd error as a function of crowd size.
pub fn error_curve(
    panel: &QuestionPanel,
    params: &NormParams<f64>,
    stage: Stage,
    mode: SamplingMode,
    ns: &[usize],
    config: &ResampleConfig,
) -> Result<ErrorCurve, ResampleError> {
    if config.iterations == 0 {
        return Err(ResampleError::NoIterations);
    }
    if stage == Stage::C && mode == SamplingMode::BetweenGroups {
        return Err(ResampleError::ConsensusBetweenGroups);
    }
    let view = StageView::build(panel, stage, params, config.outlier_threshold)?;
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    for &n in &ns {
        check_n(n, mode, view.groups())?;
    }

    let cap = config.combination_cap.max(1);
    let points = ns
        .iter()
        .map(|&n| {
            let errors: Vec<f64> = (0..config.iterations)
                .into_par_iter()
                .map(|it| {
                    let mut rng = rng::stream(config.seed, stream_id(n as u64, it as u64));
                    match mode {
                        SamplingMode::WithinGroups => within_iteration(&view, n, cap, &mut rng),
                        SamplingMode::BetweenGroups => between_iteration(&view, n, cap, &mut rng),
                    }
                })
                .collect();
            CurvePoint::from_errors(n, errors)
        })
        .collect();

    Ok(ErrorCurve {
        question: panel.question.code.clone(),
        stage,
        mode,
        iterations: config.iterations,
        seed: config.seed,
        points,
    })
}

/// Label used for curves averaged over questions.
pub const POOLED: &str = "POOLED";

/// Averages per-question curves iteration by iteration.
pub fn pool_curves(curves: &[ErrorCurve]) -> Result<ErrorCurve, ResampleError> {
    let first = curves.first().ok_or(ResampleError::EmptyInput)?;
    for c in curves {
        if c.iterations != first.iterations {
            return Err(ResampleError::IncompatibleCurves("iterations"));
        }
        if c.stage != first.stage || c.mode != first.mode {
            return Err(ResampleError::IncompatibleCurves("stage or mode"));
        }
        if c.points.iter().map(|p| p.n).ne(first.points.iter().map(|p| p.n)) {
            return Err(ResampleError::IncompatibleCurves("crowd sizes"));
        }
    }
    let k = curves.len() as f64;
    let points = first
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let errors = (0..first.iterations)
                .map(|it| curves.iter().map(|c| c.points[i].errors[it]).sum::<f64>() / k)
                .collect();
            CurvePoint::from_errors(p.n, errors)
        })
        .collect();
    Ok(ErrorCurve { question: POOLED.to_string(), points, ..first.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionPoint {
    pub n: usize,
    /// `100 * (1 - mean_after / mean_before)`.
    pub reduction: f64,
    /// s.e.m. of the per-iteration reductions.
    pub sem: f64,
    #[serde(skip)]
    pub per_iteration: Vec<f64>,
}

/// Percent error reduction from `before` to `after` at each crowd size.
/// Both curves must come from the same seed so iterations are paired.
pub fn reduction_curve(before: &ErrorCurve, after: &ErrorCurve) -> Result<Vec<ReductionPoint>, ResampleError> {
    if before.iterations != after.iterations || before.seed != after.seed {
        return Err(ResampleError::IncompatibleCurves("iterations or seed"));
    }
    if before.points.iter().map(|p| p.n).ne(after.points.iter().map(|p| p.n)) {
        return Err(ResampleError::IncompatibleCurves("crowd sizes"));
    }
    Ok(before
        .points
        .iter()
        .zip(&after.points)
        .map(|(b, a)| {
            let per_iteration: Vec<f64> = b
                .errors
                .iter()
                .zip(&a.errors)
                .filter(|(eb, _)| **eb > 0.0)
                .map(|(eb, ea)| 100.0 * (1.0 - ea / eb))
                .collect();
            let (_, sem) = mean_and_sem(&per_iteration);
            let reduction = if b.mean_error > 0.0 { 100.0 * (1.0 - a.mean_error / b.mean_error) } else { 0.0 };
            ReductionPoint { n: b.n, reduction, sem, per_iteration }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusComparison {
    pub question: String,
    pub m: usize,
    pub n_reference: usize,
    pub mean_consensus_error: f64,
    pub mean_crowd_error: f64,
    pub consensus_errors: Vec<f64>,
    pub crowd_errors: Vec<f64>,
}

impl ConsensusComparison {
    /// Pairs `(consensus error, crowd error)` per iteration.
    pub fn paired(&self) -> PairedSamples {
        PairedSamples::from_columns(&self.consensus_errors, &self.crowd_errors)
    }

    /// Share of iterations in which the consensus average was more accurate.
    pub fn consensus_win_rate(&self) -> f64 {
        let wins = self.consensus_errors.iter().zip(&self.crowd_errors).filter(|(c, i)| c < i).count();
        wins as f64 / self.consensus_errors.len() as f64
    }
}

/// Error of averaging `m` consensus values against averaging `n_reference`
/// first-stage estimates, drawn from the same groups in every iteration.
pub fn consensus_vs_crowd(
    panel: &QuestionPanel,
    params: &NormParams<f64>,
    m: usize,
    n_reference: usize,
    config: &ResampleConfig,
) -> Result<ConsensusComparison, ResampleError> {
    if m == 0 || n_reference == 0 {
        return Err(ResampleError::InvalidCrowdSize { n: m.min(n_reference), reason: "must be positive" });
    }
    if config.iterations == 0 {
        return Err(ResampleError::NoIterations);
    }
    let consensus = StageView::build(panel, Stage::C, params, None)?;
    let initial = StageView::build(panel, Stage::I1, params, config.outlier_threshold)?;
    let reference_groups = n_reference.div_ceil(GROUP_SIZE);
    let pool_size = m.max(reference_groups);
    if pool_size > consensus.groups() {
        return Err(ResampleError::InsufficientGroups { n: n_reference, needed: pool_size, available: consensus.groups() });
    }

    let major = (1u64 << 31) | ((m as u64 & 0x7fff) << 16) | (n_reference as u64 & 0xffff);
    let pairs: Vec<(f64, f64)> = (0..config.iterations)
        .into_par_iter()
        .map(|it| {
            let mut rng = rng::stream(config.seed, stream_id(major, it as u64));
            // a full random order whose prefix is the pool
            let (mut scratch, mut order) = (Vec::new(), Vec::new());
            rng::sample_indices(&mut rng, consensus.groups(), consensus.groups(), &mut scratch, &mut order);
            let c = consensus.within_error(&order[..m]).expect("one consensus per group");
            let mut crowd: Vec<f64> = Vec::with_capacity(n_reference);
            for (taken, &g) in order.iter().enumerate() {
                // reference groups whose answers were all rejected are
                // replaced by the next group in the random order
                if taken >= reference_groups && !crowd.is_empty() {
                    break;
                }
                crowd.extend(initial.values[g].iter().copied());
            }
            crowd.truncate(n_reference);
            let sum: f64 = crowd.iter().sum();
            (c, initial.error_of(sum, crowd.len()))
        })
        .collect();

    let (consensus_errors, crowd_errors): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(ConsensusComparison {
        question: panel.question.code.clone(),
        m,
        n_reference,
        mean_consensus_error: mean_and_sem(&consensus_errors).0,
        mean_crowd_error: mean_and_sem(&crowd_errors).0,
        consensus_errors,
        crowd_errors,
    })
}

/// Averages per-question comparisons iteration by iteration.
pub fn pool_comparisons(items: &[ConsensusComparison]) -> Result<ConsensusComparison, ResampleError> {
    let first = items.first().ok_or(ResampleError::EmptyInput)?;
    let len = first.consensus_errors.len();
    if items.iter().any(|c| c.consensus_errors.len() != len) {
        return Err(ResampleError::IncompatibleCurves("iterations"));
    }
    let k = items.len() as f64;
    let avg = |pick: fn(&ConsensusComparison) -> &Vec<f64>| -> Vec<f64> {
        (0..len).map(|i| items.iter().map(|c| pick(c)[i]).sum::<f64>() / k).collect()
    };
    let consensus_errors = avg(|c| &c.consensus_errors);
    let crowd_errors = avg(|c| &c.crowd_errors);
    Ok(ConsensusComparison {
        question: POOLED.to_string(),
        m: first.m,
        n_reference: first.n_reference,
        mean_consensus_error: mean_and_sem(&consensus_errors).0,
        mean_crowd_error: mean_and_sem(&crowd_errors).0,
        consensus_errors,
        crowd_errors,
    })
}

#[derive(Serialize)]
struct CurveRow<'a> {
    question: &'a str,
    stage: &'static str,
    mode: &'static str,
    n: usize,
    mean_error: f64,
    sem: f64,
}

/// Writes curves as `question,stage,mode,n,mean_error,sem` rows.
pub fn write_curves_csv<W: Write>(curves: &[ErrorCurve], writer: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    for c in curves {
        for p in &c.points {
            wtr.serialize(CurveRow {
                question: &c.question,
                stage: c.stage.as_str(),
                mode: c.mode.as_str(),
                n: p.n,
                mean_error: p.mean_error,
                sem: p.sem,
            })?;
        }
    }
    wtr.flush()?;
    Ok(())
}
