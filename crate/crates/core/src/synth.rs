//! Generative model of a structured crowd.
//!
//! Estimates are log-normal per question, calibrated to the bundled
//! median/MAD table, with a group effect carrying a fraction `rho` of the
//! log-space variance. Deliberation moves the group median toward the truth
//! (`beta`) and away from the crowd's grand mean (`delta`); members then move
//! toward the consensus (`gamma`).

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::dataset::{
    read_questions, Answer, Dataset, DatasetError, GroupRecord, Member, Question, QuestionRow, Response,
    BUNDLED_QUESTIONS_CSV, GROUP_SIZE,
};
use crate::num::median;
use crate::rng::{self, stream_id};

/// Bundled default parameters.
pub const BUNDLED_DEFAULTS_TOML: &str = include_str!("../data/defaults.toml");

const GENERATE_STREAM: u64 = 1;
const DELIBERATE_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("question `{0}` has no calibration statistics")]
    MissingCalibration(String),
    #[error("at least one group is required")]
    NoGroups,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
}

/// Log-space location and scale of one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionModel {
    pub question: Question,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdModel {
    pub questions: Vec<QuestionModel>,
    /// Share of log-space variance common to a group, in `[0, 1)`.
    pub rho: f64,
    pub group_size: usize,
}

impl CrowdModel {
    /// Log-normal parameters matching each row's median and MAD.
    pub fn calibrated(rows: &[QuestionRow], rho: f64, group_size: usize) -> Result<Self, SynthError> {
        let questions = rows
            .iter()
            .map(|row| {
                let cal = row
                    .calibration
                    .ok_or_else(|| SynthError::MissingCalibration(row.question.code.clone()))?;
                Ok(QuestionModel {
                    question: row.question.clone(),
                    mu: cal.median.ln(),
                    sigma: calibrate_sigma(cal.median, cal.mad)?,
                })
            })
            .collect::<Result<Vec<_>, SynthError>>()?;
        let model = Self { questions, rho, group_size };
        model.validate()?;
        Ok(model)
    }

    /// Calibrated on the bundled question table.
    pub fn bundled(rho: f64) -> Result<Self, SynthError> {
        let rows = read_questions(BUNDLED_QUESTIONS_CSV.as_bytes())?;
        Self::calibrated(&rows, rho, GROUP_SIZE)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(SynthError::InvalidModel(format!("rho = {} outside [0, 1)", self.rho)));
        }
        if self.group_size == 0 {
            return Err(SynthError::InvalidModel("group_size must be positive".into()));
        }
        if let Some(q) = self.questions.iter().find(|q| !(q.sigma > 0.0 && q.mu.is_finite())) {
            return Err(SynthError::InvalidModel(format!("bad scale for `{}`", q.question.code)));
        }
        Ok(())
    }

    pub fn questions(&self) -> Vec<Question> {
        self.questions.iter().map(|q| q.question.clone()).collect()
    }
}

/// Log-space sigma of a log-normal with the given median whose median
/// absolute deviation equals `mad`. Requires `0 < mad < median`: for a
/// log-normal the MAD always stays below the median.
pub fn calibrate_sigma(median: f64, mad: f64) -> Result<f64, SynthError> {
    if !(median > 0.0 && mad > 0.0 && mad < median) {
        return Err(SynthError::InvalidModel(format!("no log-normal has median {median} and MAD {mad}")));
    }
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let upper = (1.0 + mad / median).ln();
    let lower = (1.0 - mad / median).ln();
    // P(|X - median| <= mad) falls monotonically with sigma
    let coverage = |s: f64| std_normal.cdf(upper / s) - std_normal.cdf(lower / s);
    let (mut lo, mut hi) = (1e-9, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if coverage(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeliberationModel {
    /// Pull of the consensus toward the truth, in `[0, 1]`.
    pub beta: f64,
    /// Pull of revised estimates toward the consensus, in `[0, 1]`.
    pub gamma: f64,
    /// Push of the consensus away from the grand mean, `>= 0`.
    pub delta: f64,
    pub noise_c: f64,
    pub noise_r: f64,
}

impl DeliberationModel {
    /// No deliberation effect; revised estimates only pick up `noise_r`.
    pub fn control(noise_r: f64) -> Self {
        Self { noise_r, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.beta) || !unit(self.gamma) {
            return Err(SynthError::InvalidModel("beta and gamma must lie in [0, 1]".into()));
        }
        if !(self.delta >= 0.0 && self.noise_c >= 0.0 && self.noise_r >= 0.0) {
            return Err(SynthError::InvalidModel("delta and noise scales must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrowdSection {
    pub rho: f64,
    pub group_size: usize,
}

/// Contents of a parameter file such as the bundled `defaults.toml`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub crowd: CrowdSection,
    pub deliberation: DeliberationModel,
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.deliberation.validate()?;
        Ok(cfg)
    }

    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED_DEFAULTS_TOML).expect("bundled defaults parse")
    }

    pub fn crowd_model(&self) -> Result<CrowdModel, SynthError> {
        let rows = read_questions(BUNDLED_QUESTIONS_CSV.as_bytes())?;
        CrowdModel::calibrated(&rows, self.crowd.rho, self.crowd.group_size)
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Consensus of one group, computed in log space around the group median.
pub fn deliberate(estimates: &[f64], truth: f64, model: &DeliberationModel, grand_mean: f64, rng: &mut impl Rng) -> f64 {
    let logs: Vec<f64> = estimates.iter().map(|x| x.ln()).collect();
    let a = median(&logs).expect("group has estimates");
    let z = normal(rng);
    (a + model.beta * (truth.ln() - a) + model.delta * (a - grand_mean) + model.noise_c * z).exp()
}

/// Revised estimate of one member after seeing the consensus.
pub fn revise(estimate: f64, consensus: f64, model: &DeliberationModel, rng: &mut impl Rng) -> f64 {
    let x = estimate.ln();
    let z = normal(rng);
    (x + model.gamma * (consensus.ln() - x) + model.noise_r * z).exp()
}

fn group_id(g: usize) -> String {
    format!("s{:04}", g + 1)
}

/// First-stage estimates for `n_groups` groups; confidences are uniform on 0..=10.
pub fn generate_crowd(model: &CrowdModel, n_groups: usize, seed: u64) -> Result<Dataset, SynthError> {
    model.validate()?;
    if n_groups == 0 {
        return Err(SynthError::NoGroups);
    }
    let (shared, own) = (model.rho.sqrt(), (1.0 - model.rho).sqrt());
    let groups = (0..n_groups)
        .into_par_iter()
        .map(|g| {
            let mut rng = rng::stream(seed, stream_id(GENERATE_STREAM, g as u64));
            let id = group_id(g);
            let mut record = GroupRecord::new(id.clone());
            record.members = (0..model.group_size).map(|i| Member::new(format!("{id}p{}", i + 1))).collect();
            for q in &model.questions {
                let u = normal(&mut rng);
                for member in &mut record.members {
                    let v = normal(&mut rng);
                    let estimate = (q.mu + q.sigma * (shared * u + own * v)).exp();
                    let confidence = rng.gen_range(0..=10u8);
                    member
                        .i1
                        .insert(q.question.code.clone(), Response { estimate: Some(estimate), confidence: Some(confidence) });
                }
            }
            record
        })
        .collect();
    Ok(Dataset { questions: model.questions(), groups, ..Dataset::default() })
}

/// Adds consensus (discussed questions only) and revised estimates to a
/// first-stage crowd. Undiscussed questions are revised without any pull.
pub fn apply_deliberation(crowd: &mut Dataset, model: &DeliberationModel, seed: u64) -> Result<(), SynthError> {
    model.validate()?;
    let questions = crowd.questions.clone();
    let grand_means: Vec<f64> = questions
        .iter()
        .map(|q| {
            let logs: Vec<f64> = crowd
                .groups
                .iter()
                .flat_map(|g| &g.members)
                .filter_map(|m| m.i1.get(&q.code)?.estimate)
                .map(f64::ln)
                .collect();
            logs.iter().sum::<f64>() / logs.len().max(1) as f64
        })
        .collect();
    let undiscussed = DeliberationModel { gamma: 0.0, ..*model };

    crowd.groups.par_iter_mut().enumerate().for_each(|(g, record)| {
        let mut rng = rng::stream(seed, stream_id(DELIBERATE_STREAM, g as u64));
        record.moderator = Some(format!("{}m", record.group_id));
        for (q, &grand_mean) in questions.iter().zip(&grand_means) {
            let initial: Vec<f64> = record
                .members
                .iter()
                .filter_map(|m| m.i1.get(&q.code).and_then(|r| r.estimate))
                .collect();
            if initial.len() != record.members.len() {
                continue;
            }
            let consensus = deliberate(&initial, q.truth, model, grand_mean, &mut rng);
            let pull = if q.discussed {
                record.consensus.insert(q.code.clone(), Answer::Value(consensus));
                model
            } else {
                &undiscussed
            };
            for (member, &x) in record.members.iter_mut().zip(&initial) {
                let revised = revise(x, consensus, pull, &mut rng);
                let confidence = rng.gen_range(0..=10u8);
                member.i2.insert(q.code.clone(), Response { estimate: Some(revised), confidence: Some(confidence) });
            }
        }
    });
    Ok(())
}

/// Full three-stage synthetic experiment.
pub fn simulate(
    crowd: &CrowdModel,
    deliberation: &DeliberationModel,
    n_groups: usize,
    seed: u64,
) -> Result<Dataset, SynthError> {
    let mut data = generate_crowd(crowd, n_groups, seed)?;
    apply_deliberation(&mut data, deliberation, seed)?;
    Ok(data)
}
