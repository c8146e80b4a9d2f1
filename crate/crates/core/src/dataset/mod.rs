//! Experiment data model: questions, three-stage responses, groups.
//!
//! A group has five players and a moderator. Players answer every question
//! individually before (`I1`) and after (`I2`) deliberation; the moderator
//! records one consensus value (`C`) per discussed question, or `X` when the
//! group could not agree.

mod csv_io;
mod validate;

pub use csv_io::{
    parse_dataset, parse_questions, read_dataset, read_questions, write_dataset, write_questions,
    ColumnMap, QuestionRow, BUNDLED_EXAMPLE_CSV, BUNDLED_QUESTIONS_CSV,
};
pub use validate::{validate_dataset, ValidationIssue, ValidationReport};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of players in a deliberating group.
pub const GROUP_SIZE: usize = 5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Csv { line: u64, source: csv::Error },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: malformed row: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: unknown stage `{token}`")]
    UnknownStage { line: u64, token: String },
    #[error("line {line}: unknown role `{token}`")]
    UnknownRole { line: u64, token: String },
    #[error("line {line}: negative estimate")]
    NegativeEstimate { line: u64 },
    #[error("line {line}: invalid estimate `{token}`")]
    InvalidEstimate { line: u64, token: String },
    #[error("line {line}: confidence {value} outside [0, 10]")]
    ConfidenceOutOfRange { line: u64, value: String },
    #[error("line {line}: unknown question `{code}`")]
    UnknownQuestion { line: u64, code: String },
    #[error("duplicate question code `{0}`")]
    DuplicateQuestion(String),
    #[error("question `{0}` must have a positive truth")]
    InvalidTruth(String),
    #[error("question `{0}` not found")]
    QuestionNotFound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    I1,
    C,
    I2,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::I1 => "i1",
            Stage::C => "c",
            Stage::I2 => "i2",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i1" => Ok(Stage::I1),
            "c" => Ok(Stage::C),
            "i2" => Ok(Stage::I2),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Player,
    Moderator,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Player => "player",
            Role::Moderator => "moderator",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub code: String,
    pub text: String,
    pub truth: f64,
    pub discussed: bool,
}

/// Recorded answer cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Answer {
    Value(f64),
    Absent,
    /// Moderator's `X`: the group did not reach consensus.
    NoConsensus,
}

impl Answer {
    pub fn value(self) -> Option<f64> {
        match self {
            Answer::Value(v) => Some(v),
            _ => None,
        }
    }
}

/// One row of the interchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub participant_id: String,
    pub group_id: String,
    pub role: Role,
    pub question_code: String,
    pub stage: Stage,
    pub estimate: Answer,
    pub confidence: Option<u8>,
}

/// An individual answer with its confidence rating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub estimate: Option<f64>,
    pub confidence: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Member {
    pub participant_id: String,
    pub i1: BTreeMap<String, Response>,
    pub i2: BTreeMap<String, Response>,
}

impl Member {
    pub fn new(participant_id: impl Into<String>) -> Self {
        Self { participant_id: participant_id.into(), ..Default::default() }
    }

    pub fn responses(&self, stage: Stage) -> Option<&BTreeMap<String, Response>> {
        match stage {
            Stage::I1 => Some(&self.i1),
            Stage::I2 => Some(&self.i2),
            Stage::C => None,
        }
    }

    fn estimate(&self, stage: Stage, code: &str) -> Option<f64> {
        self.responses(stage)?.get(code)?.estimate
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupRecord {
    pub group_id: String,
    /// Players in order of first appearance.
    pub members: Vec<Member>,
    /// Participant id of the moderator who recorded the consensus rows.
    pub moderator: Option<String>,
    pub consensus: BTreeMap<String, Answer>,
}

impl GroupRecord {
    pub fn new(group_id: impl Into<String>) -> Self {
        Self { group_id: group_id.into(), ..Default::default() }
    }

    /// Complete: five players, numeric `I1`/`I2` answers from every player
    /// and a numeric consensus for each of the given discussed questions.
    pub fn is_complete(&self, discussed: &[&str]) -> bool {
        self.members.len() == GROUP_SIZE
            && discussed.iter().all(|code| {
                matches!(self.consensus.get(*code), Some(Answer::Value(_)))
                    && self.members.iter().all(|m| {
                        m.estimate(Stage::I1, code).is_some() && m.estimate(Stage::I2, code).is_some()
                    })
            })
    }

    /// Numeric answers of one question, if every player gave both estimates.
    pub fn answers(&self, code: &str) -> Option<GroupAnswers> {
        if self.members.is_empty() {
            return None;
        }
        let mut answers = GroupAnswers {
            group_id: self.group_id.clone(),
            initial: Vec::with_capacity(self.members.len()),
            revised: Vec::with_capacity(self.members.len()),
            initial_confidence: Some(Vec::with_capacity(self.members.len())),
            consensus: self.consensus.get(code).and_then(|a| a.value()),
        };
        for m in &self.members {
            let first = m.i1.get(code)?;
            answers.initial.push(first.estimate?);
            answers.revised.push(m.estimate(Stage::I2, code)?);
            answers.initial_confidence = match (answers.initial_confidence.take(), first.confidence) {
                (Some(mut c), Some(v)) => {
                    c.push(v);
                    Some(c)
                }
                _ => None,
            };
        }
        Some(answers)
    }
}

/// The numeric view of one group on one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAnswers {
    pub group_id: String,
    pub initial: Vec<f64>,
    pub revised: Vec<f64>,
    /// `None` when any player left the confidence box empty.
    pub initial_confidence: Option<Vec<u8>>,
    pub consensus: Option<f64>,
}

/// All analyzable groups for a single question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionPanel {
    pub question: Question,
    pub groups: Vec<GroupAnswers>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub questions: Vec<Question>,
    /// Sorted by group id.
    pub groups: Vec<GroupRecord>,
    /// Individuals outside any group, including moderators' own answers.
    pub unaffiliated: Vec<EstimateRecord>,
    /// Rows repeating an already seen (participant, question, stage); kept
    /// for validation and round-tripping, ignored by analyses.
    pub duplicates: Vec<EstimateRecord>,
}

impl Dataset {
    pub fn question(&self, code: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.code == code)
    }

    pub fn discussed_codes(&self) -> Vec<&str> {
        self.questions.iter().filter(|q| q.discussed).map(|q| q.code.as_str()).collect()
    }

    /// Numeric `I1` estimates of everyone who answered `code`: group players
    /// and unaffiliated individuals alike.
    pub fn all_estimates(&self, code: &str, stage: Stage) -> Vec<f64> {
        let from_groups = self
            .groups
            .iter()
            .flat_map(|g| g.members.iter())
            .filter_map(|m| m.estimate(stage, code));
        let from_rest = self
            .unaffiliated
            .iter()
            .filter(|r| r.question_code == code && r.stage == stage)
            .filter_map(|r| r.estimate.value());
        from_groups.chain(from_rest).collect()
    }

    /// Per-question view over the complete groups. For undiscussed
    /// questions, complete groups missing an answer on `code` are skipped and
    /// any consensus value is ignored.
    pub fn panel(&self, code: &str) -> Result<QuestionPanel, DatasetError> {
        let question = self
            .question(code)
            .ok_or_else(|| DatasetError::QuestionNotFound(code.to_string()))?
            .clone();
        let groups = complete_groups(self)
            .into_iter()
            .filter_map(|g| g.answers(code))
            .map(|mut a| {
                if !question.discussed {
                    a.consensus = None;
                }
                a
            })
            .collect();
        Ok(QuestionPanel { question, groups })
    }
}

/// Groups usable for analysis, sorted by group id. Groups with an `X`
/// consensus on any discussed question are excluded.
pub fn complete_groups(dataset: &Dataset) -> Vec<&GroupRecord> {
    let discussed = dataset.discussed_codes();
    let mut out: Vec<&GroupRecord> = dataset.groups.iter().filter(|g| g.is_complete(&discussed)).collect();
    out.sort_by(|a, b| a.group_id.cmp(&b.group_id));
    out
}
