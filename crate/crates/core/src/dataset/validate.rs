use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, Stage, GROUP_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ValidationIssue {
    DuplicateRecord { participant_id: String, question_code: String, stage: Stage },
    GroupSizeViolation { group_id: String, players: usize },
    NoResponses { question_code: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Lists structural problems without touching the dataset.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut issues = Vec::new();

    for dup in &dataset.duplicates {
        issues.push(ValidationIssue::DuplicateRecord {
            participant_id: dup.participant_id.clone(),
            question_code: dup.question_code.clone(),
            stage: dup.stage,
        });
    }

    for group in &dataset.groups {
        if group.members.len() != GROUP_SIZE {
            issues.push(ValidationIssue::GroupSizeViolation {
                group_id: group.group_id.clone(),
                players: group.members.len(),
            });
        }
    }

    let mut answered: BTreeMap<&str, usize> = dataset.questions.iter().map(|q| (q.code.as_str(), 0)).collect();
    let mut bump = |code: &str| {
        if let Some(count) = answered.get_mut(code) {
            *count += 1;
        }
    };
    for group in &dataset.groups {
        for member in &group.members {
            for (code, r) in member.i1.iter().chain(&member.i2) {
                if r.estimate.is_some() {
                    bump(code);
                }
            }
        }
        for code in group.consensus.keys() {
            bump(code);
        }
    }
    for r in &dataset.unaffiliated {
        if r.estimate.value().is_some() {
            bump(&r.question_code);
        }
    }
    for q in &dataset.questions {
        if answered[q.code.as_str()] == 0 {
            issues.push(ValidationIssue::NoResponses { question_code: q.code.clone() });
        }
    }

    ValidationReport { issues }
}
