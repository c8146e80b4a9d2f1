use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Answer, Dataset, DatasetError, EstimateRecord, GroupRecord, Member, Question, Response, Role, Stage,
};
use crate::normalize::NormParams;

/// Question table with the published first-stage summary statistics.
pub const BUNDLED_QUESTIONS_CSV: &str = include_str!("../../data/questions.csv");
/// Small example crowd in the interchange format.
pub const BUNDLED_EXAMPLE_CSV: &str = include_str!("../../data/example_crowd.csv");

/// Header names of the interchange columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub participant_id: String,
    pub group_id: String,
    pub role: String,
    pub question_code: String,
    pub stage: String,
    pub estimate: String,
    pub confidence: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            participant_id: "participant_id".into(),
            group_id: "group_id".into(),
            role: "role".into(),
            question_code: "question_code".into(),
            stage: "stage".into(),
            estimate: "estimate".into(),
            confidence: "confidence".into(),
        }
    }
}

struct ColumnIndex {
    participant_id: usize,
    group_id: usize,
    role: usize,
    question_code: usize,
    stage: usize,
    estimate: usize,
    confidence: usize,
}

impl ColumnIndex {
    fn resolve(headers: &csv::StringRecord, map: &ColumnMap) -> Result<Self, DatasetError> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
        };
        Ok(Self {
            participant_id: find(&map.participant_id)?,
            group_id: find(&map.group_id)?,
            role: find(&map.role)?,
            question_code: find(&map.question_code)?,
            stage: find(&map.stage)?,
            estimate: find(&map.estimate)?,
            confidence: find(&map.confidence)?,
        })
    }
}

/// A question plus its published median/MAD, when the table carries them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub question: Question,
    pub calibration: Option<NormParams<f64>>,
}

#[derive(Debug, Deserialize, Serialize)]
struct QuestionCsvRow {
    code: String,
    text: String,
    truth: f64,
    discussed: bool,
    #[serde(default)]
    median_i1: Option<f64>,
    #[serde(default)]
    mad_i1: Option<f64>,
}

pub fn parse_questions(path: &Path) -> Result<Vec<QuestionRow>, DatasetError> {
    read_questions(File::open(path)?)
}

pub fn read_questions<R: Read>(reader: R) -> Result<Vec<QuestionRow>, DatasetError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for result in rdr.deserialize::<QuestionCsvRow>() {
        let row = result.map_err(|e| DatasetError::Csv { line: error_line(&e), source: e })?;
        if !(row.truth > 0.0) || !row.truth.is_finite() {
            return Err(DatasetError::InvalidTruth(row.code));
        }
        if !seen.insert(row.code.clone()) {
            return Err(DatasetError::DuplicateQuestion(row.code));
        }
        let calibration = match (row.median_i1, row.mad_i1) {
            (Some(median), Some(mad)) => NormParams::new(median, mad).ok(),
            _ => None,
        };
        rows.push(QuestionRow {
            question: Question { code: row.code, text: row.text, truth: row.truth, discussed: row.discussed },
            calibration,
        });
    }
    Ok(rows)
}

pub fn write_questions<W: Write>(rows: &[QuestionRow], writer: W) -> Result<(), DatasetError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(QuestionCsvRow {
            code: row.question.code.clone(),
            text: row.question.text.clone(),
            truth: row.question.truth,
            discussed: row.question.discussed,
            median_i1: row.calibration.map(|p| p.median),
            mad_i1: row.calibration.map(|p| p.mad),
        })
        .map_err(|e| DatasetError::Csv { line: 0, source: e })?;
    }
    wtr.flush()?;
    Ok(())
}

fn error_line(e: &csv::Error) -> u64 {
    e.position().map(|p| p.line()).unwrap_or(0)
}

/// Reads a dataset file. Question codes must resolve against `questions`.
pub fn parse_dataset(path: &Path, schema: &ColumnMap, questions: &[Question]) -> Result<Dataset, DatasetError> {
    read_dataset(File::open(path)?, schema, questions)
}

pub fn read_dataset<R: Read>(reader: R, schema: &ColumnMap, questions: &[Question]) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DatasetError::Csv { line: 1, source: e })?
        .clone();
    let cols = ColumnIndex::resolve(&headers, schema)?;
    let known: HashSet<&str> = questions.iter().map(|q| q.code.as_str()).collect();

    let mut groups: BTreeMap<String, GroupRecord> = BTreeMap::new();
    let mut unaffiliated = Vec::new();
    let mut duplicates = Vec::new();
    let mut seen: HashSet<(String, String, Stage)> = HashSet::new();

    for result in rdr.records() {
        let row = result.map_err(|e| DatasetError::Csv { line: error_line(&e), source: e })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let record = parse_row(&row, line, &cols, &known)?;

        if record.stage == Stage::C {
            let group = groups
                .entry(record.group_id.clone())
                .or_insert_with(|| GroupRecord::new(record.group_id.clone()));
            if group.consensus.contains_key(&record.question_code) {
                duplicates.push(record);
                continue;
            }
            group.moderator.get_or_insert_with(|| record.participant_id.clone());
            group.consensus.insert(record.question_code.clone(), record.estimate);
            continue;
        }

        let key = (record.participant_id.clone(), record.question_code.clone(), record.stage);
        if !seen.insert(key) {
            duplicates.push(record);
            continue;
        }
        if record.role == Role::Moderator || record.group_id.is_empty() {
            unaffiliated.push(record);
            continue;
        }

        let group = groups
            .entry(record.group_id.clone())
            .or_insert_with(|| GroupRecord::new(record.group_id.clone()));
        let member = match group.members.iter().position(|m| m.participant_id == record.participant_id) {
            Some(i) => &mut group.members[i],
            None => {
                group.members.push(Member::new(record.participant_id.clone()));
                group.members.last_mut().expect("just pushed")
            }
        };
        let response = Response { estimate: record.estimate.value(), confidence: record.confidence };
        let slot = if record.stage == Stage::I1 { &mut member.i1 } else { &mut member.i2 };
        slot.insert(record.question_code, response);
    }

    Ok(Dataset {
        questions: questions.to_vec(),
        groups: groups.into_values().collect(),
        unaffiliated,
        duplicates,
    })
}

fn parse_row(
    row: &csv::StringRecord,
    line: u64,
    cols: &ColumnIndex,
    known: &HashSet<&str>,
) -> Result<EstimateRecord, DatasetError> {
    let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
    let malformed = |reason: &str| DatasetError::Malformed { line, reason: reason.to_string() };

    let participant_id = field(cols.participant_id);
    if participant_id.is_empty() {
        return Err(malformed("empty participant id"));
    }
    let group_id = field(cols.group_id);
    let role = match field(cols.role).to_ascii_lowercase().as_str() {
        "player" => Role::Player,
        "moderator" => Role::Moderator,
        other => return Err(DatasetError::UnknownRole { line, token: other.to_string() }),
    };
    let stage: Stage = field(cols.stage)
        .parse()
        .map_err(|token| DatasetError::UnknownStage { line, token })?;
    let code = field(cols.question_code);
    if !known.contains(code) {
        return Err(DatasetError::UnknownQuestion { line, code: code.to_string() });
    }

    let token = field(cols.estimate);
    let estimate = if token.is_empty() {
        Answer::Absent
    } else if token.eq_ignore_ascii_case("x") {
        if stage != Stage::C {
            return Err(DatasetError::InvalidEstimate { line, token: token.to_string() });
        }
        Answer::NoConsensus
    } else {
        let value: f64 = token
            .parse()
            .map_err(|_| DatasetError::InvalidEstimate { line, token: token.to_string() })?;
        if !value.is_finite() {
            return Err(DatasetError::InvalidEstimate { line, token: token.to_string() });
        }
        if value < 0.0 {
            return Err(DatasetError::NegativeEstimate { line });
        }
        Answer::Value(value)
    };

    let token = field(cols.confidence);
    let confidence = if token.is_empty() {
        None
    } else {
        match token.parse::<u8>() {
            Ok(c) if c <= 10 => Some(c),
            _ => return Err(DatasetError::ConfidenceOutOfRange { line, value: token.to_string() }),
        }
    };

    if stage == Stage::C {
        if role != Role::Moderator {
            return Err(malformed("consensus rows must come from the moderator"));
        }
        if group_id.is_empty() {
            return Err(malformed("consensus row without group id"));
        }
        if confidence.is_some() {
            return Err(malformed("consensus rows carry no confidence"));
        }
    }

    Ok(EstimateRecord {
        participant_id: participant_id.to_string(),
        group_id: group_id.to_string(),
        role,
        question_code: code.to_string(),
        stage,
        estimate,
        confidence,
    })
}

const HEADER: [&str; 7] = ["participant_id", "group_id", "role", "question_code", "stage", "estimate", "confidence"];

/// Writes the dataset in the interchange format with default column names.
/// Parsing the output yields an identical [`Dataset`].
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DatasetError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| DatasetError::Csv { line: 0, source: e };
    wtr.write_record(HEADER).map_err(csv_err)?;

    for group in &dataset.groups {
        for member in &group.members {
            for (stage, answers) in [(Stage::I1, &member.i1), (Stage::I2, &member.i2)] {
                for (code, r) in answers {
                    let estimate = r.estimate.map(Answer::Value).unwrap_or(Answer::Absent);
                    wtr.write_record(row_fields(
                        &member.participant_id,
                        &group.group_id,
                        Role::Player,
                        code,
                        stage,
                        estimate,
                        r.confidence,
                    ))
                    .map_err(csv_err)?;
                }
            }
        }
        let moderator = group
            .moderator
            .clone()
            .unwrap_or_else(|| format!("{}-moderator", group.group_id));
        for (code, answer) in &group.consensus {
            wtr.write_record(row_fields(&moderator, &group.group_id, Role::Moderator, code, Stage::C, *answer, None))
                .map_err(csv_err)?;
        }
    }
    for r in dataset.unaffiliated.iter().chain(&dataset.duplicates) {
        wtr.write_record(row_fields(
            &r.participant_id,
            &r.group_id,
            r.role,
            &r.question_code,
            r.stage,
            r.estimate,
            r.confidence,
        ))
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn row_fields(
    participant: &str,
    group: &str,
    role: Role,
    code: &str,
    stage: Stage,
    estimate: Answer,
    confidence: Option<u8>,
) -> [String; 7] {
    let estimate = match estimate {
        Answer::Value(v) => v.to_string(),
        Answer::Absent => String::new(),
        Answer::NoConsensus => "X".to_string(),
    };
    [
        participant.to_string(),
        group.to_string(),
        role.as_str().to_string(),
        code.to_string(),
        stage.as_str().to_string(),
        estimate,
        confidence.map(|c| c.to_string()).unwrap_or_default(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::question;
    use proptest::prelude::*;

    const HEAD: &str = "participant_id,group_id,role,question_code,stage,estimate,confidence\n";

    fn questions() -> Vec<Question> {
        vec![question("GOALS", true), question("EIFFEL", false)]
    }

    fn parse(body: &str) -> Result<Dataset, DatasetError> {
        read_dataset(format!("{HEAD}{body}").as_bytes(), &ColumnMap::default(), &questions())
    }

    #[test]
    fn player_row_maps_fields() {
        let ds = parse("p1,g1,player,GOALS,i1,120,7\n").unwrap();
        let m = &ds.groups[0].members[0];
        assert_eq!(ds.groups[0].group_id, "g1");
        assert_eq!(m.participant_id, "p1");
        assert_eq!(m.i1["GOALS"], Response { estimate: Some(120.0), confidence: Some(7) });
    }

    #[test]
    fn moderator_x_is_no_consensus() {
        let ds = parse("m1,g1,moderator,GOALS,c,X,\n").unwrap();
        assert_eq!(ds.groups[0].consensus["GOALS"], Answer::NoConsensus);
        assert_eq!(ds.groups[0].moderator.as_deref(), Some("m1"));
    }

    #[test]
    fn row_errors_report_line() {
        assert!(matches!(parse("p1,g1,player,GOALS,i1,-5,7\n"), Err(DatasetError::NegativeEstimate { line: 2 })));
        assert!(matches!(
            parse("p1,g1,player,GOALS,i1,5,7\np1,g1,player,GOALS,i3,5,7\n"),
            Err(DatasetError::UnknownStage { line: 3, .. })
        ));
        assert!(matches!(parse("p1,g1,player,GOALS,i1,5,11\n"), Err(DatasetError::ConfidenceOutOfRange { line: 2, .. })));
        assert!(matches!(parse("p1,g1,player,GOALS,i1,5,-1\n"), Err(DatasetError::ConfidenceOutOfRange { .. })));
        assert!(matches!(parse("p1,g1,player,NOPE,i1,5,1\n"), Err(DatasetError::UnknownQuestion { .. })));
        assert!(matches!(parse("p1,g1,player,GOALS,i1,X,1\n"), Err(DatasetError::InvalidEstimate { .. })));
        assert!(matches!(parse("p1,g1,player,GOALS,i1,abc,1\n"), Err(DatasetError::InvalidEstimate { .. })));
        assert!(matches!(parse("p1,g1,player,GOALS,c,5,\n"), Err(DatasetError::Malformed { .. })));
        assert!(matches!(parse("p1,g1,player,GOALS,i1\n"), Err(DatasetError::Csv { .. })));
        assert!(matches!(parse("p1,g1,judge,GOALS,i1,5,1\n"), Err(DatasetError::UnknownRole { .. })));
    }

    #[test]
    fn empty_cells_are_absent() {
        let ds = parse("p1,g1,player,GOALS,i2,,\n").unwrap();
        assert_eq!(ds.groups[0].members[0].i2["GOALS"], Response { estimate: None, confidence: None });
    }

    #[test]
    fn moderators_and_loners_are_unaffiliated() {
        let ds = parse("m1,g1,moderator,GOALS,i1,50,3\np9,,player,GOALS,i1,70,2\n").unwrap();
        assert_eq!(ds.unaffiliated.len(), 2);
        assert_eq!(ds.all_estimates("GOALS", Stage::I1), vec![50.0, 70.0]);
    }

    #[test]
    fn duplicates_are_set_aside() {
        let ds = parse("p1,g1,player,GOALS,i1,1,1\np1,g1,player,GOALS,i1,2,1\n").unwrap();
        assert_eq!(ds.groups[0].members[0].i1["GOALS"].estimate, Some(1.0));
        assert_eq!(ds.duplicates.len(), 1);
    }

    #[test]
    fn custom_column_names() {
        let map = ColumnMap { participant_id: "seat".into(), ..Default::default() };
        let text = "seat,group_id,role,question_code,stage,estimate,confidence,age\np1,g1,player,GOALS,i1,3,4,31\n";
        let ds = read_dataset(text.as_bytes(), &map, &questions()).unwrap();
        assert_eq!(ds.groups[0].members[0].participant_id, "p1");
        assert!(matches!(
            read_dataset(text.as_bytes(), &ColumnMap::default(), &questions()),
            Err(DatasetError::MissingColumn(_))
        ));
    }

    #[test]
    fn bundled_questions_parse() {
        let rows = read_questions(BUNDLED_QUESTIONS_CSV.as_bytes()).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows.iter().filter(|r| r.question.discussed).count(), 4);
        let eiffel = rows.iter().find(|r| r.question.code == "EIFFEL").unwrap();
        assert_eq!(eiffel.question.truth, 324.0);
        assert_eq!(eiffel.calibration, Some(NormParams { median: 200.0, mad: 110.0 }));
        let mut out = Vec::new();
        write_questions(&rows, &mut out).unwrap();
        assert_eq!(read_questions(out.as_slice()).unwrap(), rows);
    }

    #[test]
    fn bundled_example_parses() {
        let qs: Vec<Question> = read_questions(BUNDLED_QUESTIONS_CSV.as_bytes())
            .unwrap()
            .into_iter()
            .map(|r| r.question)
            .collect();
        let ds = read_dataset(BUNDLED_EXAMPLE_CSV.as_bytes(), &ColumnMap::default(), &qs).unwrap();
        assert!(!ds.groups.is_empty());
    }

    fn arb_row() -> impl Strategy<Value = String> {
        let id = prop::sample::select(vec!["p1", "p2", "p3", "m1"]);
        let group = prop::sample::select(vec!["g1", "g2", ""]);
        let code = prop::sample::select(vec!["GOALS", "EIFFEL"]);
        let stage = prop::sample::select(vec!["i1", "i2", "c"]);
        let value = prop_oneof![Just(String::new()), (0.0..1e6_f64).prop_map(|v| v.to_string()), Just("X".to_string())];
        let conf = prop_oneof![Just(String::new()), (0u8..=10).prop_map(|c| c.to_string())];
        (id, group, code, stage, value, conf).prop_map(|(id, g, code, stage, v, c)| {
            let role = if id.starts_with('m') { "moderator" } else { "player" };
            if stage == "c" && role == "moderator" {
                let g = if g.is_empty() { "g1" } else { g };
                return format!("{id},{g},{role},{code},c,{v},\n");
            }
            let stage = if stage == "c" { "i2" } else { stage };
            let v = if v == "X" { String::new() } else { v };
            format!("{id},{g},{role},{code},{stage},{v},{c}\n")
        })
    }

    proptest! {
        #[test]
        fn parse_serialize_parse_round_trips(rows in prop::collection::vec(arb_row(), 0..40)) {
            let Ok(first) = parse(&rows.concat()) else { return Ok(()); };
            let mut out = Vec::new();
            write_dataset(&first, &mut out).unwrap();
            let second = read_dataset(out.as_slice(), &ColumnMap::default(), &questions()).unwrap();
            prop_assert_eq!(first, second);
        }
    }
}
