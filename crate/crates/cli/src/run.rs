use std::fs;

use anyhow::Context;
use crowd_core::analysis::{self, deliberation_report, AnalysisError, PanelSet, QuestionSelection};
use crowd_core::dataset::{
    complete_groups, read_dataset, read_questions, validate_dataset, write_dataset, ColumnMap, Dataset, QuestionRow,
    BUNDLED_QUESTIONS_CSV,
};
use crowd_core::resample::{write_curves_csv, ResampleConfig, SamplingMode};
use crowd_core::rules::{rule_benchmark, BenchmarkConfig};
use crowd_core::synth::{simulate, CrowdModel, SynthConfig, BUNDLED_DEFAULTS_TOML};
use serde_json::json;

use crate::args::{
    Command, CurvesArgs, IngestArgs, InputArgs, ReduceArgs, RulesBenchArgs, SeedArgs, SimulateArgs, StatsArgs,
};
use crate::artifact::{json_bytes, FileDigest, Format, Target};
use crate::Failure;

/// A finished artifact, not yet written.
pub struct Outcome {
    pub command: &'static str,
    pub target: Target,
    pub bytes: Vec<u8>,
    pub settings: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    /// Summary without the destination, which is appended once known.
    pub summary: String,
}

pub fn execute(command: &Command) -> Result<Outcome, Failure> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Curves(a) => curves(a),
        Command::RulesBench(a) => rules_bench(a),
        Command::Stats(a) => stats(a),
        Command::Reduce(a) => reduce(a),
    }
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64, Failure> {
    seed.ok_or_else(|| Failure::Usage(format!("--seed is required for {what}")))
}

fn seeded(args: &SeedArgs, what: &str) -> Result<u64, Failure> {
    if args.iterations == 0 {
        return Err(Failure::Usage("--iterations must be positive".into()));
    }
    require_seed(args.seed, what)
}

fn crowd_sizes(ns: &[usize]) -> Result<(), Failure> {
    if ns.contains(&0) {
        return Err(Failure::Usage("--ns entries must be positive".into()));
    }
    Ok(())
}

fn question_rows(path: Option<&std::path::Path>, inputs: &mut Vec<FileDigest>) -> anyhow::Result<Vec<QuestionRow>> {
    let (label, bytes) = match path {
        Some(p) => (p.display().to_string(), fs::read(p).with_context(|| format!("reading {}", p.display()))?),
        None => ("<bundled questions.csv>".to_string(), BUNDLED_QUESTIONS_CSV.as_bytes().to_vec()),
    };
    inputs.push(FileDigest::new("questions", label.as_str(), &bytes));
    read_questions(bytes.as_slice()).with_context(|| format!("questions {label}"))
}

fn load(input: &InputArgs, inputs: &mut Vec<FileDigest>) -> anyhow::Result<Dataset> {
    let rows = question_rows(input.questions.as_deref(), inputs)?;
    let questions: Vec<_> = rows.into_iter().map(|r| r.question).collect();
    let path = &input.input;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    inputs.push(FileDigest::new("input", path.display().to_string(), &bytes));
    read_dataset(bytes.as_slice(), &ColumnMap::default(), &questions).with_context(|| format!("{}", path.display()))
}

fn dataset_bytes(ds: &Dataset, format: Format) -> anyhow::Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut out = Vec::new();
            write_dataset(ds, &mut out)?;
            Ok(out)
        }
        Format::Json => json_bytes(ds),
    }
}

fn csv_rows<R: serde::Serialize>(rows: impl IntoIterator<Item = R>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn ingest(a: &IngestArgs) -> Result<Outcome, Failure> {
    let target = Target::new(a.output.output.as_deref())?;
    let mut inputs = Vec::new();
    let ds = load(&a.input, &mut inputs)?;
    let report = validate_dataset(&ds);
    for issue in &report.issues {
        eprintln!("warning[validation]: {}", serde_json::to_string(issue).context("encoding issue")?);
    }
    let bytes = dataset_bytes(&ds, target.format)?;
    let summary = format!(
        "ingest: {} questions, {} groups ({} complete), {} unaffiliated records, {} validation issues",
        ds.questions.len(),
        ds.groups.len(),
        complete_groups(&ds).len(),
        ds.unaffiliated.len(),
        report.issues.len()
    );
    Ok(Outcome { command: "ingest", target, bytes, settings: json!({}), inputs, summary })
}

fn simulate_cmd(a: &SimulateArgs) -> Result<Outcome, Failure> {
    let target = Target::new(a.output.output.as_deref())?;
    let seed = require_seed(a.seed, "simulate")?;
    if a.groups == 0 {
        return Err(Failure::Usage("--groups must be positive".into()));
    }
    let mut inputs = Vec::new();
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            inputs.push(FileDigest::new("config", path.display().to_string(), text.as_bytes()));
            SynthConfig::from_toml(&text).with_context(|| format!("{}", path.display()))?
        }
        None => {
            inputs.push(FileDigest::new("config", "<bundled defaults.toml>", BUNDLED_DEFAULTS_TOML.as_bytes()));
            SynthConfig::bundled()
        }
    };
    let d = &mut cfg.deliberation;
    for (field, value) in [
        (&mut d.beta, a.beta),
        (&mut d.gamma, a.gamma),
        (&mut d.delta, a.delta),
        (&mut d.noise_c, a.noise_c),
        (&mut d.noise_r, a.noise_r),
    ] {
        if let Some(v) = value {
            *field = v;
        }
    }
    if let Some(rho) = a.rho {
        cfg.crowd.rho = rho;
    }
    cfg.deliberation.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let rows = question_rows(a.questions.as_deref(), &mut inputs)?;
    let crowd = CrowdModel::calibrated(&rows, cfg.crowd.rho, cfg.crowd.group_size).context("calibrating crowd")?;
    let ds = simulate(&crowd, &cfg.deliberation, a.groups, seed).context("simulating")?;
    let bytes = dataset_bytes(&ds, target.format)?;
    let summary = format!("simulate: {} groups, {} questions, seed {seed}", a.groups, ds.questions.len());
    let settings = json!({ "groups": a.groups, "seed": seed, "model": cfg, "crowd": crowd });
    Ok(Outcome { command: "simulate", target, bytes, settings, inputs, summary })
}

fn curves(a: &CurvesArgs) -> Result<Outcome, Failure> {
    let target = Target::new(a.output.output.as_deref())?;
    let seed = seeded(&a.seed, "curves")?;
    crowd_sizes(&a.ns)?;
    let mut inputs = Vec::new();
    let ds = load(&a.input, &mut inputs)?;
    let set = PanelSet::build(&ds, a.select.into()).context("selecting questions")?;
    let mode = SamplingMode::from(a.mode);
    let cfg = ResampleConfig::new(a.seed.iterations, seed).with_cap(a.cap);
    let curves = analysis::curves(&set, a.stage.into(), mode, &a.ns, &cfg).context("error curves")?;
    let bytes = match target.format {
        Format::Csv => {
            let mut out = Vec::new();
            write_curves_csv(&curves, &mut out).context("writing curves")?;
            out
        }
        Format::Json => json_bytes(&curves)?,
    };
    let pooled = curves.last().expect("pooled curve");
    let ends = match (pooled.points.first(), pooled.points.last()) {
        (Some(f), Some(l)) => format!(", pooled error {:.4} at n={} to {:.4} at n={}", f.mean_error, f.n, l.mean_error, l.n),
        _ => String::new(),
    };
    let summary = format!(
        "curves: {} questions, stage {}, mode {}, {} sizes{ends}",
        set.panels.len(),
        crowd_core::dataset::Stage::from(a.stage),
        mode.as_str(),
        a.ns.len()
    );
    let settings = json!({
        "iterations": a.seed.iterations, "seed": seed, "cap": a.cap, "mode": mode.as_str(),
        "stage": crowd_core::dataset::Stage::from(a.stage).as_str(), "ns": a.ns,
        "questions": set.panels.iter().map(|p| p.question.code.as_str()).collect::<Vec<_>>(),
    });
    Ok(Outcome { command: "curves", target, bytes, settings, inputs, summary })
}

fn rules_bench(a: &RulesBenchArgs) -> Result<Outcome, Failure> {
    let target = Target::new(a.output.output.as_deref())?;
    let seed = seeded(&a.seed, "rules-bench")?;
    if a.sample == 0 {
        return Err(Failure::Usage("--sample must be positive".into()));
    }
    let mut inputs = Vec::new();
    let ds = load(&a.input, &mut inputs)?;
    let set = PanelSet::build(&ds, QuestionSelection::Discussed).context("selecting questions")?;
    let cfg = BenchmarkConfig { sample_size: a.sample, ..BenchmarkConfig::new(a.seed.iterations, seed) };
    let report = rule_benchmark(&set.panels, &set.params, &cfg).context("rule benchmark")?;
    let bytes = match target.format {
        Format::Csv => csv_rows(report.rules.iter().chain(std::iter::once(&report.consensus)))?,
        Format::Json => json_bytes(&report)?,
    };
    let best = report.rules.iter().min_by(|x, y| x.mean_error.total_cmp(&y.mean_error)).expect("rules");
    let summary = format!(
        "rules-bench: consensus error {:.4}, best rule {} {:.4}",
        report.consensus.mean_error, best.name, best.mean_error
    );
    let settings = json!({
        "iterations": a.seed.iterations, "seed": seed, "sample": a.sample,
        "rules": cfg.rules, "questions": report.questions,
    });
    Ok(Outcome { command: "rules-bench", target, bytes, settings, inputs, summary })
}

#[derive(serde::Serialize)]
struct StatsRow<'a> {
    quantity: &'a str,
    label_a: &'a str,
    value_a: f64,
    label_b: &'a str,
    value_b: f64,
    count: usize,
    statistic: f64,
    p: f64,
}

fn stats(a: &StatsArgs) -> Result<Outcome, Failure> {
    let target = Target::new(a.output.output.as_deref())?;
    let seed = require_seed(a.seed, "stats")?;
    if a.permutations == 0 {
        return Err(Failure::Usage("--permutations must be positive".into()));
    }
    let mut inputs = Vec::new();
    let ds = load(&a.input, &mut inputs)?;
    let set = PanelSet::build(&ds, QuestionSelection::Discussed).context("selecting questions")?;
    let r = deliberation_report(&set, a.permutations, seed).context("deliberation statistics")?;
    let bytes = match target.format {
        Format::Csv => {
            let paired = [("bias", &r.bias), ("distance", &r.distance), ("within_variance", &r.within_variance)];
            let mut rows: Vec<StatsRow> = paired
                .iter()
                .map(|(q, c)| StatsRow {
                    quantity: q,
                    label_a: &c.label_a,
                    value_a: c.mean_a,
                    label_b: &c.label_b,
                    value_b: c.mean_b,
                    count: c.pairs,
                    statistic: c.wilcoxon.statistic,
                    p: c.wilcoxon.p_two_sided,
                })
                .collect();
            let b = &r.between_variance;
            rows.push(StatsRow {
                quantity: "between_variance",
                label_a: "i2",
                value_a: b.variance_i2,
                label_b: "i1",
                value_b: b.variance_i1,
                count: b.values,
                statistic: b.test.statistic,
                p: b.test.p,
            });
            csv_rows(rows)?
        }
        Format::Json => json_bytes(&r)?,
    };
    let summary = format!(
        "stats: {} groups; bias {:+.4} vs {:+.4} (p {:.2e}); within variance {:.4} vs {:.4}; between variance {:.4} vs {:.4} (p {:.4})",
        r.groups,
        r.bias.mean_a,
        r.bias.mean_b,
        r.bias.wilcoxon.p_two_sided,
        r.within_variance.mean_a,
        r.within_variance.mean_b,
        r.between_variance.variance_i2,
        r.between_variance.variance_i1,
        r.between_variance.test.p
    );
    let settings = json!({ "permutations": a.permutations, "seed": seed, "questions": r.questions });
    Ok(Outcome { command: "stats", target, bytes, settings, inputs, summary })
}

#[derive(serde::Serialize)]
struct ReductionRow {
    questions: &'static str,
    n: usize,
    reduction: f64,
    sem: f64,
}

fn reduce(a: &ReduceArgs) -> Result<Outcome, Failure> {
    let target = Target::new(a.output.output.as_deref())?;
    let seed = seeded(&a.seed, "reduce")?;
    crowd_sizes(&a.ns)?;
    let mut inputs = Vec::new();
    let ds = load(&a.input, &mut inputs)?;
    let mode = SamplingMode::from(a.mode);
    let cfg = ResampleConfig::new(a.seed.iterations, seed).with_cap(a.cap);
    let mut tables = serde_json::Map::new();
    let mut rows = Vec::new();
    for (label, selection) in [("discussed", QuestionSelection::Discussed), ("undiscussed", QuestionSelection::Undiscussed)] {
        let set = match PanelSet::build(&ds, selection) {
            Ok(set) => set,
            Err(AnalysisError::NoQuestions) => continue,
            Err(e) => return Err(anyhow::Error::new(e).context(format!("{label} questions")).into()),
        };
        let table = analysis::reduction_table(&set, mode, &a.ns, &cfg).with_context(|| format!("{label} reduction"))?;
        rows.extend(table.iter().map(|p| ReductionRow { questions: label, n: p.n, reduction: p.reduction, sem: p.sem }));
        tables.insert(label.into(), serde_json::to_value(&table).context("encoding table")?);
    }
    if tables.is_empty() {
        return Err(Failure::Data(anyhow::anyhow!("dataset has no questions")));
    }
    let bytes = match target.format {
        Format::Csv => csv_rows(&rows)?,
        Format::Json => json_bytes(&tables)?,
    };
    let summary = format!(
        "reduce: mode {}, {} sizes, {}",
        mode.as_str(),
        a.ns.len(),
        rows.iter()
            .filter(|r| Some(&r.n) == a.ns.last())
            .map(|r| format!("{} {:.2}% at n={}", r.questions, r.reduction, r.n))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let settings =
        json!({ "iterations": a.seed.iterations, "seed": seed, "cap": a.cap, "mode": mode.as_str(), "ns": a.ns });
    Ok(Outcome { command: "reduce", target, bytes, settings, inputs, summary })
}
