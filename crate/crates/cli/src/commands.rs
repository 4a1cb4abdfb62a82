//! Batch subcommands. Each returns its document; `main` decides where it goes.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use tutor_core::analytics::{analytics_report, AnalyticsReport};
use tutor_core::classifier::{
    extract_features, pretest_events, rule_baseline, train_forest, Forest, ForestParams, GroupLabel,
};
use tutor_core::curriculum::{validate_curriculum, Condition, CurriculumConfig, Phase, ValidationReport};
use tutor_core::events::{read_jsonl, replay, split_sessions, write_jsonl, EventRecord, SessionReplay};
use tutor_core::report::{session_report, SessionReport};
use tutor_core::scoring::{ScoreWeights, TestScores};
use tutor_core::service::{Assigner, TutorConfig};
use tutor_core::sim::{run_experiment, PopulationSpec, SimContext};

pub fn load_curriculum(path: Option<&Path>) -> anyhow::Result<CurriculumConfig> {
    match path {
        Some(p) => CurriculumConfig::load(p).with_context(|| format!("loading curriculum {}", p.display())),
        None => Ok(CurriculumConfig::bundled()),
    }
}

/// Reads a `.jsonl` file, or every `.jsonl` file of a directory in name
/// order, and groups the records by session.
pub fn read_logs(path: &Path) -> anyhow::Result<Vec<Vec<EventRecord>>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        files.retain(|p| p.extension().is_some_and(|x| x == "jsonl"));
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut records = Vec::new();
    for f in &files {
        let file = fs::File::open(f).with_context(|| format!("opening {}", f.display()))?;
        records.extend(read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", f.display()))?);
    }
    if records.is_empty() {
        bail!("no event records under {}", path.display());
    }
    Ok(split_sessions(records))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Plain-text validation listing and whether every problem passed.
pub fn validate(curriculum: &CurriculumConfig) -> (String, bool) {
    let reports: Vec<ValidationReport> = validate_curriculum(curriculum);
    let mut out = String::new();
    let len = |n: Option<usize>| n.map_or("-".to_string(), |n| n.to_string());
    for r in &reports {
        let status = if r.passed() { "ok" } else { "FAIL" };
        let mut line =
            format!("{:<6} {:<4} fc={:<3} bc={:<3}", r.problem_id, status, len(r.fc_length), len(r.bc_length));
        for f in &r.failures {
            line.push_str(&format!(" {f};"));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    out.push_str(&format!("{} problems, {failed} failed\n", reports.len()));
    (out, failed == 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDocument {
    pub seed: u64,
    pub sessions: usize,
    pub training: AnalyticsReport,
    pub posttest: AnalyticsReport,
    pub reports: Vec<SessionReport>,
}

/// Runs the population and writes `<session_id>.jsonl` per student plus
/// `labels.json` (analytics group of each session), `groups.json` (the
/// generating policy's group) and `report.json`.
pub fn simulate(
    spec: &PopulationSpec,
    curriculum: CurriculumConfig,
    assigner: Assigner,
    out: &Path,
) -> anyhow::Result<SimulationDocument> {
    let ctx = SimContext::new(Arc::new(curriculum), TutorConfig::default(), assigner)?;
    let exp = run_experiment(spec, &ctx)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for log in &exp.logs {
        let session = &log[0].session_id;
        let path = out.join(format!("{session}.jsonl"));
        write_jsonl(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?, log)?;
    }
    let policies = spec.policies();
    let groups: BTreeMap<&String, GroupLabel> =
        exp.policies.iter().map(|(session, policy)| (session, policies[policy].group)).collect();
    write_json(&out.join("labels.json"), &exp.labels)?;
    write_json(&out.join("groups.json"), &groups)?;
    let doc = SimulationDocument {
        seed: spec.seed,
        sessions: exp.logs.len(),
        training: exp.training,
        posttest: exp.posttest,
        reports: exp.reports,
    };
    write_json(&out.join("report.json"), &doc)?;
    Ok(doc)
}

fn replay_all(logs: &[Vec<EventRecord>], curriculum: &CurriculumConfig) -> anyhow::Result<Vec<SessionReplay>> {
    logs.iter()
        .map(|log| replay(log, curriculum).with_context(|| format!("replaying session {}", log[0].session_id)))
        .collect()
}

/// Analytics over the finished sessions among `logs`.
pub fn analyze(
    logs: &[Vec<EventRecord>],
    curriculum: &CurriculumConfig,
    phase: Phase,
    groups: Option<&BTreeMap<String, String>>,
) -> anyhow::Result<AnalyticsReport> {
    let replays: Vec<SessionReplay> = replay_all(logs, curriculum)?.into_iter().filter(|r| r.finished).collect();
    if replays.is_empty() {
        bail!("no finished sessions to analyze");
    }
    let weights = ScoreWeights::default();
    let reports = replays.iter().map(|r| session_report(r, curriculum, &weights)).collect::<Result<Vec<_>, _>>()?;
    Ok(analytics_report(&replays, &reports, groups, phase)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeEntry {
    pub session_id: String,
    pub student_id: String,
    pub condition: Condition,
    pub group: Option<GroupLabel>,
    pub scores: Option<TestScores>,
    /// Absent when undefined (pretest at the maximum) or the session is unfinished.
    pub nlg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn grade(
    logs: &[Vec<EventRecord>],
    curriculum: &CurriculumConfig,
    weights: &ScoreWeights,
) -> anyhow::Result<Vec<GradeEntry>> {
    let mut out = Vec::new();
    for r in replay_all(logs, curriculum)? {
        let mut entry = GradeEntry {
            session_id: r.session_id.clone(),
            student_id: r.student_id.clone(),
            condition: r.condition,
            group: r.group,
            scores: None,
            nlg: None,
            error: None,
        };
        match session_report(&r, curriculum, weights) {
            Ok(report) => {
                entry.scores = Some(report.scores);
                entry.nlg = report.nlg;
            }
            Err(e) => entry.error = Some(e.to_string()),
        }
        out.push(entry);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyEntry {
    pub session_id: String,
    pub student_id: Option<String>,
    pub label: GroupLabel,
    /// Forest vote shares in Rote, Dabbler, Selective order; absent for the rule baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<[f64; 3]>,
}

pub fn classify(logs: &[Vec<EventRecord>], model: Option<&Forest>) -> anyhow::Result<Vec<ClassifyEntry>> {
    let mut out = Vec::new();
    for log in logs {
        let session_id = log[0].session_id.clone();
        let fv = extract_features(&pretest_events(log)).with_context(|| format!("session {session_id}"))?;
        let (label, probabilities) = match model {
            Some(f) => {
                let p = f.predict(&fv);
                (p.label, Some(p.probabilities))
            }
            None => (rule_baseline(&fv), None),
        };
        let student_id = log.iter().find_map(|e| e.payload.student_id.clone());
        out.push(ClassifyEntry { session_id, student_id, label, probabilities });
    }
    Ok(out)
}

/// Trains on every session that has a label in `groups`.
pub fn train(
    logs: &[Vec<EventRecord>],
    groups: &BTreeMap<String, GroupLabel>,
    params: ForestParams,
) -> anyhow::Result<Forest> {
    let mut data = Vec::new();
    for log in logs {
        let session_id = &log[0].session_id;
        if let Some(label) = groups.get(session_id) {
            let fv = extract_features(&pretest_events(log)).with_context(|| format!("session {session_id}"))?;
            data.push((fv, *label));
        }
    }
    Ok(train_forest(&data, params)?)
}
