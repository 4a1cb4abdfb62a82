//! Append-only session event log: record format, JSONL files and replay.
//!
//! The log is the source of truth. Everything downstream (scores,
//! classification, analytics) is recomputed from it by [`replay`].

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::GroupLabel;
use crate::curriculum::{Condition, CurriculumConfig, Phase};
use crate::formula::Formula;
use crate::proof::{Mode, PremiseRef, ProofState, Step, StepOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    SessionStarted,
    ProblemStarted,
    StepApplied,
    StepRejected,
    StrategySwitched,
    PromptShown,
    WeStepRevealed,
    ProblemCompleted,
    PhaseAdvanced,
    SessionCompleted,
}

/// Event-specific fields; absent fields are omitted from the serialized record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worked_example: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_refs: Option<Vec<PremiseRef>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operand: Option<Formula>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<Formula>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled_wait_s: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Payload {
    pub fn step(step: &Step) -> Payload {
        Payload {
            rule_name: Some(step.rule.clone()),
            parent_refs: Some(step.parents.clone()),
            operand: step.operand.clone(),
            ..Payload::default()
        }
    }

    /// The step a `step_applied`, `step_rejected` or `we_step_revealed` record describes.
    pub fn to_step(&self) -> Option<Step> {
        Some(Step { rule: self.rule_name.clone()?, parents: self.parent_refs.clone()?, operand: self.operand.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub session_id: String,
    pub problem_id: Option<String>,
    pub event_type: EventType,
    pub payload: Payload,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

/// One JSON object per line, keys in declaration order.
pub fn to_jsonl(records: &[EventRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("event records always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<W: Write>(mut writer: W, records: &[EventRecord]) -> io::Result<()> {
    writer.write_all(to_jsonl(records).as_bytes())
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<EventRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

/// Splits a multi-session log into per-session logs, in order of first appearance.
pub fn split_sessions(records: Vec<EventRecord>) -> Vec<Vec<EventRecord>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Vec<EventRecord>> = Default::default();
    for r in records {
        if !groups.contains_key(&r.session_id) {
            order.push(r.session_id.clone());
        }
        groups.entry(r.session_id.clone()).or_default().push(r);
    }
    order.into_iter().map(|id| groups.remove(&id).unwrap_or_default()).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("event seq {seq}: {message}")]
pub struct ReplayError {
    pub seq: u64,
    pub message: String,
}

/// One problem as reconstructed from the log.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemRun {
    pub problem_id: String,
    pub phase: Phase,
    pub worked_example: bool,
    pub state: ProofState,
    pub started_ms: u64,
    pub completed_ms: Option<u64>,
    pub sampled_wait_s: Option<u32>,
    pub prompt_elapsed_s: Option<f64>,
}

impl ProblemRun {
    pub fn elapsed_s(&self) -> Option<f64> {
        self.completed_ms.map(|end| end.saturating_sub(self.started_ms) as f64 / 1000.0)
    }

    pub fn switch_action_index(&self) -> Option<u32> {
        self.state.switch_record.as_ref().map(|s| s.action_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReplay {
    pub session_id: String,
    pub student_id: String,
    pub condition: Condition,
    pub group: Option<GroupLabel>,
    pub runs: Vec<ProblemRun>,
    pub phases: Vec<Phase>,
    pub finished: bool,
}

impl SessionReplay {
    pub fn runs_in(&self, phase: Phase) -> impl Iterator<Item = &ProblemRun> {
        self.runs.iter().filter(move |r| r.phase == phase)
    }
}

/// Rebuilds every problem's proof state from a single session's log,
/// re-validating each step through the proof kernel.
pub fn replay(log: &[EventRecord], curriculum: &CurriculumConfig) -> Result<SessionReplay, ReplayError> {
    let first = log.first().ok_or(ReplayError { seq: 0, message: "empty log".into() })?;
    let fail = |seq: u64, message: String| ReplayError { seq, message };
    if first.event_type != EventType::SessionStarted {
        return Err(fail(first.seq, "log does not open with session_started".into()));
    }
    let mut out = SessionReplay {
        session_id: first.session_id.clone(),
        student_id: first.payload.student_id.clone().unwrap_or_default(),
        condition: Condition::Unassigned,
        group: None,
        runs: Vec::new(),
        phases: vec![Phase::Pretest],
        finished: false,
    };
    let mut last_seq = None;
    for ev in log {
        let seq = ev.seq;
        if last_seq.is_some_and(|s| seq <= s) {
            return Err(fail(seq, "seq not strictly increasing".into()));
        }
        last_seq = Some(seq);
        if ev.session_id != out.session_id {
            return Err(fail(seq, format!("foreign session {}", ev.session_id)));
        }
        if out.finished {
            return Err(fail(seq, "event after session_completed".into()));
        }
        let needs_run = !matches!(
            ev.event_type,
            EventType::SessionStarted
                | EventType::ProblemStarted
                | EventType::PhaseAdvanced
                | EventType::SessionCompleted
        );
        if needs_run {
            let current = out.runs.last().map(|r| r.problem_id.as_str());
            if current.is_none() || ev.problem_id.as_deref() != current {
                return Err(fail(seq, format!("{:?} outside the current problem", ev.event_type)));
            }
        }
        let step = || ev.payload.to_step().ok_or_else(|| fail(seq, "step payload incomplete".into()));
        match ev.event_type {
            EventType::SessionStarted => {
                if seq != first.seq {
                    return Err(fail(seq, "second session_started".into()));
                }
            }
            EventType::ProblemStarted => {
                let id = ev.problem_id.as_deref().ok_or_else(|| fail(seq, "problem_started without problem".into()))?;
                let problem = curriculum.problem(id).ok_or_else(|| fail(seq, format!("unknown problem {id}")))?;
                let current_phase = *out.phases.last().expect("phases never empty");
                if problem.phase != current_phase {
                    return Err(fail(seq, format!("{id} started during {current_phase}")));
                }
                let we = ev.payload.worked_example == Some(true);
                if we && (out.condition != Condition::Experimental || problem.worked_example.is_none()) {
                    return Err(fail(seq, format!("{id} cannot be played as a worked example")));
                }
                out.runs.push(ProblemRun {
                    problem_id: id.to_string(),
                    phase: problem.phase,
                    worked_example: we,
                    state: if we {
                        ProofState::start_worked_example(problem)
                    } else {
                        ProofState::start_problem(problem)
                    },
                    started_ms: ev.timestamp_ms,
                    completed_ms: None,
                    sampled_wait_s: ev.payload.sampled_wait_s,
                    prompt_elapsed_s: None,
                });
            }
            EventType::StepApplied | EventType::WeStepRevealed | EventType::StepRejected => {
                let run = out.runs.last_mut().expect("checked above");
                let is_we = ev.event_type == EventType::WeStepRevealed;
                if is_we != run.worked_example {
                    return Err(fail(seq, "worked-example step mismatch".into()));
                }
                let outcome = run.state.apply_step(&step()?, ev.timestamp_ms).map_err(|e| fail(seq, e.to_string()))?;
                match (ev.event_type, outcome) {
                    (EventType::StepRejected, StepOutcome::Rejected(_)) => {}
                    (EventType::StepRejected, StepOutcome::Accepted { .. }) => {
                        return Err(fail(seq, "logged rejection is a valid step".into()))
                    }
                    (_, StepOutcome::Accepted { node }) => {
                        let got = &run.state.nodes[node].formula;
                        if ev.payload.formula.as_ref() != Some(got) {
                            return Err(fail(seq, format!("step derives {got}, log says {:?}", ev.payload.formula)));
                        }
                    }
                    (_, StepOutcome::Rejected(e)) => return Err(fail(seq, format!("logged step is invalid: {e}"))),
                }
                if ev.payload.action_index.is_some_and(|a| a != run.state.action_count) {
                    return Err(fail(seq, "action index mismatch".into()));
                }
            }
            EventType::StrategySwitched => {
                let run = out.runs.last_mut().expect("checked above");
                if run.worked_example {
                    return Err(fail(seq, "switch during worked example".into()));
                }
                let elapsed = ev.payload.elapsed_s.ok_or_else(|| fail(seq, "switch without elapsed_s".into()))?;
                run.state.switch_strategy(elapsed).map_err(|e| fail(seq, e.to_string()))?;
                if ev.payload.action_index.is_some_and(|a| a != run.state.action_count) {
                    return Err(fail(seq, "action index mismatch".into()));
                }
            }
            EventType::PromptShown => {
                if out.condition != Condition::Experimental {
                    return Err(fail(seq, format!("prompt shown under {}", out.condition)));
                }
                let run = out.runs.last_mut().expect("checked above");
                if run.prompt_elapsed_s.is_some() {
                    return Err(fail(seq, "second prompt for one problem".into()));
                }
                if run.state.mode != Mode::FC || run.state.completed {
                    return Err(fail(seq, "prompt outside an open FC proof".into()));
                }
                run.prompt_elapsed_s = Some(ev.payload.elapsed_s.unwrap_or_default());
            }
            EventType::ProblemCompleted => {
                let run = out.runs.last_mut().expect("checked above");
                if !run.state.completed || run.completed_ms.is_some() {
                    return Err(fail(seq, "problem_completed without a finished proof".into()));
                }
                run.completed_ms = Some(ev.timestamp_ms);
            }
            EventType::PhaseAdvanced => {
                let next = ev.payload.phase.ok_or_else(|| fail(seq, "phase_advanced without phase".into()))?;
                let current = *out.phases.last().expect("phases never empty");
                let expected = match current {
                    Phase::Pretest => Phase::Training,
                    _ => Phase::Posttest,
                };
                if current == Phase::Posttest || next != expected {
                    return Err(fail(seq, format!("phase {current} cannot advance to {next}")));
                }
                if next == Phase::Training {
                    out.condition = ev.payload.condition.ok_or_else(|| fail(seq, "condition not recorded".into()))?;
                    if out.condition == Condition::Unassigned {
                        return Err(fail(seq, "condition left unassigned".into()));
                    }
                    out.group = ev.payload.group;
                }
                out.phases.push(next);
            }
            EventType::SessionCompleted => out.finished = true,
        }
    }
    for run in &out.runs {
        run.state.verify().map_err(|m| fail(0, format!("{}: {m}", run.problem_id)))?;
    }
    Ok(out)
}
