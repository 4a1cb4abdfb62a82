//! Switch-behavior taxonomy, per-group profiles and the study report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::GroupLabel;
use crate::curriculum::{Condition, Phase};
use crate::events::{EventRecord, EventType, SessionReplay};
use crate::report::SessionReport;
use crate::stats::{chi_square_2x2, one_way_anova, StatResult, StatsError};

/// A switch at or before this action index is early.
pub const EARLY_SWITCH_THRESHOLD: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SwitchBehavior {
    NoSwitch,
    EarlySwitch,
    LateSwitch,
}

impl SwitchBehavior {
    pub fn from_index(action_index: Option<u32>) -> SwitchBehavior {
        match action_index {
            None => SwitchBehavior::NoSwitch,
            Some(i) if i <= EARLY_SWITCH_THRESHOLD => SwitchBehavior::EarlySwitch,
            Some(_) => SwitchBehavior::LateSwitch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("problem log holds {0} strategy switches")]
    MultipleSwitches(usize),
    #[error("log mixes problems {0} and {1}")]
    MixedProblems(String, String),
    #[error("switch event without an action index")]
    MissingActionIndex,
    #[error("session {0} has no group label")]
    UnknownGroup(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Classifies one problem's log.
pub fn classify_switch(problem_log: &[EventRecord]) -> Result<SwitchBehavior, AnalyticsError> {
    let mut ids = problem_log.iter().filter_map(|e| e.problem_id.as_deref());
    if let Some(first) = ids.next() {
        if let Some(other) = ids.find(|id| *id != first) {
            return Err(AnalyticsError::MixedProblems(first.into(), other.into()));
        }
    }
    let switches: Vec<&EventRecord> =
        problem_log.iter().filter(|e| e.event_type == EventType::StrategySwitched).collect();
    match switches.as_slice() {
        [] => Ok(SwitchBehavior::NoSwitch),
        [s] => Ok(SwitchBehavior::from_index(Some(s.payload.action_index.ok_or(AnalyticsError::MissingActionIndex)?))),
        many => Err(AnalyticsError::MultipleSwitches(many.len())),
    }
}

/// Problem counts for one group; percentages derive from the integers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchCounts {
    pub no: u64,
    pub early: u64,
    pub late: u64,
}

impl SwitchCounts {
    pub fn add(&mut self, b: SwitchBehavior) {
        match b {
            SwitchBehavior::NoSwitch => self.no += 1,
            SwitchBehavior::EarlySwitch => self.early += 1,
            SwitchBehavior::LateSwitch => self.late += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.no + self.early + self.late
    }

    /// `(pct_no, pct_early, pct_late)`; all zero for an empty group.
    pub fn percentages(&self) -> (f64, f64, f64) {
        let t = self.total();
        if t == 0 {
            return (0.0, 0.0, 0.0);
        }
        let pct = |c: u64| 100.0 * c as f64 / t as f64;
        (pct(self.no), pct(self.early), pct(self.late))
    }

    pub fn early_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.early as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProfile {
    pub students: usize,
    pub counts: SwitchCounts,
    pub pct_no: f64,
    pub pct_early: f64,
    pub pct_late: f64,
    /// Mean over students of each student's early-switch percentage.
    pub per_student_pct_early: f64,
}

/// Per-student counts for `phase`, worked examples excluded.
pub fn student_counts(replay: &SessionReplay, phase: Phase) -> SwitchCounts {
    let mut c = SwitchCounts::default();
    for run in replay.runs_in(phase).filter(|r| !r.worked_example) {
        c.add(SwitchBehavior::from_index(run.switch_action_index()));
    }
    c
}

/// Canonical grouping: Selective students form one group, the others are
/// split by condition.
pub fn default_label(replay: &SessionReplay) -> Option<String> {
    match (replay.group?, replay.condition) {
        (GroupLabel::Selective, _) => Some("Selective".into()),
        (g, Condition::Experimental | Condition::Control) => Some(format!("{g}-{}", replay.condition)),
        (g, _) => Some(g.to_string()),
    }
}

fn label_of(replay: &SessionReplay, grouping: Option<&BTreeMap<String, String>>) -> Result<String, AnalyticsError> {
    match grouping {
        Some(map) => map.get(&replay.session_id).cloned(),
        None => default_label(replay),
    }
    .ok_or_else(|| AnalyticsError::UnknownGroup(replay.session_id.clone()))
}

/// Per-student early-switch fractions, keyed by group label.
pub fn early_fractions(
    sessions: &[SessionReplay],
    grouping: Option<&BTreeMap<String, String>>,
    phase: Phase,
) -> Result<BTreeMap<String, Vec<f64>>, AnalyticsError> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in sessions {
        let c = student_counts(s, phase);
        if c.total() == 0 {
            continue;
        }
        out.entry(label_of(s, grouping)?).or_default().push(c.early_fraction());
    }
    Ok(out)
}

pub fn group_switch_profile(
    sessions: &[SessionReplay],
    grouping: Option<&BTreeMap<String, String>>,
    phase: Phase,
) -> Result<BTreeMap<String, GroupProfile>, AnalyticsError> {
    let mut acc: BTreeMap<String, (SwitchCounts, Vec<f64>)> = BTreeMap::new();
    for s in sessions {
        let c = student_counts(s, phase);
        if c.total() == 0 {
            continue;
        }
        let entry = acc.entry(label_of(s, grouping)?).or_default();
        entry.0.no += c.no;
        entry.0.early += c.early;
        entry.0.late += c.late;
        entry.1.push(100.0 * c.early_fraction());
    }
    Ok(acc
        .into_iter()
        .map(|(label, (counts, per_student))| {
            let (pct_no, pct_early, pct_late) = counts.percentages();
            let mean = per_student.iter().sum::<f64>() / per_student.len() as f64;
            let profile = GroupProfile {
                students: per_student.len(),
                counts,
                pct_no,
                pct_early,
                pct_late,
                per_student_pct_early: mean,
            };
            (label, profile)
        })
        .collect())
}

/// Rote/Dabbler by Experimental/Control, rows Experimental then Control.
pub fn condition_table(sessions: &[SessionReplay]) -> [[u64; 2]; 2] {
    let mut t = [[0; 2]; 2];
    for s in sessions {
        let row = match s.condition {
            Condition::Experimental => 0,
            Condition::Control => 1,
            _ => continue,
        };
        let col = match s.group {
            Some(GroupLabel::Rote) => 0,
            Some(GroupLabel::Dabbler) => 1,
            _ => continue,
        };
        t[row][col] += 1;
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    pub students: usize,
    pub mean_pre: f64,
    pub mean_post: f64,
    pub mean_iso_post: f64,
    pub mean_nlg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub phase: Phase,
    pub sessions: usize,
    pub profiles: BTreeMap<String, GroupProfile>,
    /// One-way ANOVA of per-student early-switch fractions across groups.
    pub early_switch_anova: Option<StatResult>,
    pub condition_table: [[u64; 2]; 2],
    pub condition_balance: Option<StatResult>,
    pub scores: BTreeMap<String, GroupScores>,
}

impl AnalyticsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

pub fn analytics_report(
    sessions: &[SessionReplay],
    reports: &[SessionReport],
    grouping: Option<&BTreeMap<String, String>>,
    phase: Phase,
) -> Result<AnalyticsReport, AnalyticsError> {
    let profiles = group_switch_profile(sessions, grouping, phase)?;
    let fractions: Vec<Vec<f64>> =
        early_fractions(sessions, grouping, phase)?.into_values().filter(|g| g.len() >= 2).collect();
    let early_switch_anova = if fractions.len() >= 2 { one_way_anova(&fractions).ok() } else { None };
    let table = condition_table(sessions);
    let condition_balance = chi_square_2x2(table).ok();

    let by_id: BTreeMap<&str, &SessionReplay> = sessions.iter().map(|s| (s.session_id.as_str(), s)).collect();
    let mut grouped: BTreeMap<String, Vec<&SessionReport>> = BTreeMap::new();
    for r in reports {
        let label = match by_id.get(r.session_id.as_str()) {
            Some(s) => label_of(s, grouping)?,
            None => return Err(AnalyticsError::UnknownGroup(r.session_id.clone())),
        };
        grouped.entry(label).or_default().push(r);
    }
    let scores = grouped
        .into_iter()
        .map(|(label, rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&SessionReport) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            let nlgs: Vec<f64> = rs.iter().filter_map(|r| r.nlg).collect();
            let g = GroupScores {
                students: rs.len(),
                mean_pre: mean(&|r| r.scores.pre),
                mean_post: mean(&|r| r.scores.post),
                mean_iso_post: mean(&|r| r.scores.iso_post),
                mean_nlg: (!nlgs.is_empty()).then(|| nlgs.iter().sum::<f64>() / nlgs.len() as f64),
            };
            (label, g)
        })
        .collect();
    Ok(AnalyticsReport {
        phase,
        sessions: sessions.len(),
        profiles,
        early_switch_anova,
        condition_table: table,
        condition_balance,
        scores,
    })
}
