//! Per-session grade report, computed from a replayed event log.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::GroupLabel;
use crate::curriculum::{Condition, CurriculumConfig, Phase};
use crate::events::SessionReplay;
use crate::proof::Mode;
use crate::scoring::{nlg, problem_score, test_score, Attempt, ScoreWeights, ScoringError, TestScores};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("session {0} is not finished")]
    Incomplete(String),
    #[error("problem {0} is not in the curriculum")]
    UnknownProblem(String),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDetail {
    pub problem_id: String,
    pub phase: Phase,
    pub worked_example: bool,
    pub completed: bool,
    pub elapsed_s: Option<f64>,
    pub accepted: u32,
    pub rejected: u32,
    pub final_mode: Mode,
    pub switch_action_index: Option<u32>,
    pub prompted: bool,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub student_id: String,
    pub condition: Condition,
    pub group: Option<GroupLabel>,
    pub scores: TestScores,
    /// `None` when the pretest score leaves no room for gain.
    pub nlg: Option<f64>,
    pub problems: Vec<ProblemDetail>,
}

impl SessionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

pub fn session_report(
    replay: &SessionReplay,
    curriculum: &CurriculumConfig,
    weights: &ScoreWeights,
) -> Result<SessionReport, ReportError> {
    if !replay.finished {
        return Err(ReportError::Incomplete(replay.session_id.clone()));
    }
    let mut problems = Vec::new();
    let (mut pre, mut post, mut iso) = (Vec::new(), Vec::new(), Vec::new());
    for run in &replay.runs {
        let problem =
            curriculum.problem(&run.problem_id).ok_or_else(|| ReportError::UnknownProblem(run.problem_id.clone()))?;
        let state = &run.state;
        let score = if run.worked_example {
            None
        } else {
            let attempt = Attempt {
                completed: run.completed_ms.is_some(),
                elapsed_s: run.elapsed_s().unwrap_or_default(),
                accepted: state.accepted_steps(),
                rejected: state.rejected_attempts,
                proof_length: state.accepted_steps(),
                par_time: problem.par_time,
                reference_length: problem.reference_length as u32,
            };
            Some(problem_score(&attempt, weights)?.value)
        };
        match (run.phase, score) {
            (Phase::Pretest, Some(s)) => pre.push(s),
            (Phase::Posttest, Some(s)) => {
                post.push(s);
                if problem.isomorphic_to.is_some() {
                    iso.push(s);
                }
            }
            _ => {}
        }
        problems.push(ProblemDetail {
            problem_id: run.problem_id.clone(),
            phase: run.phase,
            worked_example: run.worked_example,
            completed: run.completed_ms.is_some(),
            elapsed_s: run.elapsed_s(),
            accepted: state.accepted_steps(),
            rejected: state.rejected_attempts,
            final_mode: state.mode,
            switch_action_index: run.switch_action_index(),
            prompted: run.prompt_elapsed_s.is_some(),
            score,
        });
    }
    let scores = TestScores { pre: test_score(&pre)?, post: test_score(&post)?, iso_post: test_score(&iso)? };
    Ok(SessionReport {
        session_id: replay.session_id.clone(),
        student_id: replay.student_id.clone(),
        condition: replay.condition,
        group: replay.group,
        nlg: nlg(scores.pre, scores.post).ok(),
        scores,
        problems,
    })
}
