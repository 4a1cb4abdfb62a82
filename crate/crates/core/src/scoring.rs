//! Per-problem scores, section averages and normalized learning gain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreWeights {
    pub accuracy: f64,
    pub time: f64,
    pub length: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights { accuracy: 0.5, time: 0.3, length: 0.2 }
    }
}

impl ScoreWeights {
    pub fn validate(&self) -> Result<(), ScoringError> {
        let all = [self.accuracy, self.time, self.length];
        if all.iter().any(|w| !(*w >= 0.0)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ScoringError::BadWeights);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("negative or non-finite input: {0}")]
    NegativeInput(&'static str),
    #[error("empty section")]
    EmptySection,
    #[error("pretest score {0} leaves no room for gain")]
    DegeneratePretest(f64),
    #[error("score weights must be non-negative and sum to 1")]
    BadWeights,
}

/// Everything the grader needs to know about one attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub completed: bool,
    pub elapsed_s: f64,
    pub accepted: u32,
    pub rejected: u32,
    pub proof_length: u32,
    pub par_time: f64,
    pub reference_length: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemScore {
    pub value: f64,
    pub accuracy: f64,
    pub time: f64,
    pub length: f64,
}

pub fn problem_score(attempt: &Attempt, weights: &ScoreWeights) -> Result<ProblemScore, ScoringError> {
    if !(attempt.elapsed_s >= 0.0) || !attempt.elapsed_s.is_finite() {
        return Err(ScoringError::NegativeInput("elapsed"));
    }
    if !(attempt.par_time > 0.0) {
        return Err(ScoringError::NegativeInput("par_time"));
    }
    if attempt.reference_length == 0 {
        return Err(ScoringError::NegativeInput("reference_length"));
    }
    if !attempt.completed {
        return Ok(ProblemScore { value: 0.0, accuracy: 0.0, time: 0.0, length: 0.0 });
    }
    let tries = attempt.accepted + attempt.rejected;
    let accuracy = if tries == 0 { 1.0 } else { f64::from(attempt.accepted) / f64::from(tries) };
    let time = if attempt.elapsed_s == 0.0 { 1.0 } else { (attempt.par_time / attempt.elapsed_s).min(1.0) };
    let length = if attempt.proof_length == 0 {
        1.0
    } else {
        (f64::from(attempt.reference_length) / f64::from(attempt.proof_length)).min(1.0)
    };
    let value = 100.0 * (weights.accuracy * accuracy + weights.time * time + weights.length * length);
    Ok(ProblemScore { value, accuracy, time, length })
}

pub fn test_score(scores: &[f64]) -> Result<f64, ScoringError> {
    if scores.is_empty() {
        return Err(ScoringError::EmptySection);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Normalized learning gain on unit-scaled scores.
pub fn nlg(pre: f64, post: f64) -> Result<f64, ScoringError> {
    if pre > 99.9 {
        return Err(ScoringError::DegeneratePretest(pre));
    }
    let (pre, post) = (pre / 100.0, post / 100.0);
    Ok((post - pre) / (1.0 - pre).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestScores {
    pub pre: f64,
    pub post: f64,
    pub iso_post: f64,
}
