//! When to show the strategy-switch prompt, and where worked examples go.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{Condition, Problem};
use crate::proof::{Mode, ProofState};

pub const DEFAULT_PROMPT_TEXT: &str = "This problem may be easier to solve with backward chaining. \
Consider clicking the switch button to derive a contradiction from the givens and the negated conclusion.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitBucket {
    pub seconds: u32,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptPolicy {
    pub wait_distribution: Vec<WaitBucket>,
    pub max_prompts_per_problem: u32,
    pub prompt_text: String,
}

impl Default for PromptPolicy {
    fn default() -> Self {
        let bucket = |seconds, probability| WaitBucket { seconds, probability };
        PromptPolicy {
            wait_distribution: vec![bucket(90, 0.55), bucket(180, 0.35), bucket(360, 0.10)],
            max_prompts_per_problem: 1,
            prompt_text: DEFAULT_PROMPT_TEXT.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("wait probabilities sum to {0}, not 1")]
    NotNormalized(String),
    #[error("wait durations must be positive and distinct")]
    BadDurations,
    #[error("wait distribution is empty")]
    Empty,
}

impl PromptPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.wait_distribution.is_empty() {
            return Err(PolicyError::Empty);
        }
        let total: f64 = self.wait_distribution.iter().map(|b| b.probability).sum();
        if (total - 1.0).abs() > 1e-9 || self.wait_distribution.iter().any(|b| b.probability < 0.0) {
            return Err(PolicyError::NotNormalized(total.to_string()));
        }
        let distinct: BTreeSet<u32> = self.wait_distribution.iter().map(|b| b.seconds).collect();
        if distinct.len() != self.wait_distribution.len() || distinct.contains(&0) {
            return Err(PolicyError::BadDurations);
        }
        Ok(())
    }

    /// One draw from the wait distribution, in seconds.
    pub fn sample_wait<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for b in &self.wait_distribution {
            acc += b.probability;
            if u < acc {
                return b.seconds;
            }
        }
        self.wait_distribution.last().map_or(0, |b| b.seconds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptReason {
    NotExperimental,
    NotProperProblem,
    ProblemCompleted,
    AlreadyBC,
    AlreadyPrompted,
    WaitNotElapsed,
    Show,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDecision {
    pub show: bool,
    pub reason: PromptReason,
}

impl PromptDecision {
    fn because(reason: PromptReason) -> Self {
        PromptDecision { show: reason == PromptReason::Show, reason }
    }
}

/// Advisory only: never changes the proof state.
pub fn should_prompt(
    state: &ProofState,
    elapsed_s: f64,
    condition: Condition,
    problem: &Problem,
    sampled_wait_s: u32,
    already_prompted: bool,
) -> PromptDecision {
    use PromptReason::*;
    let reason = if condition != Condition::Experimental {
        NotExperimental
    } else if !problem.proper_for_bc {
        NotProperProblem
    } else if state.completed {
        ProblemCompleted
    } else if state.mode == Mode::BC {
        AlreadyBC
    } else if already_prompted {
        AlreadyPrompted
    } else if elapsed_s < f64::from(sampled_wait_s) {
        WaitNotElapsed
    } else {
        Show
    };
    PromptDecision::because(reason)
}

/// Training slots `(level, ordinal)` that open with a worked example.
pub fn we_placement(condition: Condition) -> BTreeSet<(u8, u8)> {
    match condition {
        Condition::Experimental => [(1, 1), (2, 1)].into(),
        _ => BTreeSet::new(),
    }
}
