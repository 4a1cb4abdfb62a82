//! Problem corpus: loading, structural checks, and validation against the
//! reference prover.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{entails, Formula};
use crate::policy::we_placement;
use crate::proof::{Mode, PremiseRef, ProofState, Step, StepOutcome};
use crate::prover::{prove, Proof, MAX_DEPTH};

/// The corpus shipped with the crate.
pub const DEFAULT_CURRICULUM: &str = include_str!("../data/default_curriculum.toml");

pub const PRETEST_COUNT: usize = 2;
pub const TRAINING_LEVELS: u8 = 5;
pub const PROBLEMS_PER_LEVEL: u8 = 4;
pub const POSTTEST_COUNT: usize = 6;
pub const ISOMORPHIC_COUNT: usize = 2;
pub const DEFAULT_PAR_TIME_S: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Pretest,
    Training,
    Posttest,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    Experimental,
    Control,
    SelectiveOriginal,
    Unassigned,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConditionVariant {
    pub we_enabled: bool,
    pub prompts_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkedStep {
    pub rule: String,
    pub parents: Vec<PremiseRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operand: Option<Formula>,
    pub formula: Formula,
    pub commentary: String,
}

impl WorkedStep {
    pub fn step(&self) -> Step {
        Step { rule: self.rule.clone(), parents: self.parents.clone(), operand: self.operand.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkedExampleScript {
    pub strategy: Mode,
    pub steps: Vec<WorkedStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub phase: Phase,
    pub level: Option<u8>,
    pub ordinal: u8,
    pub givens: Vec<Formula>,
    pub conclusion: Formula,
    pub proper_for_bc: bool,
    pub worked_example: Option<WorkedExampleScript>,
    pub isomorphic_to: Option<String>,
    pub par_time: f64,
    pub reference_length: usize,
}

impl Problem {
    pub fn premises(&self, mode: Mode) -> Vec<Formula> {
        let mut out = self.givens.clone();
        if mode == Mode::BC {
            out.push(Formula::not(self.conclusion.clone()));
        }
        out
    }

    pub fn target(&self, mode: Mode) -> Formula {
        match mode {
            Mode::FC => self.conclusion.clone(),
            Mode::BC => Formula::Bottom,
        }
    }

    /// Replays the worked example from the BC premises, returning the final state.
    pub fn replay_worked_example(&self) -> Result<ProofState, String> {
        let script = self.worked_example.as_ref().ok_or_else(|| format!("{} has no worked example", self.id))?;
        let mut state = ProofState::start_worked_example(self);
        for (i, ws) in script.steps.iter().enumerate() {
            match state.apply_step(&ws.step(), 0) {
                Ok(StepOutcome::Accepted { node }) if state.nodes[node].formula == ws.formula => {}
                Ok(StepOutcome::Accepted { node }) => {
                    return Err(format!(
                        "{} worked step {i} yields {} not {}",
                        self.id, state.nodes[node].formula, ws.formula
                    ))
                }
                Ok(StepOutcome::Rejected(e)) => return Err(format!("{} worked step {i}: {e}", self.id)),
                Err(e) => return Err(format!("{} worked step {i}: {e}", self.id)),
            }
        }
        if !state.completed {
            return Err(format!("{} worked example does not reach the target", self.id));
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub problems: Vec<Problem>,
    pub condition_variants: BTreeMap<Condition, ConditionVariant>,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read curriculum: {0}")]
    Io(#[from] std::io::Error),
    #[error("curriculum schema error: {0}")]
    Schema(String),
    #[error("expected {expected} {what}, found {found}")]
    CountMismatch { what: String, expected: usize, found: usize },
    #[error("problem {problem}: cannot parse formula {text:?}: {source}")]
    Formula { problem: String, text: String, source: crate::formula::ParseError },
    #[error("problem {problem}: givens do not entail the conclusion")]
    Unsound { problem: String },
    #[error("problem {problem}: {reason}")]
    Invalid { problem: String, reason: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCurriculum {
    #[serde(default)]
    conditions: BTreeMap<Condition, ConditionVariant>,
    problems: Vec<RawProblem>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    id: String,
    phase: Phase,
    level: Option<u8>,
    ordinal: u8,
    givens: Vec<String>,
    conclusion: String,
    #[serde(default)]
    proper_for_bc: bool,
    worked_example: Option<RawWorkedExample>,
    isomorphic_to: Option<String>,
    par_time: Option<f64>,
    reference_length: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkedExample {
    strategy: Mode,
    steps: Vec<RawWorkedStep>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkedStep {
    rule: String,
    parents: Vec<String>,
    operand: Option<String>,
    formula: String,
    commentary: String,
}

fn default_variants() -> BTreeMap<Condition, ConditionVariant> {
    let on = ConditionVariant { we_enabled: true, prompts_enabled: true };
    let off = ConditionVariant::default();
    [(Condition::Experimental, on), (Condition::Control, off), (Condition::SelectiveOriginal, off)].into()
}

impl CurriculumConfig {
    pub fn bundled() -> CurriculumConfig {
        CurriculumConfig::from_toml(DEFAULT_CURRICULUM).expect("bundled curriculum is valid")
    }

    pub fn load(path: &Path) -> Result<CurriculumConfig, LoadError> {
        CurriculumConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml(text: &str) -> Result<CurriculumConfig, LoadError> {
        let raw: RawCurriculum = toml::from_str(text).map_err(|e| LoadError::Schema(e.to_string()))?;
        let mut condition_variants = default_variants();
        condition_variants.extend(raw.conditions);
        let problems = raw.problems.into_iter().map(convert).collect::<Result<Vec<_>, _>>()?;
        let config = CurriculumConfig { problems, condition_variants };
        config.check()?;
        Ok(config)
    }

    pub fn variant(&self, condition: Condition) -> ConditionVariant {
        self.condition_variants.get(&condition).copied().unwrap_or_default()
    }

    pub fn problem(&self, id: &str) -> Option<&Problem> {
        self.problems.iter().find(|p| p.id == id)
    }

    /// Problems of one phase in presentation order.
    pub fn section(&self, phase: Phase) -> Vec<&Problem> {
        let mut out: Vec<&Problem> = self.problems.iter().filter(|p| p.phase == phase).collect();
        out.sort_by_key(|p| (p.level.unwrap_or(0), p.ordinal));
        out
    }

    /// Full presentation order: pretest, training, posttest.
    pub fn sequence(&self) -> Vec<&Problem> {
        [Phase::Pretest, Phase::Training, Phase::Posttest].into_iter().flat_map(|ph| self.section(ph)).collect()
    }

    fn check(&self) -> Result<(), LoadError> {
        let count = |phase| self.problems.iter().filter(|p| p.phase == phase).count();
        for (phase, expected) in [
            (Phase::Pretest, PRETEST_COUNT),
            (Phase::Training, usize::from(TRAINING_LEVELS * PROBLEMS_PER_LEVEL)),
            (Phase::Posttest, POSTTEST_COUNT),
        ] {
            let found = count(phase);
            if found != expected {
                return Err(LoadError::CountMismatch { what: format!("{phase} problems"), expected, found });
            }
        }
        let invalid = |p: &Problem, reason: String| LoadError::Invalid { problem: p.id.clone(), reason };

        let mut ids = BTreeSet::new();
        let mut slots = BTreeSet::new();
        for p in &self.problems {
            if !ids.insert(p.id.as_str()) {
                return Err(invalid(p, "duplicate id".into()));
            }
            match (p.phase, p.level) {
                (Phase::Training, Some(level)) if (1..=TRAINING_LEVELS).contains(&level) => {
                    if !(1..=PROBLEMS_PER_LEVEL).contains(&p.ordinal) {
                        return Err(invalid(p, format!("ordinal {} outside 1..=4", p.ordinal)));
                    }
                    if !slots.insert((level, p.ordinal)) {
                        return Err(invalid(p, format!("slot ({level}, {}) used twice", p.ordinal)));
                    }
                }
                (Phase::Training, _) => return Err(invalid(p, "training problems need a level in 1..=5".into())),
                (_, Some(_)) => return Err(invalid(p, "only training problems have a level".into())),
                _ => {}
            }
            if p.givens.contains(&p.conclusion) {
                return Err(invalid(p, "conclusion is one of the givens".into()));
            }
            if p.worked_example.is_some() && p.phase != Phase::Training {
                return Err(invalid(p, "worked examples belong to training problems".into()));
            }
            if p.reference_length == 0 {
                return Err(invalid(p, "reference_length must be positive".into()));
            }
            if p.par_time <= 0.0 {
                return Err(invalid(p, "par_time must be positive".into()));
            }
            if !entails(&p.givens, &p.conclusion).map_err(|e| invalid(p, e.to_string()))? {
                return Err(LoadError::Unsound { problem: p.id.clone() });
            }
            if let Some(script) = &p.worked_example {
                if script.strategy != Mode::BC {
                    return Err(invalid(p, "worked examples demonstrate BC".into()));
                }
                p.replay_worked_example().map_err(|e| invalid(p, e))?;
            }
        }

        let mut iso_targets = BTreeSet::new();
        for p in &self.problems {
            let Some(target) = &p.isomorphic_to else { continue };
            if p.phase != Phase::Posttest {
                return Err(invalid(p, "only posttest problems may declare isomorphic_to".into()));
            }
            match self.problem(target) {
                Some(t) if t.phase == Phase::Pretest => {
                    iso_targets.insert(target.as_str());
                }
                _ => return Err(invalid(p, format!("isomorphic_to {target:?} is not a pretest problem"))),
            }
        }
        let iso_count = self.problems.iter().filter(|p| p.isomorphic_to.is_some()).count();
        if iso_count != ISOMORPHIC_COUNT || iso_targets.len() != ISOMORPHIC_COUNT {
            return Err(LoadError::CountMismatch {
                what: "isomorphic posttest problems".into(),
                expected: ISOMORPHIC_COUNT,
                found: iso_targets.len().min(iso_count),
            });
        }

        if self.variant(Condition::Experimental).we_enabled {
            let wanted = we_placement(Condition::Experimental);
            for p in self.section(Phase::Training) {
                let slot = (p.level.unwrap_or(0), p.ordinal);
                let has = p.worked_example.is_some();
                if has != wanted.contains(&slot) {
                    let reason = if has {
                        "worked example outside the placement slots"
                    } else {
                        "placement slot lacks a worked example"
                    };
                    return Err(invalid(p, reason.into()));
                }
            }
        }
        Ok(())
    }
}

fn convert(raw: RawProblem) -> Result<Problem, LoadError> {
    let id = raw.id;
    let parse = |text: &str| {
        Formula::parse(text).map_err(|source| LoadError::Formula {
            problem: id.clone(),
            text: text.to_string(),
            source,
        })
    };
    let givens = raw.givens.iter().map(|g| parse(g)).collect::<Result<Vec<_>, _>>()?;
    let conclusion = parse(&raw.conclusion)?;
    let worked_example = match raw.worked_example {
        None => None,
        Some(we) => {
            let mut steps = Vec::with_capacity(we.steps.len());
            for s in we.steps {
                let parents = s
                    .parents
                    .iter()
                    .map(|r| r.parse::<PremiseRef>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| LoadError::Invalid { problem: id.clone(), reason: e.to_string() })?;
                steps.push(WorkedStep {
                    rule: s.rule,
                    parents,
                    operand: s.operand.as_deref().map(parse).transpose()?,
                    formula: parse(&s.formula)?,
                    commentary: s.commentary,
                });
            }
            Some(WorkedExampleScript { strategy: we.strategy, steps })
        }
    };
    Ok(Problem {
        phase: raw.phase,
        level: raw.level,
        ordinal: raw.ordinal,
        givens,
        conclusion,
        proper_for_bc: raw.proper_for_bc,
        worked_example,
        isomorphic_to: raw.isomorphic_to,
        par_time: raw.par_time.unwrap_or(DEFAULT_PAR_TIME_S),
        reference_length: raw.reference_length,
        id,
    })
}

/// Shortest proof the reference prover finds in `mode`.
pub fn solve(problem: &Problem, mode: Mode, depth_limit: usize) -> Option<Proof> {
    prove(&problem.premises(mode), &problem.target(mode), depth_limit)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationFailure {
    NotEntailed,
    FcUnsolvable,
    BcUnsolvable,
    ReferenceLengthMismatch { stated: usize, found: usize },
    WorkedExample(String),
}

impl fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationFailure::NotEntailed => f.write_str("givens do not entail the conclusion"),
            ValidationFailure::FcUnsolvable => write!(f, "FC unsolvable within depth {MAX_DEPTH}"),
            ValidationFailure::BcUnsolvable => write!(f, "BC unsolvable within depth {MAX_DEPTH}"),
            ValidationFailure::ReferenceLengthMismatch { stated, found } => {
                write!(f, "reference_length {stated} but the prover finds {found}")
            }
            ValidationFailure::WorkedExample(e) => write!(f, "worked example: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub problem_id: String,
    pub fc_length: Option<usize>,
    pub bc_length: Option<usize>,
    pub failures: Vec<ValidationFailure>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks entailment, solvability in both modes, reference-length
/// consistency (against the shorter of the two modes) and worked-example replay.
pub fn validate_problem(problem: &Problem) -> ValidationReport {
    validate_problem_within(problem, MAX_DEPTH)
}

pub fn validate_problem_within(problem: &Problem, depth_limit: usize) -> ValidationReport {
    let mut failures = Vec::new();
    if !entails(&problem.givens, &problem.conclusion).unwrap_or(false) {
        failures.push(ValidationFailure::NotEntailed);
    }
    let fc_length = solve(problem, Mode::FC, depth_limit).map(|p| p.len());
    let bc_length = solve(problem, Mode::BC, depth_limit).map(|p| p.len());
    if fc_length.is_none() {
        failures.push(ValidationFailure::FcUnsolvable);
    }
    if bc_length.is_none() {
        failures.push(ValidationFailure::BcUnsolvable);
    }
    if let Some(found) = fc_length.into_iter().chain(bc_length).min() {
        if found != problem.reference_length {
            failures.push(ValidationFailure::ReferenceLengthMismatch { stated: problem.reference_length, found });
        }
    }
    if problem.worked_example.is_some() {
        if let Err(e) = problem.replay_worked_example() {
            failures.push(ValidationFailure::WorkedExample(e));
        }
    }
    ValidationReport { problem_id: problem.id.clone(), fc_length, bc_length, failures }
}

pub fn validate_curriculum(config: &CurriculumConfig) -> Vec<ValidationReport> {
    config.sequence().into_iter().map(validate_problem).collect()
}
