//! One problem's in-progress proof in forward-chaining (FC) or
//! backward-chaining (BC, proof by contradiction) mode.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::curriculum::Problem;
use crate::formula::Formula;
use crate::rules::{apply_rule, catalog, RuleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    FC,
    BC,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::FC => "FC",
            Mode::BC => "BC",
        })
    }
}

/// Reference to a step premise: a working premise (`g<i>`) or an earlier
/// derived node (`n<i>`). In BC mode `g<givens.len()>` is the negated conclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PremiseRef {
    Given(usize),
    Node(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad premise reference {0:?} (expected g<index> or n<index>)")]
pub struct RefParseError(String);

impl fmt::Display for PremiseRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PremiseRef::Given(i) => write!(f, "g{i}"),
            PremiseRef::Node(i) => write!(f, "n{i}"),
        }
    }
}

impl FromStr for PremiseRef {
    type Err = RefParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || RefParseError(s.to_string());
        let (kind, digits) = s.split_at_checked(1).ok_or_else(err)?;
        let index: usize = digits.parse().map_err(|_| err())?;
        match kind {
            "g" => Ok(PremiseRef::Given(index)),
            "n" => Ok(PremiseRef::Node(index)),
            _ => Err(err()),
        }
    }
}

impl Serialize for PremiseRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PremiseRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A student's requested rule application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub rule: String,
    pub parents: Vec<PremiseRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operand: Option<Formula>,
}

impl Step {
    pub fn new(rule: impl Into<String>, parents: Vec<PremiseRef>) -> Self {
        Step { rule: rule.into(), parents, operand: None }
    }

    pub fn with_operand(mut self, operand: Formula) -> Self {
        self.operand = Some(operand);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedNode {
    pub formula: Formula,
    pub rule_name: String,
    pub parent_refs: Vec<PremiseRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operand: Option<Formula>,
    pub action_index: u32,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchRecord {
    pub action_index: u32,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted { node: usize },
    Rejected(RuleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error("unknown rule {0:?}")]
    UnknownRule(String),
    #[error("premise reference {0} does not exist")]
    DanglingRef(PremiseRef),
    #[error("the problem is already completed")]
    AlreadyCompleted,
    #[error("already in backward-chaining mode")]
    AlreadyBackward,
}

impl ProofError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ProofError::UnknownRule(_) => "unknown-rule",
            ProofError::DanglingRef(_) => "dangling-reference",
            ProofError::AlreadyCompleted => "already-completed",
            ProofError::AlreadyBackward => "already-in-bc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofState {
    pub problem_id: String,
    pub mode: Mode,
    pub givens: Vec<Formula>,
    pub conclusion: Formula,
    pub target: Formula,
    pub nodes: Vec<DerivedNode>,
    pub action_count: u32,
    pub switch_record: Option<SwitchRecord>,
    pub completed: bool,
    pub rejected_attempts: u32,
}

impl ProofState {
    pub fn new(problem_id: impl Into<String>, givens: Vec<Formula>, conclusion: Formula) -> Self {
        ProofState {
            problem_id: problem_id.into(),
            mode: Mode::FC,
            givens,
            target: conclusion.clone(),
            conclusion,
            nodes: Vec::new(),
            action_count: 0,
            switch_record: None,
            completed: false,
            rejected_attempts: 0,
        }
    }

    /// Problems always open in FC.
    pub fn start_problem(problem: &Problem) -> Self {
        ProofState::new(problem.id.clone(), problem.givens.clone(), problem.conclusion.clone())
    }

    /// A worked-example demonstration opens directly in BC and carries no
    /// switch record, since the student never chose the strategy.
    pub fn start_worked_example(problem: &Problem) -> Self {
        let mut state = ProofState::start_problem(problem);
        state.mode = Mode::BC;
        state.target = Formula::Bottom;
        state
    }

    /// Givens, plus the literal negation of the conclusion in BC.
    pub fn premises(&self) -> Vec<Formula> {
        let mut out = self.givens.clone();
        if self.mode == Mode::BC {
            out.push(Formula::not(self.conclusion.clone()));
        }
        out
    }

    pub fn premise_count(&self) -> usize {
        self.givens.len() + usize::from(self.mode == Mode::BC)
    }

    pub fn resolve(&self, r: PremiseRef) -> Option<Formula> {
        match r {
            PremiseRef::Given(i) if i < self.givens.len() => Some(self.givens[i].clone()),
            PremiseRef::Given(i) if i == self.givens.len() && self.mode == Mode::BC => {
                Some(Formula::not(self.conclusion.clone()))
            }
            PremiseRef::Given(_) => None,
            PremiseRef::Node(i) => self.nodes.get(i).map(|n| n.formula.clone()),
        }
    }

    pub fn check_completion(&self) -> bool {
        self.nodes.iter().any(|n| n.formula == self.target)
    }

    pub fn accepted_steps(&self) -> u32 {
        self.nodes.len() as u32
    }

    /// Applies one step. A rule mismatch is a rejected attempt, not an error:
    /// it counts as an action and leaves the proof otherwise untouched.
    pub fn apply_step(&mut self, step: &Step, timestamp_ms: u64) -> Result<StepOutcome, ProofError> {
        if self.completed {
            return Err(ProofError::AlreadyCompleted);
        }
        let rule = catalog().rule(&step.rule).ok_or_else(|| ProofError::UnknownRule(step.rule.clone()))?;
        let inputs = step
            .parents
            .iter()
            .map(|&r| self.resolve(r).ok_or(ProofError::DanglingRef(r)))
            .collect::<Result<Vec<_>, _>>()?;
        self.action_count += 1;
        match apply_rule(rule, &inputs, step.operand.as_ref()) {
            Ok(formula) => {
                self.completed = formula == self.target;
                self.nodes.push(DerivedNode {
                    formula,
                    rule_name: rule.name.to_string(),
                    parent_refs: step.parents.clone(),
                    operand: step.operand.clone(),
                    action_index: self.action_count,
                    timestamp_ms,
                });
                Ok(StepOutcome::Accepted { node: self.nodes.len() - 1 })
            }
            Err(e) => {
                self.rejected_attempts += 1;
                Ok(StepOutcome::Rejected(e))
            }
        }
    }

    /// One-way FC → BC switch. Derived nodes are kept: the premise set only grows.
    pub fn switch_strategy(&mut self, elapsed_s: f64) -> Result<(), ProofError> {
        if self.completed {
            return Err(ProofError::AlreadyCompleted);
        }
        if self.mode == Mode::BC {
            return Err(ProofError::AlreadyBackward);
        }
        self.action_count += 1;
        self.mode = Mode::BC;
        self.target = Formula::Bottom;
        self.switch_record = Some(SwitchRecord { action_index: self.action_count, elapsed_s });
        Ok(())
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn verify(&self) -> Result<(), String> {
        match self.mode {
            Mode::FC if self.target != self.conclusion => return Err("FC target differs from conclusion".into()),
            Mode::BC if self.target != Formula::Bottom => return Err("BC target is not bottom".into()),
            _ => {}
        }
        let premises = self.premises();
        for (i, node) in self.nodes.iter().enumerate() {
            let mut inputs = Vec::new();
            for &r in &node.parent_refs {
                let f = match r {
                    PremiseRef::Given(g) => premises.get(g),
                    PremiseRef::Node(n) if n < i => self.nodes.get(n).map(|n| &n.formula),
                    PremiseRef::Node(_) => None,
                };
                inputs.push(f.cloned().ok_or_else(|| format!("node {i} references {r} out of order"))?);
            }
            let rule = catalog()
                .rule(&node.rule_name)
                .ok_or_else(|| format!("node {i} uses unknown rule {}", node.rule_name))?;
            match apply_rule(rule, &inputs, node.operand.as_ref()) {
                Ok(f) if f == node.formula => {}
                _ => return Err(format!("node {i} is not reproduced by {}", node.rule_name)),
            }
        }
        if self.completed != self.check_completion() {
            return Err("completed flag disagrees with node list".into());
        }
        let expected = self.nodes.len() as u32 + self.rejected_attempts + u32::from(self.switch_record.is_some());
        if self.action_count != expected {
            return Err(format!("action_count {} != {expected}", self.action_count));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::entails;

    fn f(s: &str) -> Formula {
        Formula::parse(s).unwrap()
    }

    fn state(givens: &[&str], conclusion: &str) -> ProofState {
        ProofState::new("t", givens.iter().map(|g| f(g)).collect(), f(conclusion))
    }

    fn g(i: usize) -> PremiseRef {
        PremiseRef::Given(i)
    }

    fn n(i: usize) -> PremiseRef {
        PremiseRef::Node(i)
    }

    #[test]
    fn fresh_state() {
        let s = state(&["p -> q", "p"], "q");
        assert_eq!(s.mode, Mode::FC);
        assert_eq!(s.target, f("q"));
        assert!(s.switch_record.is_none());
        assert!(!s.completed);
        assert!(!s.check_completion());
        assert_eq!(s.action_count, 0);
    }

    #[test]
    fn one_step_forward_proof() {
        let mut s = state(&["p -> q", "p"], "q");
        let out = s.apply_step(&Step::new("MP", vec![g(0), g(1)]), 10).unwrap();
        assert_eq!(out, StepOutcome::Accepted { node: 0 });
        assert!(s.completed && s.check_completion());
        assert_eq!(s.nodes[0].formula, f("q"));
        assert_eq!(s.nodes[0].action_index, 1);
        assert_eq!(s.apply_step(&Step::new("MP", vec![g(0), g(1)]), 20), Err(ProofError::AlreadyCompleted));
        assert_eq!(s.switch_strategy(3.0), Err(ProofError::AlreadyCompleted));
        s.verify().unwrap();
    }

    #[test]
    fn mismatch_is_a_rejected_attempt() {
        let mut s = state(&["p -> q", "~q"], "~p");
        let out = s.apply_step(&Step::new("MP", vec![g(0), g(1)]), 10).unwrap();
        assert!(matches!(out, StepOutcome::Rejected(RuleError::PatternMismatch { .. })));
        assert_eq!(s.rejected_attempts, 1);
        assert_eq!(s.action_count, 1);
        assert!(s.nodes.is_empty());
        s.verify().unwrap();
    }

    #[test]
    fn hard_errors_do_not_count_as_actions() {
        let mut s = state(&["p -> q", "p"], "q");
        assert_eq!(s.apply_step(&Step::new("XYZ", vec![g(0)]), 0), Err(ProofError::UnknownRule("XYZ".into())));
        assert_eq!(s.apply_step(&Step::new("MP", vec![g(0), n(3)]), 0), Err(ProofError::DanglingRef(n(3))));
        // The negated conclusion is only addressable after a switch.
        assert_eq!(s.apply_step(&Step::new("DN_E", vec![g(2)]), 0), Err(ProofError::DanglingRef(g(2))));
        assert_eq!(s.action_count, 0);
    }

    #[test]
    fn backward_chaining_replay() {
        let mut s = state(&["p -> q", "~q"], "~p");
        s.switch_strategy(12.5).unwrap();
        assert_eq!(s.premises(), vec![f("p -> q"), f("~q"), f("~~p")]);
        assert_eq!(s.target, Formula::Bottom);
        assert_eq!(s.switch_record, Some(SwitchRecord { action_index: 1, elapsed_s: 12.5 }));
        let steps =
            [Step::new("DN_E", vec![g(2)]), Step::new("MP", vec![g(0), n(0)]), Step::new("CONTRA", vec![n(1), g(1)])];
        for (i, step) in steps.iter().enumerate() {
            assert!(!s.completed);
            s.apply_step(step, 100 * i as u64).unwrap();
            let node = s.nodes.last().unwrap();
            assert!(entails(&s.premises(), &node.formula).unwrap());
        }
        assert_eq!(s.nodes[0].formula, f("p"));
        assert_eq!(s.nodes[1].formula, f("q"));
        assert!(s.completed);
        assert_eq!(s.action_count, 4);
        s.verify().unwrap();
        let mut without_neg = s.premises();
        without_neg.pop();
        assert!(entails(&without_neg, &s.conclusion).unwrap());
    }

    #[test]
    fn switch_retains_nodes_and_is_one_way() {
        let mut s = state(&["p /\\ q", "q -> r", "r -> s"], "s");
        s.apply_step(&Step::new("SIMP_L", vec![g(0)]), 1).unwrap();
        s.apply_step(&Step::new("SIMP_R", vec![g(0)]), 2).unwrap();
        s.apply_step(&Step::new("MP", vec![g(1), n(1)]), 3).unwrap();
        let before = s.nodes.clone();
        s.switch_strategy(40.0).unwrap();
        assert_eq!(s.nodes, before);
        s.verify().unwrap();
        assert_eq!(s.switch_strategy(41.0), Err(ProofError::AlreadyBackward));
        assert_eq!(s.action_count, 4);
    }

    #[test]
    fn premise_ref_text() {
        assert_eq!("g3".parse::<PremiseRef>(), Ok(g(3)));
        assert_eq!("n12".parse::<PremiseRef>(), Ok(n(12)));
        assert!("x1".parse::<PremiseRef>().is_err());
        assert!("g".parse::<PremiseRef>().is_err());
        assert!("".parse::<PremiseRef>().is_err());
        assert_eq!(n(7).to_string(), "n7");
    }
}
