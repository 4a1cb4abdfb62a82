//! Simulated students driven through the real session engine.
//!
//! A simulated student picks correct steps from the reference prover,
//! corrupts some of them, and decides whether and when to switch to BC
//! according to its policy.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{analytics_report, default_label, AnalyticsError, AnalyticsReport, EARLY_SWITCH_THRESHOLD};
use crate::classifier::GroupLabel;
use crate::curriculum::{solve, Condition, CurriculumConfig, Phase, Problem};
use crate::events::{replay, EventRecord, EventType, ReplayError, SessionReplay};
use crate::proof::{Mode, PremiseRef, ProofState, Step};
use crate::prover::{Proof, MAX_DEPTH};
use crate::report::{session_report, ReportError, SessionReport};
use crate::rules::{apply_rule, catalog};
use crate::service::{
    Assigner, ManualClock, ServiceError, SessionOptions, SessionPhase, SessionView, Tutor, TutorConfig,
};

/// Success probability of the geometric delay before an early switch.
pub const EARLY_TIMING_P: f64 = 0.35;
/// Success probability of the geometric delay past the early window.
pub const LATE_TIMING_P: f64 = 0.1;
/// Safety cap on actions in one problem.
pub const MAX_ACTIONS_PER_PROBLEM: u32 = 400;
const LATENCY_SHAPE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Timing {
    /// Switch at action `1 + Geometric`, capped at the early-switch threshold.
    Early,
    /// Switch at action `threshold + 1 + Geometric`.
    Late,
}

impl Timing {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> u32 {
        match self {
            Timing::Early => {
                let g = Geometric::new(EARLY_TIMING_P).expect("valid p").sample(rng);
                (1 + g).min(u64::from(EARLY_SWITCH_THRESHOLD)) as u32
            }
            Timing::Late => {
                let g = Geometric::new(LATE_TIMING_P).expect("valid p").sample(rng).min(1_000);
                EARLY_SWITCH_THRESHOLD + 1 + g as u32
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentPolicy {
    pub name: String,
    /// The metacognitive group this policy stands for.
    pub group: GroupLabel,
    pub p_switch_proper: f64,
    pub p_switch_improper: f64,
    pub switch_timing: Timing,
    pub prompt_compliance: f64,
    /// Mean seconds per action.
    pub step_latency_s: f64,
    pub error_rate: f64,
    /// Flounder until the sampled switch point even when not switching.
    #[serde(default)]
    pub dither: bool,
    /// Policy used from training onward in the Experimental condition.
    #[serde(default)]
    pub after_intervention: Option<String>,
}

impl StudentPolicy {
    pub fn validate(&self) -> Result<(), SimError> {
        let probs = [self.p_switch_proper, self.p_switch_improper, self.prompt_compliance, self.error_rate];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(SimError::BadPolicy(format!("{}: probabilities must lie in [0, 1]", self.name)));
        }
        if !(self.step_latency_s > 0.0) {
            return Err(SimError::BadPolicy(format!("{}: latency must be positive", self.name)));
        }
        Ok(())
    }

    pub fn rote() -> Self {
        StudentPolicy {
            name: "Rote".into(),
            group: GroupLabel::Rote,
            p_switch_proper: 0.0,
            p_switch_improper: 0.0,
            switch_timing: Timing::Early,
            prompt_compliance: 0.0,
            step_latency_s: 12.0,
            error_rate: 0.15,
            dither: false,
            after_intervention: Some("RoteExpPost".into()),
        }
    }

    pub fn dabbler() -> Self {
        StudentPolicy {
            name: "Dabbler".into(),
            group: GroupLabel::Dabbler,
            p_switch_proper: 0.5,
            p_switch_improper: 0.5,
            switch_timing: Timing::Late,
            prompt_compliance: 0.3,
            step_latency_s: 8.0,
            error_rate: 0.3,
            dither: true,
            after_intervention: None,
        }
    }

    pub fn selective() -> Self {
        StudentPolicy {
            name: "Selective".into(),
            group: GroupLabel::Selective,
            p_switch_proper: 0.9,
            p_switch_improper: 0.05,
            switch_timing: Timing::Early,
            prompt_compliance: 0.0,
            step_latency_s: 15.0,
            error_rate: 0.08,
            dither: false,
            after_intervention: None,
        }
    }

    /// A Rote student after the worked examples and prompts.
    pub fn rote_exp_post() -> Self {
        StudentPolicy {
            name: "RoteExpPost".into(),
            group: GroupLabel::Rote,
            p_switch_proper: 0.8,
            p_switch_improper: 0.05,
            switch_timing: Timing::Early,
            prompt_compliance: 0.9,
            step_latency_s: 12.0,
            error_rate: 0.15,
            dither: false,
            after_intervention: None,
        }
    }

    pub fn presets() -> BTreeMap<String, StudentPolicy> {
        [Self::rote(), Self::dabbler(), Self::selective(), Self::rote_exp_post()]
            .into_iter()
            .map(|p| (p.name.clone(), p))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("policy stuck on {problem}: {reason}")]
    PolicyStuck { problem: String, reason: String },
    #[error("unknown policy {0}")]
    UnknownPolicy(String),
    #[error("invalid policy: {0}")]
    BadPolicy(String),
    #[error("invalid population: {0}")]
    BadPopulation(String),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentRule {
    /// Each cohort's condition is fixed by the population file; the group is the policy's.
    #[default]
    Forced,
    /// The tutor classifies the pretest and flips the condition coin.
    Classified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cohort {
    pub policy: String,
    pub count: usize,
    #[serde(default)]
    pub condition: Option<Condition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub seed: u64,
    #[serde(default)]
    pub assignment: AssignmentRule,
    pub cohorts: Vec<Cohort>,
    /// Extra or overriding policies, keyed by `name`.
    #[serde(default)]
    pub policies: Vec<StudentPolicy>,
}

impl PopulationSpec {
    pub fn from_toml(text: &str) -> Result<PopulationSpec, SimError> {
        toml::from_str(text).map_err(|e| SimError::BadPopulation(e.to_string()))
    }

    /// The 102 Rote/Dabbler students of the original condition split plus
    /// 26 Selective students.
    pub fn paper_population(seed: u64) -> PopulationSpec {
        let cohort =
            |policy: &str, count, condition| Cohort { policy: policy.into(), count, condition: Some(condition) };
        PopulationSpec {
            seed,
            assignment: AssignmentRule::Forced,
            cohorts: vec![
                cohort("Rote", 35, Condition::Experimental),
                cohort("Dabbler", 26, Condition::Experimental),
                cohort("Rote", 25, Condition::Control),
                cohort("Dabbler", 16, Condition::Control),
                cohort("Selective", 26, Condition::SelectiveOriginal),
            ],
            policies: Vec::new(),
        }
    }

    pub fn policies(&self) -> BTreeMap<String, StudentPolicy> {
        let mut out = StudentPolicy::presets();
        for p in &self.policies {
            out.insert(p.name.clone(), p.clone());
        }
        out
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let policies = self.policies();
        for p in policies.values() {
            p.validate()?;
            if let Some(next) = &p.after_intervention {
                if !policies.contains_key(next) {
                    return Err(SimError::UnknownPolicy(next.clone()));
                }
            }
        }
        if self.cohorts.is_empty() {
            return Err(SimError::BadPopulation("no cohorts".into()));
        }
        for c in &self.cohorts {
            if c.count == 0 {
                return Err(SimError::BadPopulation(format!("cohort {} has count 0", c.policy)));
            }
            if !policies.contains_key(&c.policy) {
                return Err(SimError::UnknownPolicy(c.policy.clone()));
            }
            match (self.assignment, c.condition) {
                (AssignmentRule::Forced, None | Some(Condition::Unassigned)) => {
                    return Err(SimError::BadPopulation(format!("forced cohort {} needs a condition", c.policy)))
                }
                (AssignmentRule::Classified, Some(_)) => {
                    return Err(SimError::BadPopulation("classified cohorts take no condition".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Curriculum plus precomputed reference proofs for both modes.
pub struct SimContext {
    pub curriculum: Arc<CurriculumConfig>,
    pub config: TutorConfig,
    pub assigner: Assigner,
    proofs: HashMap<(String, Mode), Proof>,
}

impl SimContext {
    pub fn new(curriculum: Arc<CurriculumConfig>, config: TutorConfig, assigner: Assigner) -> Result<Self, SimError> {
        let mut proofs = HashMap::new();
        for p in &curriculum.problems {
            for mode in [Mode::FC, Mode::BC] {
                let proof = solve(p, mode, MAX_DEPTH).ok_or_else(|| SimError::PolicyStuck {
                    problem: p.id.clone(),
                    reason: format!("no {mode} proof within depth {MAX_DEPTH}"),
                })?;
                proofs.insert((p.id.clone(), mode), proof);
            }
        }
        Ok(SimContext { curriculum, config, assigner, proofs })
    }

    pub fn bundled() -> Self {
        SimContext::new(Arc::new(CurriculumConfig::bundled()), TutorConfig::default(), Assigner::Baseline)
            .expect("bundled corpus is solvable")
    }

    fn proof(&self, problem: &str, mode: Mode) -> &Proof {
        &self.proofs[&(problem.to_string(), mode)]
    }
}

enum Plan {
    Flounder { until: u32, switch: bool },
    Follow { mode: Mode, base: usize, next: usize },
}

struct Student<'a> {
    ctx: &'a SimContext,
    tutor: Tutor,
    clock: Arc<ManualClock>,
    id: String,
    rng: ChaCha8Rng,
    latency: Gamma<f64>,
    last_seq: u64,
}

impl Student<'_> {
    fn wait(&mut self) {
        let s: f64 = self.latency.sample(&mut self.rng);
        self.clock.advance_ms((s * 1000.0).round().max(500.0) as u64);
    }

    /// Polls the event stream; true when a prompt arrived.
    fn poll(&mut self) -> Result<bool, SimError> {
        let fresh = self.tutor.events(&self.id, Some(self.last_seq))?;
        if let Some(last) = fresh.last() {
            self.last_seq = last.seq;
        }
        Ok(fresh.iter().any(|e| e.event_type == EventType::PromptShown))
    }

    fn stuck(problem: &Problem, reason: impl Into<String>) -> SimError {
        SimError::PolicyStuck { problem: problem.id.clone(), reason: reason.into() }
    }

    /// A step that is valid but never derives the target, or else a rejected one.
    fn flounder_step(&mut self, view: &SessionView) -> Step {
        let p = view.problem.as_ref().expect("open problem");
        if self.rng.random_bool(0.5) {
            let i = self.rng.random_range(0..p.premises.len());
            let derived = crate::formula::Formula::not(crate::formula::Formula::not(p.premises[i].clone()));
            if derived != p.target {
                return Step::new("DN_I", vec![PremiseRef::Given(i)]);
            }
        }
        Step::new("MP", vec![PremiseRef::Given(0)])
    }

    /// A wrong-rule variant of `step`, rejected by the kernel.
    fn corrupt(&mut self, step: &Step, view: &SessionView) -> Step {
        let p = view.problem.as_ref().expect("open problem");
        let resolve = |r: &PremiseRef| match *r {
            PremiseRef::Given(i) => p.premises.get(i).cloned(),
            PremiseRef::Node(i) => p.nodes.get(i).map(|n| n.formula.clone()),
        };
        let inputs: Option<Vec<_>> = step.parents.iter().map(resolve).collect();
        let candidates: Vec<&'static str> = catalog()
            .rules()
            .filter(|r| r.name != step.rule && r.arity == step.parents.len() && r.parameter.is_none())
            .map(|r| r.name)
            .collect();
        if let (Some(inputs), false) = (inputs, candidates.is_empty()) {
            let name = candidates[self.rng.random_range(0..candidates.len())];
            let rule = catalog().rule(name).expect("listed rule");
            if apply_rule(rule, &inputs, None).is_err() {
                return Step::new(name, step.parents.clone());
            }
        }
        Step::new(step.rule.clone(), Vec::new())
    }

    fn remap(step: &Step, base: usize) -> Step {
        let parents = step
            .parents
            .iter()
            .map(|r| match *r {
                PremiseRef::Node(j) => PremiseRef::Node(base + j),
                g => g,
            })
            .collect();
        Step { rule: step.rule.clone(), parents, operand: step.operand.clone() }
    }

    fn play_worked_example(&mut self, problem: &Problem) -> Result<(), SimError> {
        loop {
            self.wait();
            let view = self.tutor.advance(&self.id)?;
            if view.problem.as_ref().is_none_or(|p| p.completed) {
                return Ok(());
            }
            if view.problem.as_ref().is_some_and(|p| p.action_count > MAX_ACTIONS_PER_PROBLEM) {
                return Err(Self::stuck(problem, "worked example never completes"));
            }
        }
    }

    fn solve_problem(&mut self, problem: &Problem, policy: &StudentPolicy) -> Result<(), SimError> {
        let p_switch = if problem.proper_for_bc { policy.p_switch_proper } else { policy.p_switch_improper };
        let switch = self.rng.random_bool(p_switch);
        let mut plan = if switch || policy.dither {
            Plan::Flounder { until: policy.switch_timing.sample(&mut self.rng), switch }
        } else {
            Plan::Follow { mode: Mode::FC, base: 0, next: 0 }
        };
        loop {
            self.wait();
            let prompted = self.poll()?;
            let view = self.tutor.snapshot(&self.id)?;
            let open = view.problem.as_ref().expect("open problem");
            if open.completed {
                return Ok(());
            }
            if open.action_count >= MAX_ACTIONS_PER_PROBLEM {
                return Err(Self::stuck(problem, "action cap reached"));
            }
            if prompted && open.mode == Mode::FC && self.rng.random_bool(policy.prompt_compliance) {
                self.tutor.switch_strategy(&self.id)?;
                plan = Plan::Follow { mode: Mode::BC, base: open.nodes.len(), next: 0 };
                continue;
            }
            match plan {
                Plan::Flounder { until, switch } if open.action_count + 1 >= until => {
                    if switch {
                        self.tutor.switch_strategy(&self.id)?;
                        plan = Plan::Follow { mode: Mode::BC, base: open.nodes.len(), next: 0 };
                    } else {
                        plan = Plan::Follow { mode: Mode::FC, base: open.nodes.len(), next: 0 };
                        self.follow(problem, policy, &mut plan, &view)?;
                    }
                }
                Plan::Flounder { .. } => {
                    let step = self.flounder_step(&view);
                    self.tutor.submit_step(&self.id, &step)?;
                }
                Plan::Follow { .. } => self.follow(problem, policy, &mut plan, &view)?,
            }
        }
    }

    fn follow(
        &mut self,
        problem: &Problem,
        policy: &StudentPolicy,
        plan: &mut Plan,
        view: &SessionView,
    ) -> Result<(), SimError> {
        let Plan::Follow { mode, base, next } = plan else { unreachable!("follow needs a follow plan") };
        let proof = self.ctx.proof(&problem.id, *mode);
        let reference = proof.steps.get(*next).ok_or_else(|| Self::stuck(problem, "reference proof exhausted"))?;
        let step = Self::remap(&reference.step, *base);
        let submit = if self.rng.random_bool(policy.error_rate) { self.corrupt(&step, view) } else { step };
        let was_correct = submit.rule == reference.step.rule && submit.parents.len() == reference.step.parents.len();
        let resp = self.tutor.submit_step(&self.id, &submit)?;
        match resp.result {
            crate::service::StepResult::Accepted { .. } if was_correct => *next += 1,
            crate::service::StepResult::Accepted { .. } => {
                return Err(Self::stuck(problem, "corrupted step was accepted"))
            }
            crate::service::StepResult::Rejected { .. } if was_correct => {
                return Err(Self::stuck(problem, format!("reference step {next} rejected")))
            }
            crate::service::StepResult::Rejected { .. } => {}
        }
        Ok(())
    }
}

/// Plays one full session and returns its event log.
///
/// `forced` fixes the group and condition; otherwise the tutor's assigner decides.
pub fn run_session(
    ctx: &SimContext,
    policies: &BTreeMap<String, StudentPolicy>,
    policy: &StudentPolicy,
    student_id: &str,
    forced: Option<(GroupLabel, Condition)>,
    seed: u64,
) -> Result<Vec<EventRecord>, SimError> {
    play(ctx, policies, policy, student_id, forced, seed, false).map(|(log, _)| log)
}

/// Like [`run_session`], also returning the tutor's live proof state for
/// every completed problem, in order.
pub fn run_session_with_states(
    ctx: &SimContext,
    policies: &BTreeMap<String, StudentPolicy>,
    policy: &StudentPolicy,
    student_id: &str,
    forced: Option<(GroupLabel, Condition)>,
    seed: u64,
) -> Result<(Vec<EventRecord>, Vec<ProofState>), SimError> {
    play(ctx, policies, policy, student_id, forced, seed, false)
}

/// Plays only the pretest; the log ends with the last pretest problem completed.
pub fn run_pretest(
    ctx: &SimContext,
    policy: &StudentPolicy,
    student_id: &str,
    seed: u64,
) -> Result<Vec<EventRecord>, SimError> {
    play(ctx, &StudentPolicy::presets(), policy, student_id, None, seed, true).map(|(log, _)| log)
}

fn play(
    ctx: &SimContext,
    policies: &BTreeMap<String, StudentPolicy>,
    policy: &StudentPolicy,
    student_id: &str,
    forced: Option<(GroupLabel, Condition)>,
    seed: u64,
    pretest_only: bool,
) -> Result<(Vec<EventRecord>, Vec<ProofState>), SimError> {
    policy.validate()?;
    let clock = Arc::new(ManualClock::new(0));
    let tutor = Tutor::new(ctx.curriculum.clone(), ctx.config.clone(), clock.clone(), ctx.assigner.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let options = SessionOptions { session_id: Some(student_id.to_string()), seed: Some(rng.random()), forced };
    tutor.create_session(student_id, options)?;
    let latency = Gamma::new(LATENCY_SHAPE, policy.step_latency_s / LATENCY_SHAPE).expect("positive latency");
    let mut student = Student { ctx, tutor, clock, id: student_id.to_string(), rng, latency, last_seq: 0 };
    let mut active = policy.clone();
    loop {
        let view = student.tutor.snapshot(student_id)?;
        if view.phase == SessionPhase::Done {
            break;
        }
        let open = view.problem.as_ref().expect("open problem");
        let problem = ctx.curriculum.problem(&open.problem_id).expect("served problem exists").clone();
        if problem.phase != Phase::Pretest && view.condition == Condition::Experimental {
            if let Some(next) = &policy.after_intervention {
                active = policies.get(next).cloned().ok_or_else(|| SimError::UnknownPolicy(next.clone()))?;
            }
        }
        if open.worked_example.is_some() {
            student.play_worked_example(&problem)?;
        } else {
            student.solve_problem(&problem, &active)?;
        }
        if pretest_only && view.cursor + 1 == ctx.curriculum.section(Phase::Pretest).len() {
            break;
        }
        student.wait();
        student.tutor.advance(student_id)?;
    }
    Ok((student.tutor.log(student_id)?, student.tutor.finished_states(student_id)?))
}

pub struct Experiment {
    pub logs: Vec<Vec<EventRecord>>,
    pub replays: Vec<SessionReplay>,
    pub reports: Vec<SessionReport>,
    /// Session id to the policy that generated it.
    pub policies: BTreeMap<String, String>,
    /// Session id to analytics group label.
    pub labels: BTreeMap<String, String>,
    pub training: AnalyticsReport,
    pub posttest: AnalyticsReport,
}

/// Runs every cohort, replays each log and builds the analytics reports.
pub fn run_experiment(spec: &PopulationSpec, ctx: &SimContext) -> Result<Experiment, SimError> {
    spec.validate()?;
    let policies = spec.policies();
    let mut seeds = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut jobs = Vec::new();
    for cohort in &spec.cohorts {
        let policy = &policies[&cohort.policy];
        for _ in 0..cohort.count {
            let student_id = format!("stu{:04}-{}", jobs.len(), policy.name);
            let forced = cohort.condition.map(|c| (policy.group, c));
            jobs.push((policy, student_id, forced, seeds.random::<u64>()));
        }
    }
    let mut out = Experiment {
        logs: Vec::new(),
        replays: Vec::new(),
        reports: Vec::new(),
        policies: BTreeMap::new(),
        labels: BTreeMap::new(),
        training: empty_report(Phase::Training),
        posttest: empty_report(Phase::Posttest),
    };
    for (policy, student_id, forced, seed) in jobs {
        let log = run_session(ctx, &policies, policy, &student_id, forced, seed)?;
        let r = replay(&log, &ctx.curriculum)?;
        out.reports.push(session_report(&r, &ctx.curriculum, &ctx.config.weights)?);
        out.policies.insert(student_id.clone(), policy.name.clone());
        if let Some(label) = default_label(&r) {
            out.labels.insert(student_id, label);
        }
        out.replays.push(r);
        out.logs.push(log);
    }
    out.training = analytics_report(&out.replays, &out.reports, Some(&out.labels), Phase::Training)?;
    out.posttest = analytics_report(&out.replays, &out.reports, Some(&out.labels), Phase::Posttest)?;
    Ok(out)
}

fn empty_report(phase: Phase) -> AnalyticsReport {
    analytics_report(&[], &[], None, phase).expect("empty input cannot fail")
}
