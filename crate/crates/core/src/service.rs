//! Session engine behind the HTTP API and the simulator.
//!
//! Every mutation of a session goes through its own mutex and appends
//! events to the session log; reports are rebuilt from that log.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{analytics_report, AnalyticsError, AnalyticsReport};
use crate::classifier::{extract_features, pretest_events, rule_baseline, ClassifierError, Forest, GroupLabel};
use crate::curriculum::{Condition, CurriculumConfig, Phase, Problem};
use crate::events::{replay, EventRecord, EventType, Payload, ReplayError, SessionReplay};
use crate::formula::Formula;
use crate::policy::{should_prompt, we_placement, PolicyError, PromptPolicy};
use crate::proof::{DerivedNode, Mode, ProofError, ProofState, Step, StepOutcome};
use crate::report::{session_report, ReportError, SessionReport};
use crate::scoring::{ScoreWeights, ScoringError};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn advance_ms(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn set_ms(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Receives each record as it is appended.
pub trait EventSink: Send + Sync {
    fn append(&self, record: &EventRecord) -> std::io::Result<()>;
}

/// One `<session_id>.jsonl` file per session; each record is a single write.
pub struct JsonlDirSink {
    pub dir: PathBuf,
}

impl EventSink for JsonlDirSink {
    fn append(&self, record: &EventRecord) -> std::io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        line.push('\n');
        let path = self.dir.join(format!("{}.jsonl", record.session_id));
        OpenOptions::new().create(true).append(true).open(path)?.write_all(line.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TutorConfig {
    /// Probability that a Rote or Dabbler student lands in Experimental.
    pub experimental_share: f64,
    pub prompt: PromptPolicy,
    pub weights: ScoreWeights,
    pub seed: u64,
}

impl Default for TutorConfig {
    fn default() -> Self {
        TutorConfig {
            experimental_share: 0.6,
            prompt: PromptPolicy::default(),
            weights: ScoreWeights::default(),
            seed: 0,
        }
    }
}

impl TutorConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if !(0.0..=1.0).contains(&self.experimental_share) {
            return Err(ServiceError::Config(format!("experimental_share {} outside [0, 1]", self.experimental_share)));
        }
        self.prompt.validate()?;
        self.weights.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(())
    }
}

/// How pretest behavior becomes a group label.
#[derive(Debug, Clone, Default)]
pub enum Assigner {
    #[default]
    Baseline,
    Forest(Box<Forest>),
}

impl Assigner {
    pub fn classify(&self, log: &[EventRecord]) -> Result<GroupLabel, ClassifierError> {
        let fv = extract_features(&pretest_events(log))?;
        Ok(match self {
            Assigner::Baseline => rule_baseline(&fv),
            Assigner::Forest(f) => f.predict(&fv).label,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SessionPhase {
    Pretest,
    Training,
    Posttest,
    Done,
}

impl From<Phase> for SessionPhase {
    fn from(p: Phase) -> Self {
        match p {
            Phase::Pretest => SessionPhase::Pretest,
            Phase::Training => SessionPhase::Training,
            Phase::Posttest => SessionPhase::Posttest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("no session {0}")]
    UnknownSession(String),
    #[error("student {0} already has an active session")]
    DuplicateSession(String),
    #[error("session id {0} is taken")]
    DuplicateSessionId(String),
    #[error(transparent)]
    Proof(#[from] ProofError),
    #[error("worked example playback is active")]
    WePlaybackActive,
    #[error("the session is finished")]
    SessionDone,
    #[error("the current problem is not completed")]
    ProblemNotCompleted,
    #[error("condition can only be assigned once the pretest is complete")]
    PrematureAssignment,
    #[error("condition already assigned")]
    AlreadyAssigned,
    #[error("session {0} is not finished")]
    IncompleteSession(String),
    #[error("classification failed: {0}")]
    Classification(#[from] ClassifierError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Report(ReportError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("event sink: {0}")]
    Sink(String),
}

impl From<PolicyError> for ServiceError {
    fn from(e: PolicyError) -> Self {
        ServiceError::Config(e.to_string())
    }
}

impl From<ReportError> for ServiceError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Incomplete(id) => ServiceError::IncompleteSession(id),
            other => ServiceError::Report(other),
        }
    }
}

impl ServiceError {
    /// Stable machine-readable code for API clients.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown-session",
            ServiceError::DuplicateSession(_) | ServiceError::DuplicateSessionId(_) => "duplicate-session",
            ServiceError::Proof(e) => e.code(),
            ServiceError::WePlaybackActive => "we-playback-active",
            ServiceError::SessionDone => "session-done",
            ServiceError::ProblemNotCompleted => "problem-not-completed",
            ServiceError::PrematureAssignment => "premature-assignment",
            ServiceError::AlreadyAssigned => "already-assigned",
            ServiceError::IncompleteSession(_) => "incomplete-session",
            ServiceError::Classification(_) => "classification-failed",
            ServiceError::Replay(_) => "replay-failed",
            ServiceError::Report(ReportError::Scoring(ScoringError::EmptySection)) => "empty-section",
            ServiceError::Report(_) => "report-failed",
            ServiceError::Analytics(_) => "analytics-failed",
            ServiceError::Config(_) => "bad-config",
            ServiceError::Sink(_) => "event-sink-failed",
        }
    }
}

/// Selective students keep the original tutor; the others get a seeded coin flip.
pub fn assign_condition<R: Rng + ?Sized>(
    pretest_complete: bool,
    current: Condition,
    label: GroupLabel,
    experimental_share: f64,
    rng: &mut R,
) -> Result<Condition, ServiceError> {
    if !pretest_complete {
        return Err(ServiceError::PrematureAssignment);
    }
    if current != Condition::Unassigned {
        return Err(ServiceError::AlreadyAssigned);
    }
    Ok(match label {
        GroupLabel::Selective => Condition::SelectiveOriginal,
        _ if rng.random::<f64>() < experimental_share => Condition::Experimental,
        _ => Condition::Control,
    })
}

#[derive(Debug, Clone, Default)]
pub struct SessionOptions {
    pub session_id: Option<String>,
    pub seed: Option<u64>,
    /// Skip classification and use this group and condition.
    pub forced: Option<(GroupLabel, Condition)>,
}

#[derive(Debug)]
pub struct Session {
    pub session_id: String,
    pub student_id: String,
    pub phase: SessionPhase,
    pub cursor: usize,
    pub condition: Condition,
    pub group: Option<GroupLabel>,
    pub proof: ProofState,
    pub sampled_wait_s: Option<u32>,
    pub prompt_shown: bool,
    pub problem_started_ms: u64,
    pub started_at: u64,
    /// Steps revealed so far when the current problem is a worked example.
    pub we_revealed: Option<usize>,
    pub finished_states: Vec<ProofState>,
    log: Vec<EventRecord>,
    rng: ChaCha8Rng,
    forced: Option<(GroupLabel, Condition)>,
}

impl Session {
    pub fn log(&self) -> &[EventRecord] {
        &self.log
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkedExampleView {
    pub revealed: usize,
    pub total: usize,
    pub commentary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemView {
    pub problem_id: String,
    pub phase: Phase,
    pub level: Option<u8>,
    pub ordinal: u8,
    pub givens: Vec<Formula>,
    pub conclusion: Formula,
    pub mode: Mode,
    pub premises: Vec<Formula>,
    pub target: Formula,
    pub nodes: Vec<DerivedNode>,
    pub action_count: u32,
    pub completed: bool,
    pub switch_enabled: bool,
    pub worked_example: Option<WorkedExampleView>,
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub student_id: String,
    pub phase: SessionPhase,
    pub condition: Condition,
    pub cursor: usize,
    pub total_problems: usize,
    pub last_seq: u64,
    pub problem: Option<ProblemView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum StepResult {
    Accepted { node: usize, formula: Formula },
    Rejected { code: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub result: StepResult,
    pub session: SessionView,
}

pub struct Tutor {
    curriculum: Arc<CurriculumConfig>,
    sequence: Vec<Problem>,
    config: TutorConfig,
    clock: Arc<dyn Clock>,
    assigner: Assigner,
    sink: Option<Box<dyn EventSink>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    active_students: Mutex<HashMap<String, String>>,
    counter: AtomicU64,
}

impl Tutor {
    pub fn new(
        curriculum: Arc<CurriculumConfig>,
        config: TutorConfig,
        clock: Arc<dyn Clock>,
        assigner: Assigner,
    ) -> Result<Tutor, ServiceError> {
        config.validate()?;
        let sequence = curriculum.sequence().into_iter().cloned().collect();
        Ok(Tutor {
            curriculum,
            sequence,
            config,
            clock,
            assigner,
            sink: None,
            sessions: RwLock::new(HashMap::new()),
            active_students: Mutex::new(HashMap::new()),
            counter: AtomicU64::new(0),
        })
    }

    pub fn with_sink(mut self, sink: Box<dyn EventSink>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn curriculum(&self) -> &CurriculumConfig {
        &self.curriculum
    }

    pub fn config(&self) -> &TutorConfig {
        &self.config
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn with_session<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let handle = self.session(id)?;
        let mut s = handle.lock().expect("session poisoned");
        f(&mut s)
    }

    fn emit(&self, s: &mut Session, event_type: EventType, payload: Payload) -> Result<(), ServiceError> {
        let problem_id = match event_type {
            EventType::SessionStarted | EventType::PhaseAdvanced | EventType::SessionCompleted => None,
            _ => Some(s.proof.problem_id.clone()),
        };
        let record = EventRecord {
            seq: s.log.last().map_or(0, |r| r.seq + 1),
            timestamp_ms: self.clock.now_ms(),
            session_id: s.session_id.clone(),
            problem_id,
            event_type,
            payload,
        };
        if let Some(sink) = &self.sink {
            sink.append(&record).map_err(|e| ServiceError::Sink(e.to_string()))?;
        }
        s.log.push(record);
        Ok(())
    }

    fn current(&self, s: &Session) -> &Problem {
        &self.sequence[s.cursor]
    }

    fn plays_worked_example(&self, condition: Condition, problem: &Problem) -> bool {
        problem.phase == Phase::Training
            && problem.worked_example.is_some()
            && self.curriculum.variant(condition).we_enabled
            && problem.level.is_some_and(|l| we_placement(condition).contains(&(l, problem.ordinal)))
    }

    fn start_problem(&self, s: &mut Session) -> Result<(), ServiceError> {
        let problem = self.current(s).clone();
        let we = self.plays_worked_example(s.condition, &problem);
        let prompts = problem.phase == Phase::Training
            && !we
            && problem.proper_for_bc
            && self.curriculum.variant(s.condition).prompts_enabled;
        s.proof = if we { ProofState::start_worked_example(&problem) } else { ProofState::start_problem(&problem) };
        s.we_revealed = we.then_some(0);
        s.sampled_wait_s = prompts.then(|| self.config.prompt.sample_wait(&mut s.rng));
        s.prompt_shown = false;
        s.problem_started_ms = self.clock.now_ms();
        let payload = Payload {
            phase: Some(problem.phase),
            worked_example: we.then_some(true),
            sampled_wait_s: s.sampled_wait_s,
            ..Payload::default()
        };
        self.emit(s, EventType::ProblemStarted, payload)
    }

    fn elapsed_s(&self, s: &Session) -> f64 {
        self.clock.now_ms().saturating_sub(s.problem_started_ms) as f64 / 1000.0
    }

    /// Shows the switch prompt once its wait has elapsed.
    fn check_prompt(&self, s: &mut Session) -> Result<(), ServiceError> {
        let Some(wait) = s.sampled_wait_s else { return Ok(()) };
        if s.phase != SessionPhase::Training || s.we_revealed.is_some() {
            return Ok(());
        }
        let elapsed = self.elapsed_s(s);
        let decision = should_prompt(&s.proof, elapsed, s.condition, self.current(s), wait, s.prompt_shown);
        if decision.show {
            s.prompt_shown = true;
            let payload = Payload {
                elapsed_s: Some(elapsed),
                sampled_wait_s: Some(wait),
                text: Some(self.config.prompt.prompt_text.clone()),
                ..Payload::default()
            };
            self.emit(s, EventType::PromptShown, payload)?;
        }
        Ok(())
    }

    fn view(&self, s: &Session) -> SessionView {
        let problem = (s.phase != SessionPhase::Done).then(|| {
            let p = self.current(s);
            let worked_example = s.we_revealed.map(|n| {
                let script = p.worked_example.as_ref().expect("playback implies a script");
                WorkedExampleView {
                    revealed: n,
                    total: script.steps.len(),
                    commentary: script.steps[..n].iter().map(|w| w.commentary.clone()).collect(),
                }
            });
            ProblemView {
                problem_id: p.id.clone(),
                phase: p.phase,
                level: p.level,
                ordinal: p.ordinal,
                givens: s.proof.givens.clone(),
                conclusion: s.proof.conclusion.clone(),
                mode: s.proof.mode,
                premises: s.proof.premises(),
                target: s.proof.target.clone(),
                nodes: s.proof.nodes.clone(),
                action_count: s.proof.action_count,
                completed: s.proof.completed,
                switch_enabled: s.proof.mode == Mode::FC && !s.proof.completed && s.we_revealed.is_none(),
                worked_example,
                prompt: s.prompt_shown.then(|| self.config.prompt.prompt_text.clone()),
            }
        });
        SessionView {
            session_id: s.session_id.clone(),
            student_id: s.student_id.clone(),
            phase: s.phase,
            condition: s.condition,
            cursor: s.cursor,
            total_problems: self.sequence.len(),
            last_seq: s.log.last().map_or(0, |r| r.seq),
            problem,
        }
    }

    pub fn create_session(&self, student_id: &str, options: SessionOptions) -> Result<SessionView, ServiceError> {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let session_id = options.session_id.clone().unwrap_or_else(|| format!("s{n:06}"));
        {
            let mut active = self.active_students.lock().expect("student table poisoned");
            if active.contains_key(student_id) {
                return Err(ServiceError::DuplicateSession(student_id.to_string()));
            }
            if self.sessions.read().expect("session table poisoned").contains_key(&session_id) {
                return Err(ServiceError::DuplicateSessionId(session_id));
            }
            active.insert(student_id.to_string(), session_id.clone());
        }
        let first = &self.sequence[0];
        let now = self.clock.now_ms();
        let mut s = Session {
            session_id: session_id.clone(),
            student_id: student_id.to_string(),
            phase: SessionPhase::Pretest,
            cursor: 0,
            condition: Condition::Unassigned,
            group: None,
            proof: ProofState::start_problem(first),
            sampled_wait_s: None,
            prompt_shown: false,
            problem_started_ms: now,
            started_at: now,
            we_revealed: None,
            finished_states: Vec::new(),
            log: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(options.seed.unwrap_or(self.config.seed.wrapping_add(n))),
            forced: options.forced,
        };
        let payload = Payload { student_id: Some(student_id.to_string()), ..Payload::default() };
        self.emit(&mut s, EventType::SessionStarted, payload)?;
        self.start_problem(&mut s)?;
        let view = self.view(&s);
        self.sessions.write().expect("session table poisoned").insert(session_id, Arc::new(Mutex::new(s)));
        Ok(view)
    }

    pub fn snapshot(&self, id: &str) -> Result<SessionView, ServiceError> {
        self.with_session(id, |s| Ok(self.view(s)))
    }

    pub fn submit_step(&self, id: &str, step: &Step) -> Result<StepResponse, ServiceError> {
        self.with_session(id, |s| {
            if s.phase == SessionPhase::Done {
                return Err(ServiceError::SessionDone);
            }
            if s.we_revealed.is_some() {
                return Err(ServiceError::WePlaybackActive);
            }
            self.check_prompt(s)?;
            let outcome = s.proof.apply_step(step, self.clock.now_ms())?;
            let action_index = Some(s.proof.action_count);
            let result = match outcome {
                StepOutcome::Accepted { node } => {
                    let formula = s.proof.nodes[node].formula.clone();
                    let payload = Payload { formula: Some(formula.clone()), action_index, ..Payload::step(step) };
                    self.emit(s, EventType::StepApplied, payload)?;
                    if s.proof.completed {
                        self.complete_problem(s)?;
                    }
                    StepResult::Accepted { node, formula }
                }
                StepOutcome::Rejected(e) => {
                    let code = e.code().to_string();
                    let payload = Payload { action_index, reason: Some(code.clone()), ..Payload::step(step) };
                    self.emit(s, EventType::StepRejected, payload)?;
                    StepResult::Rejected { code, message: e.to_string() }
                }
            };
            Ok(StepResponse { result, session: self.view(s) })
        })
    }

    fn complete_problem(&self, s: &mut Session) -> Result<(), ServiceError> {
        let payload = Payload { elapsed_s: Some(self.elapsed_s(s)), ..Payload::default() };
        self.emit(s, EventType::ProblemCompleted, payload)?;
        s.finished_states.push(s.proof.clone());
        Ok(())
    }

    pub fn switch_strategy(&self, id: &str) -> Result<SessionView, ServiceError> {
        self.with_session(id, |s| {
            if s.phase == SessionPhase::Done {
                return Err(ServiceError::SessionDone);
            }
            if s.we_revealed.is_some() {
                return Err(ServiceError::WePlaybackActive);
            }
            self.check_prompt(s)?;
            let elapsed = self.elapsed_s(s);
            s.proof.switch_strategy(elapsed)?;
            let payload =
                Payload { action_index: Some(s.proof.action_count), elapsed_s: Some(elapsed), ..Payload::default() };
            self.emit(s, EventType::StrategySwitched, payload)?;
            Ok(self.view(s))
        })
    }

    /// Reveals the next worked-example step, or moves on from a completed problem.
    pub fn advance(&self, id: &str) -> Result<SessionView, ServiceError> {
        self.with_session(id, |s| {
            if s.phase == SessionPhase::Done {
                return Err(ServiceError::SessionDone);
            }
            if let (Some(n), false) = (s.we_revealed, s.proof.completed) {
                let problem = self.current(s).clone();
                let ws = &problem.worked_example.as_ref().expect("playback implies a script").steps[n];
                let step = ws.step();
                match s.proof.apply_step(&step, self.clock.now_ms())? {
                    StepOutcome::Accepted { node } => {
                        let payload = Payload {
                            formula: Some(s.proof.nodes[node].formula.clone()),
                            action_index: Some(s.proof.action_count),
                            ..Payload::step(&step)
                        };
                        s.we_revealed = Some(n + 1);
                        self.emit(s, EventType::WeStepRevealed, payload)?;
                        if s.proof.completed {
                            self.complete_problem(s)?;
                        }
                    }
                    StepOutcome::Rejected(e) => unreachable!("validated worked example rejected: {e}"),
                }
                return Ok(self.view(s));
            }
            self.check_prompt(s)?;
            if !s.proof.completed {
                return Err(ServiceError::ProblemNotCompleted);
            }
            self.next_problem(s)?;
            Ok(self.view(s))
        })
    }

    fn next_problem(&self, s: &mut Session) -> Result<(), ServiceError> {
        let from = self.current(s).phase;
        if s.cursor + 1 == self.sequence.len() {
            s.phase = SessionPhase::Done;
            self.emit(s, EventType::SessionCompleted, Payload::default())?;
            self.active_students.lock().expect("student table poisoned").remove(&s.student_id);
            return Ok(());
        }
        let to = self.sequence[s.cursor + 1].phase;
        if to != from {
            let mut payload = Payload { phase: Some(to), ..Payload::default() };
            if to == Phase::Training {
                let (group, condition) = match s.forced {
                    Some(forced) => forced,
                    None => {
                        let group = self.assigner.classify(&s.log)?;
                        let share = self.config.experimental_share;
                        (group, assign_condition(true, s.condition, group, share, &mut s.rng)?)
                    }
                };
                s.group = Some(group);
                s.condition = condition;
                payload.condition = Some(condition);
                payload.group = Some(group);
            }
            self.emit(s, EventType::PhaseAdvanced, payload)?;
            s.phase = to.into();
        }
        s.cursor += 1;
        self.start_problem(s)
    }

    /// Events after `since` (all events when `None`). Also serves as the
    /// poll tick that may surface a due prompt.
    pub fn events(&self, id: &str, since: Option<u64>) -> Result<Vec<EventRecord>, ServiceError> {
        self.with_session(id, |s| {
            if s.phase != SessionPhase::Done {
                self.check_prompt(s)?;
            }
            Ok(s.log.iter().filter(|r| since.is_none_or(|n| r.seq > n)).cloned().collect())
        })
    }

    pub fn log(&self, id: &str) -> Result<Vec<EventRecord>, ServiceError> {
        self.with_session(id, |s| Ok(s.log.clone()))
    }

    /// Proof states of completed problems, as held in memory.
    pub fn finished_states(&self, id: &str) -> Result<Vec<ProofState>, ServiceError> {
        self.with_session(id, |s| Ok(s.finished_states.clone()))
    }

    pub fn report(&self, id: &str) -> Result<SessionReport, ServiceError> {
        let log = self.with_session(id, |s| {
            if s.phase != SessionPhase::Done {
                return Err(ServiceError::IncompleteSession(id.to_string()));
            }
            Ok(s.log.clone())
        })?;
        let replayed = replay(&log, &self.curriculum)?;
        Ok(session_report(&replayed, &self.curriculum, &self.config.weights)?)
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session table poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Analytics over every session that has assigned a condition.
    pub fn analytics(&self, phase: Phase) -> Result<AnalyticsReport, ServiceError> {
        let mut replays: Vec<SessionReplay> = Vec::new();
        let mut reports = Vec::new();
        for id in self.session_ids() {
            let log = self.log(&id)?;
            let r = replay(&log, &self.curriculum)?;
            if r.group.is_none() {
                continue;
            }
            if r.finished {
                reports.push(session_report(&r, &self.curriculum, &self.config.weights)?);
            }
            replays.push(r);
        }
        Ok(analytics_report(&replays, &reports, None, phase)?)
    }
}
