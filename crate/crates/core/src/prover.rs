//! Prover backends.
//!
//! A [`ProverBackend`] opens one [`SessionDriver`] per lemma. [`ProverSession`]
//! wraps a driver and enforces the session contract: failed tactics leave the
//! session untouched, completed sessions accept no further tactics, and dead
//! sessions reject everything.
//!
//! Two backends ship here: [`MockBackend`], a deterministic goal-transition
//! table used for tests and planted-proof experiments, and
//! [`SubprocessBackend`], which drives any prompt-based interactive prover
//! over stdin/stdout.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::normalize_whitespace;

/// The combined built-in automation command used as the baseline.
pub const BUILTIN_BASELINE_COMMAND: &str =
    "auto with * || eauto with * || tauto || firstorder || trivial.";

#[derive(Debug, Error)]
pub enum ProverError {
    #[error("prover backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("unknown lemma `{0}`")]
    UnknownLemma(String),
    #[error("prover rejected the lemma statement: {0}")]
    StatementRejected(String),
    #[error("session is dead")]
    SessionDead,
    #[error("session is not open")]
    SessionNotOpen,
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("prover did not answer within {0:?}")]
    Timeout(Duration),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    Progress,
    Complete,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TacticOutcome {
    pub kind: OutcomeKind,
    /// Excerpt of the prover's answer.
    pub message: String,
}

impl TacticOutcome {
    fn new(kind: OutcomeKind, message: impl Into<String>) -> Self {
        TacticOutcome {
            kind,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    Open,
    Complete,
    Dead,
}

/// Connection to a prover with one lemma stated.
///
/// `apply` must roll back on failure; `undo` retracts the last accepted
/// sentence.
pub trait SessionDriver: Send {
    fn apply(&mut self, sentence: &str) -> Result<TacticOutcome, ProverError>;
    fn undo(&mut self) -> Result<(), ProverError>;
}

pub trait ProverBackend: Send + Sync {
    fn open(
        &self,
        lemma_name: &str,
        lemma_statement: &str,
    ) -> Result<Box<dyn SessionDriver>, ProverError>;

    /// Runs the combined built-in automation on the lemma; true iff it
    /// closes the proof.
    fn run_builtin_baseline(
        &self,
        lemma_name: &str,
        lemma_statement: &str,
    ) -> Result<bool, ProverError>;
}

pub struct ProverSession {
    lemma_name: String,
    lemma_statement: String,
    applied: Vec<String>,
    status: SessionStatus,
    driver: Box<dyn SessionDriver>,
}

pub fn start_session(
    backend: &dyn ProverBackend,
    lemma_name: &str,
    lemma_statement: &str,
) -> Result<ProverSession, ProverError> {
    let driver = backend.open(lemma_name, lemma_statement)?;
    Ok(ProverSession {
        lemma_name: lemma_name.to_string(),
        lemma_statement: lemma_statement.to_string(),
        applied: Vec::new(),
        status: SessionStatus::Open,
        driver,
    })
}

pub fn run_builtin_baseline(
    backend: &dyn ProverBackend,
    lemma_name: &str,
    lemma_statement: &str,
) -> Result<bool, ProverError> {
    backend.run_builtin_baseline(lemma_name, lemma_statement)
}

impl ProverSession {
    pub fn lemma_name(&self) -> &str {
        &self.lemma_name
    }

    pub fn lemma_statement(&self) -> &str {
        &self.lemma_statement
    }

    pub fn applied(&self) -> &[String] {
        &self.applied
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn apply_tactic(&mut self, sentence: &str) -> Result<TacticOutcome, ProverError> {
        match self.status {
            SessionStatus::Dead => return Err(ProverError::SessionDead),
            SessionStatus::Complete => return Err(ProverError::SessionNotOpen),
            SessionStatus::Open => {}
        }
        let outcome = self.driver.apply(sentence).inspect_err(|e| {
            if matches!(
                e,
                ProverError::Timeout(_) | ProverError::BackendUnavailable(_)
            ) {
                self.status = SessionStatus::Dead;
            }
        })?;
        match outcome.kind {
            OutcomeKind::Progress => self.applied.push(sentence.to_string()),
            OutcomeKind::Complete => {
                self.applied.push(sentence.to_string());
                self.status = SessionStatus::Complete;
            }
            OutcomeKind::Failure => {}
        }
        Ok(outcome)
    }

    /// Retracts the last accepted sentence. Undoing the closing sentence of
    /// a complete session reopens it.
    pub fn undo(&mut self) -> Result<(), ProverError> {
        if self.status == SessionStatus::Dead {
            return Err(ProverError::SessionDead);
        }
        if self.applied.is_empty() {
            return Err(ProverError::NothingToUndo);
        }
        self.driver.undo().inspect_err(|e| {
            if matches!(
                e,
                ProverError::Timeout(_) | ProverError::BackendUnavailable(_)
            ) {
                self.status = SessionStatus::Dead;
            }
        })?;
        self.applied.pop();
        self.status = SessionStatus::Open;
        Ok(())
    }
}

pub type GoalId = u64;

/// Deterministic stand-in for a prover: goals are integers and tactic
/// sentences move between them according to a fixed table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockWorld {
    pub transitions: HashMap<(GoalId, String), GoalId>,
    pub complete_goal: GoalId,
    pub initial: BTreeMap<String, GoalId>,
    pub baseline_provable: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MockFixture {
    initial: BTreeMap<String, GoalId>,
    transitions: Vec<(GoalId, String, GoalId)>,
    complete: GoalId,
    #[serde(default)]
    baseline_provable: Vec<String>,
}

impl MockWorld {
    pub fn new(complete_goal: GoalId) -> Self {
        MockWorld {
            complete_goal,
            ..MockWorld::default()
        }
    }

    pub fn with_lemma(mut self, name: impl Into<String>, goal: GoalId) -> Self {
        self.initial.insert(name.into(), goal);
        self
    }

    /// Adds `goal --sentence--> next`. Sentences are whitespace-normalized.
    pub fn add_transition(
        &mut self,
        goal: GoalId,
        sentence: &str,
        next: GoalId,
    ) -> Result<(), ProverError> {
        if goal == self.complete_goal {
            return Err(ProverError::Config(format!(
                "complete goal {goal} cannot have outgoing transitions"
            )));
        }
        let key = (goal, normalize_whitespace(sentence));
        match self.transitions.get(&key) {
            Some(&existing) if existing != next => Err(ProverError::Config(format!(
                "goal {goal} on {:?} leads to both {existing} and {next}",
                key.1
            ))),
            _ => {
                self.transitions.insert(key, next);
                Ok(())
            }
        }
    }

    pub fn step(&self, goal: GoalId, sentence: &str) -> Option<GoalId> {
        self.transitions
            .get(&(goal, normalize_whitespace(sentence)))
            .copied()
    }

    pub fn from_json(text: &str) -> Result<Self, ProverError> {
        let fixture: MockFixture = serde_json::from_str(text)
            .map_err(|e| ProverError::Config(format!("mock fixture: {e}")))?;
        let mut world = MockWorld::new(fixture.complete);
        world.initial = fixture.initial;
        world.baseline_provable = fixture.baseline_provable.into_iter().collect();
        for (goal, sentence, next) in fixture.transitions {
            world.add_transition(goal, &sentence, next)?;
        }
        Ok(world)
    }

    pub fn read(path: &Path) -> Result<Self, ProverError> {
        let text = fs::read_to_string(path).map_err(|source| ProverError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut transitions: Vec<_> = self
            .transitions
            .iter()
            .map(|((g, s), n)| (*g, s.clone(), *n))
            .collect();
        transitions.sort();
        let fixture = MockFixture {
            initial: self.initial.clone(),
            transitions,
            complete: self.complete_goal,
            baseline_provable: self.baseline_provable.iter().cloned().collect(),
        };
        serde_json::to_string_pretty(&fixture).expect("fixtures always serialize")
    }
}

/// Backend over a [`MockWorld`]. Counts every driver `apply` call.
#[derive(Debug, Clone)]
pub struct MockBackend {
    world: Arc<MockWorld>,
    calls: Arc<AtomicU64>,
}

impl MockBackend {
    pub fn new(world: MockWorld) -> Self {
        MockBackend {
            world: Arc::new(world),
            calls: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn world(&self) -> &MockWorld {
        &self.world
    }

    /// Total `apply` calls issued through sessions of this backend.
    pub fn apply_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

struct MockDriver {
    world: Arc<MockWorld>,
    calls: Arc<AtomicU64>,
    goals: Vec<GoalId>,
}

impl SessionDriver for MockDriver {
    fn apply(&mut self, sentence: &str) -> Result<TacticOutcome, ProverError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let current = *self.goals.last().expect("goal stack is never empty");
        Ok(match self.world.step(current, sentence) {
            Some(next) if next == self.world.complete_goal => {
                self.goals.push(next);
                TacticOutcome::new(OutcomeKind::Complete, "No more subgoals.")
            }
            Some(next) => {
                self.goals.push(next);
                TacticOutcome::new(OutcomeKind::Progress, format!("goal {next}"))
            }
            None => TacticOutcome::new(
                OutcomeKind::Failure,
                format!("Error: `{sentence}` does not apply to goal {current}"),
            ),
        })
    }

    fn undo(&mut self) -> Result<(), ProverError> {
        if self.goals.len() < 2 {
            return Err(ProverError::NothingToUndo);
        }
        self.goals.pop();
        Ok(())
    }
}

impl ProverBackend for MockBackend {
    fn open(&self, lemma_name: &str, _: &str) -> Result<Box<dyn SessionDriver>, ProverError> {
        let goal = *self
            .world
            .initial
            .get(lemma_name)
            .ok_or_else(|| ProverError::UnknownLemma(lemma_name.to_string()))?;
        Ok(Box::new(MockDriver {
            world: Arc::clone(&self.world),
            calls: Arc::clone(&self.calls),
            goals: vec![goal],
        }))
    }

    fn run_builtin_baseline(&self, lemma_name: &str, _: &str) -> Result<bool, ProverError> {
        Ok(self.world.baseline_provable.contains(lemma_name))
    }
}

/// Configuration of a prompt-driven prover process.
///
/// Patterns are regular expressions. `prompt_pattern` is matched against the
/// end of the accumulated output; an answer is a failure if any line matches
/// an error pattern, complete if a completion pattern matches anywhere,
/// progress otherwise. `backtrack_command` may use `{depth}` (number of
/// sentences kept after undoing) and `{state}` (the state id captured by
/// `state_pattern` from the prompt at that depth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubprocessConfig {
    pub command: String,
    pub args: Vec<String>,
    pub prompt_pattern: String,
    pub error_patterns: Vec<String>,
    pub complete_patterns: Vec<String>,
    pub backtrack_command: String,
    pub state_pattern: Option<String>,
    pub startup_commands: Vec<String>,
    pub baseline_command: String,
    pub tactic_timeout_seconds: f64,
    pub startup_timeout_seconds: f64,
}

impl Default for SubprocessConfig {
    fn default() -> Self {
        SubprocessConfig {
            command: "coqtop".into(),
            args: Vec::new(),
            prompt_pattern: r"< $".into(),
            error_patterns: vec![r"^Error".into()],
            complete_patterns: vec![r"No more subgoals".into(), r"Proof completed".into()],
            backtrack_command: "Undo.".into(),
            state_pattern: None,
            startup_commands: Vec::new(),
            baseline_command: BUILTIN_BASELINE_COMMAND.into(),
            tactic_timeout_seconds: 5.0,
            startup_timeout_seconds: 30.0,
        }
    }
}

impl SubprocessConfig {
    pub fn from_json(text: &str) -> Result<Self, ProverError> {
        serde_json::from_str(text).map_err(|e| ProverError::Config(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, ProverError> {
        let text = fs::read_to_string(path).map_err(|source| ProverError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[derive(Debug)]
struct CompiledPatterns {
    prompt: Regex,
    errors: Vec<Regex>,
    complete: Vec<Regex>,
    state: Option<Regex>,
}

impl CompiledPatterns {
    fn new(config: &SubprocessConfig) -> Result<Self, ProverError> {
        let compile =
            |p: &str| Regex::new(p).map_err(|e| ProverError::Config(format!("pattern {p:?}: {e}")));
        let mut prompt = config.prompt_pattern.clone();
        if !prompt.ends_with('$') {
            prompt.push('$');
        }
        Ok(CompiledPatterns {
            prompt: compile(&prompt)?,
            errors: config
                .error_patterns
                .iter()
                .map(|p| compile(p))
                .collect::<Result<_, _>>()?,
            complete: config
                .complete_patterns
                .iter()
                .map(|p| compile(p))
                .collect::<Result<_, _>>()?,
            state: config.state_pattern.as_deref().map(compile).transpose()?,
        })
    }

    fn classify(&self, output: &str) -> OutcomeKind {
        if output
            .lines()
            .any(|line| self.errors.iter().any(|re| re.is_match(line.trim_start())))
        {
            OutcomeKind::Failure
        } else if self.complete.iter().any(|re| re.is_match(output)) {
            OutcomeKind::Complete
        } else {
            OutcomeKind::Progress
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubprocessBackend {
    config: SubprocessConfig,
    patterns: Arc<CompiledPatterns>,
}

impl SubprocessBackend {
    pub fn new(config: SubprocessConfig) -> Result<Self, ProverError> {
        let patterns = Arc::new(CompiledPatterns::new(&config)?);
        Ok(SubprocessBackend { config, patterns })
    }

    fn spawn(&self, lemma_statement: &str) -> Result<SubprocessDriver, ProverError> {
        let mut child = Command::new(&self.config.command)
            .args(&self.config.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                ProverError::BackendUnavailable(format!(
                    "cannot start `{}`: {e}",
                    self.config.command
                ))
            })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let (tx, rx) = mpsc::channel();
        let stdout = child.stdout.take().expect("stdout is piped");
        let stderr = child.stderr.take().expect("stderr is piped");
        for mut stream in [Box::new(stdout) as Box<dyn Read + Send>, Box::new(stderr)] {
            let tx = tx.clone();
            thread::spawn(move || {
                let mut buf = [0u8; 4096];
                loop {
                    match stream.read(&mut buf) {
                        Ok(0) | Err(_) => {
                            let _ = tx.send(None);
                            break;
                        }
                        Ok(n) => {
                            if tx
                                .send(Some(String::from_utf8_lossy(&buf[..n]).into_owned()))
                                .is_err()
                            {
                                break;
                            }
                        }
                    }
                }
            });
        }
        let mut driver = SubprocessDriver {
            child,
            stdin,
            output: rx,
            open_streams: 2,
            patterns: Arc::clone(&self.patterns),
            backtrack_command: self.config.backtrack_command.clone(),
            tactic_timeout: Duration::from_secs_f64(self.config.tactic_timeout_seconds),
            states: Vec::new(),
        };
        let startup = Duration::from_secs_f64(self.config.startup_timeout_seconds);
        driver
            .read_answer(startup)
            .map_err(|e| ProverError::BackendUnavailable(format!("no initial prompt: {e}")))?;
        for command in &self.config.startup_commands {
            let answer = driver.exchange(command, startup)?;
            if driver.patterns.classify(&answer.text) == OutcomeKind::Failure {
                return Err(ProverError::BackendUnavailable(format!(
                    "startup command {command:?} failed: {}",
                    answer.text.trim()
                )));
            }
        }
        let answer = driver.exchange(lemma_statement, startup)?;
        if driver.patterns.classify(&answer.text) == OutcomeKind::Failure {
            return Err(ProverError::StatementRejected(
                answer.text.trim().to_string(),
            ));
        }
        driver.states.push(answer.state);
        Ok(driver)
    }
}

impl ProverBackend for SubprocessBackend {
    fn open(&self, _: &str, lemma_statement: &str) -> Result<Box<dyn SessionDriver>, ProverError> {
        Ok(Box::new(self.spawn(lemma_statement)?))
    }

    fn run_builtin_baseline(&self, _: &str, lemma_statement: &str) -> Result<bool, ProverError> {
        let mut driver = self.spawn(lemma_statement)?;
        let command = self.config.baseline_command.clone();
        Ok(driver.apply(&command)?.kind == OutcomeKind::Complete)
    }
}

struct Answer {
    text: String,
    state: Option<String>,
}

struct SubprocessDriver {
    child: Child,
    stdin: ChildStdin,
    output: Receiver<Option<String>>,
    open_streams: usize,
    patterns: Arc<CompiledPatterns>,
    backtrack_command: String,
    tactic_timeout: Duration,
    /// Prompt state after the statement and after each accepted sentence.
    states: Vec<Option<String>>,
}

impl SubprocessDriver {
    fn exchange(&mut self, command: &str, timeout: Duration) -> Result<Answer, ProverError> {
        let line = format!("{}\n", command.trim_end());
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| ProverError::BackendUnavailable(format!("write failed: {e}")))?;
        self.read_answer(timeout)
    }

    /// Reads until the output ends with the prompt; returns the text before it.
    fn read_answer(&mut self, timeout: Duration) -> Result<Answer, ProverError> {
        let deadline = Instant::now() + timeout;
        let mut buf = String::new();
        loop {
            if self.patterns.prompt.is_match(&buf) {
                while let Ok(Some(late)) = self.output.try_recv() {
                    buf.push_str(&late);
                }
            }
            if let Some(prompt) = self.patterns.prompt.find(&buf) {
                let state = self.patterns.state.as_ref().and_then(|re| {
                    re.captures(prompt.as_str())
                        .and_then(|c| c.get(1))
                        .map(|m| m.as_str().to_string())
                });
                buf.truncate(prompt.start());
                return Ok(Answer { text: buf, state });
            }
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.output.recv_timeout(remaining) {
                Ok(Some(chunk)) => buf.push_str(&chunk),
                Ok(None) => {
                    self.open_streams -= 1;
                    if self.open_streams == 0 {
                        return Err(ProverError::BackendUnavailable(format!(
                            "prover exited: {}",
                            buf.trim()
                        )));
                    }
                }
                Err(RecvTimeoutError::Timeout) => {
                    let _ = self.child.kill();
                    return Err(ProverError::Timeout(timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ProverError::BackendUnavailable(
                        "prover output closed".into(),
                    ))
                }
            }
        }
    }
}

impl SessionDriver for SubprocessDriver {
    fn apply(&mut self, sentence: &str) -> Result<TacticOutcome, ProverError> {
        let answer = self.exchange(sentence, self.tactic_timeout)?;
        let kind = self.patterns.classify(&answer.text);
        if kind != OutcomeKind::Failure {
            self.states.push(answer.state);
        }
        Ok(TacticOutcome::new(kind, answer.text.trim()))
    }

    fn undo(&mut self) -> Result<(), ProverError> {
        if self.states.len() < 2 {
            return Err(ProverError::NothingToUndo);
        }
        let depth = self.states.len() - 2;
        let state = self.states[depth].clone().unwrap_or_default();
        let command = self
            .backtrack_command
            .replace("{depth}", &depth.to_string())
            .replace("{state}", &state);
        let answer = self.exchange(&command, self.tactic_timeout)?;
        if self.patterns.classify(&answer.text) == OutcomeKind::Failure {
            return Err(ProverError::BackendUnavailable(format!(
                "backtrack failed: {}",
                answer.text.trim()
            )));
        }
        self.states.pop();
        Ok(())
    }
}

impl Drop for SubprocessDriver {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
