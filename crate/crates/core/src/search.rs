//! Breadth-first proof search over an inferred machine.
//!
//! Nodes are model paths; a node's children are the `(label, param)` choices
//! admitted by the guards of its outgoing transitions. Elements ending in `;`
//! are buffered until the composition is complete, and only whole sentences
//! go to the prover. A prover session is shared by the whole search: moving
//! to the next node undoes back to the common prefix and replays the rest.
//!
//! Budget accounting: only the first evaluation of a sentence at a node is
//! charged. Replays after undo are counted separately in
//! [`ProofResult::replayed`].

use std::collections::{BTreeSet, VecDeque};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::efsm::{Efsm, StateId};
use crate::prover::{start_session, OutcomeKind, ProverBackend, ProverError, ProverSession};
use crate::trace::{normalize_whitespace, split_tactic_sentence, Corpus, Trace, TraceElement};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("element sequence ends inside a ';' composition")]
    DanglingComposition,
    #[error(transparent)]
    Prover(#[from] ProverError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Maximum number of charged tactic applications.
    pub tactic_budget: u64,
    pub timeout: Option<Duration>,
    /// Maximum path length in trace elements.
    pub max_depth: Option<usize>,
    /// Maximum number of `;`-composed fragments buffered into one sentence.
    pub max_pending: usize,
    /// Extra params tried on open guards, besides the observed ones.
    pub extra_params: Vec<String>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            tactic_budget: 10_000,
            timeout: None,
            max_depth: None,
            max_pending: 4,
            extra_params: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Found,
    Exhausted,
    Budget,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofResult {
    pub found: bool,
    pub sentences: Vec<String>,
    pub elements: Vec<TraceElement>,
    pub tactics_evaluated: u64,
    pub replayed: u64,
    pub elapsed_seconds: f64,
    pub is_new: bool,
    pub is_shorter: bool,
    pub stop: StopReason,
}

impl ProofResult {
    /// Fills `is_new` / `is_shorter` from the training corpus and, when
    /// known, the original proof of the lemma.
    pub fn classify(&mut self, training: &Corpus, original: Option<&Trace>) {
        if self.found {
            (self.is_new, self.is_shorter) = classify_proof(&self.sentences, training, original);
        }
    }
}

/// Source text of a run of elements joined into one sentence body.
fn join_fragments<'a>(elements: impl IntoIterator<Item = &'a TraceElement>) -> String {
    let parts: Vec<String> = elements.into_iter().map(TraceElement::fragment).collect();
    normalize_whitespace(&parts.join(" "))
}

/// Groups elements into "."-terminated sentences: an element whose params
/// end in `;` is joined with its successor.
pub fn compose_sentences(elements: &[TraceElement]) -> Result<Vec<String>, SearchError> {
    if elements.last().is_some_and(TraceElement::is_composed) {
        return Err(SearchError::DanglingComposition);
    }
    let mut sentences = Vec::new();
    let mut start = 0;
    for (i, element) in elements.iter().enumerate() {
        if !element.is_composed() {
            sentences.push(format!("{}.", join_fragments(&elements[start..=i])));
            start = i + 1;
        }
    }
    Ok(sentences)
}

/// Splits sentences back into trace elements.
pub fn decompose_sentences(sentences: &[String]) -> Vec<TraceElement> {
    sentences
        .iter()
        .flat_map(|s| {
            let body = s.trim().strip_suffix('.').unwrap_or(s.trim());
            split_tactic_sentence(body).unwrap_or_default()
        })
        .collect()
}

fn same_sequence(a: &[TraceElement], b: &[TraceElement]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.label == y.label && normalize_whitespace(&x.params) == normalize_whitespace(&y.params)
        })
}

/// `(is_new, is_shorter)` for a found proof. A proof is new when its element
/// sequence equals no whole training trace, and shorter when it has fewer
/// elements than the original proof.
pub fn classify_proof(
    found: &[String],
    training: &Corpus,
    original: Option<&Trace>,
) -> (bool, bool) {
    let elements = decompose_sentences(found);
    let is_new = !training
        .traces
        .iter()
        .any(|t| same_sequence(&t.elements, &elements));
    let is_shorter = original.is_some_and(|o| elements.len() < o.elements.len());
    (is_new, is_shorter)
}

/// The three-line result block printed after a search.
pub fn render_result(result: &ProofResult, elapsed: Duration) -> String {
    let secs = elapsed.as_secs();
    let first = if result.found {
        format!("Proof was: {}", result.sentences.join(" "))
    } else {
        "No proof found.".to_string()
    };
    format!(
        "{first}\n{} tactics evaluated.\nInference and search took {} min, {} sec\n",
        result.tactics_evaluated,
        secs / 60,
        secs % 60
    )
}

struct Node {
    state: StateId,
    parent: Option<usize>,
    element: Option<TraceElement>,
    depth: usize,
    /// Set when this node's element completed a sentence.
    sentence: Option<String>,
    /// Buffered `;`-composed elements awaiting a terminator.
    pending: Vec<TraceElement>,
}

impl Node {
    fn root(state: StateId) -> Self {
        Node {
            state,
            parent: None,
            element: None,
            depth: 0,
            sentence: None,
            pending: Vec::new(),
        }
    }
}

struct Search<'a> {
    machine: &'a Efsm,
    backend: &'a dyn ProverBackend,
    lemma_name: &'a str,
    lemma_statement: &'a str,
    config: &'a SearchConfig,
    session: ProverSession,
    nodes: Vec<Node>,
    evaluated: u64,
    replayed: u64,
    started: Instant,
}

enum Step {
    Continue,
    Stop(StopReason, Option<(Vec<String>, Vec<TraceElement>)>),
}

impl<'a> Search<'a> {
    fn sentence_path(&self, mut id: usize) -> Vec<String> {
        let mut path = Vec::new();
        loop {
            let node = &self.nodes[id];
            if let Some(s) = &node.sentence {
                path.push(s.clone());
            }
            match node.parent {
                Some(p) => id = p,
                None => break,
            }
        }
        path.reverse();
        path
    }

    fn element_path(&self, mut id: usize) -> Vec<TraceElement> {
        let mut path = Vec::new();
        while let Some(e) = &self.nodes[id].element {
            path.push(e.clone());
            id = self.nodes[id].parent.expect("non-root nodes have parents");
        }
        path.reverse();
        path
    }

    fn timed_out(&self) -> bool {
        self.config
            .timeout
            .is_some_and(|limit| self.started.elapsed() >= limit)
    }

    fn restart_session(&mut self) -> Result<(), ProverError> {
        self.session = start_session(self.backend, self.lemma_name, self.lemma_statement)?;
        Ok(())
    }

    /// Brings the session to `target` by undoing to the common prefix and
    /// replaying the rest. Returns false if the prover no longer accepts the
    /// path.
    fn sync_to(&mut self, target: &[String]) -> Result<bool, ProverError> {
        let common = self
            .session
            .applied()
            .iter()
            .zip(target)
            .take_while(|(a, b)| a == b)
            .count();
        while self.session.applied().len() > common {
            if let Err(e) = self.session.undo() {
                log::warn!("undo failed ({e}); restarting session");
                self.restart_session()?;
                return self.sync_to(target);
            }
        }
        for sentence in &target[common..] {
            self.replayed += 1;
            match self.session.apply_tactic(sentence) {
                Ok(outcome) if outcome.kind == OutcomeKind::Progress => {}
                Ok(_) | Err(ProverError::Timeout(_)) => {
                    log::warn!("replay of {sentence:?} diverged; dropping path");
                    self.restart_session()?;
                    return Ok(false);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }

    fn expand(&mut self, id: usize, queue: &mut VecDeque<usize>) -> Result<Step, ProverError> {
        let (state, depth) = (self.nodes[id].state, self.nodes[id].depth);
        if self.config.max_depth.is_some_and(|max| depth >= max) {
            return Ok(Step::Continue);
        }
        let mut synced = false;
        let path = self.sentence_path(id);

        for t in self.machine.outgoing(state) {
            let mut params: BTreeSet<&str> =
                t.guard.allowed_params.iter().map(String::as_str).collect();
            if t.guard.open {
                params.extend(self.config.extra_params.iter().map(String::as_str));
            }
            for param in params {
                let element = TraceElement::new(t.label.clone(), param);
                let mut pending = self.nodes[id].pending.clone();
                pending.push(element.clone());
                if element.is_composed() {
                    if pending.len() > self.config.max_pending {
                        continue;
                    }
                    self.nodes.push(Node {
                        state: t.to,
                        parent: Some(id),
                        element: Some(element),
                        depth: depth + 1,
                        sentence: None,
                        pending,
                    });
                    queue.push_back(self.nodes.len() - 1);
                    continue;
                }

                let sentence = format!("{}.", join_fragments(&pending));
                if self.timed_out() {
                    return Ok(Step::Stop(StopReason::Timeout, None));
                }
                if self.evaluated >= self.config.tactic_budget {
                    return Ok(Step::Stop(StopReason::Budget, None));
                }
                if !synced {
                    if !self.sync_to(&path)? {
                        return Ok(Step::Continue);
                    }
                    synced = true;
                }
                self.evaluated += 1;
                let outcome = match self.session.apply_tactic(&sentence) {
                    Ok(outcome) => outcome,
                    Err(ProverError::Timeout(limit)) => {
                        log::debug!("{sentence:?} timed out after {limit:?}");
                        self.restart_session()?;
                        synced = false;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                match outcome.kind {
                    OutcomeKind::Failure => {}
                    OutcomeKind::Complete => {
                        let mut sentences = path.clone();
                        sentences.push(sentence);
                        let mut elements = self.element_path(id);
                        elements.push(element);
                        return Ok(Step::Stop(StopReason::Found, Some((sentences, elements))));
                    }
                    OutcomeKind::Progress => {
                        self.nodes.push(Node {
                            state: t.to,
                            parent: Some(id),
                            element: Some(element),
                            depth: depth + 1,
                            sentence: Some(sentence),
                            pending: Vec::new(),
                        });
                        queue.push_back(self.nodes.len() - 1);
                        if let Err(e) = self.session.undo() {
                            log::warn!("undo failed ({e}); restarting session");
                            self.restart_session()?;
                            synced = false;
                        }
                    }
                }
            }
        }
        Ok(Step::Continue)
    }
}

/// Breadth-first search for the shortest model path the prover accepts as a
/// complete proof. Final states of the machine are not consulted: the prover
/// decides when a proof is done.
pub fn bfs_search(
    machine: &Efsm,
    backend: &dyn ProverBackend,
    lemma_name: &str,
    lemma_statement: &str,
    config: &SearchConfig,
) -> Result<ProofResult, SearchError> {
    let started = Instant::now();
    let session = start_session(backend, lemma_name, lemma_statement)?;
    let mut search = Search {
        machine,
        backend,
        lemma_name,
        lemma_statement,
        config,
        session,
        nodes: vec![Node::root(machine.initial())],
        evaluated: 0,
        replayed: 0,
        started,
    };
    let mut queue = VecDeque::from([0]);
    let mut stop = StopReason::Exhausted;
    let mut proof = None;
    while let Some(id) = queue.pop_front() {
        match search.expand(id, &mut queue)? {
            Step::Continue => {}
            Step::Stop(reason, found) => {
                stop = reason;
                proof = found;
                break;
            }
        }
    }
    let (sentences, elements) = proof.unwrap_or_default();
    Ok(ProofResult {
        found: stop == StopReason::Found,
        sentences,
        elements,
        tactics_evaluated: search.evaluated,
        replayed: search.replayed,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        is_new: false,
        is_shorter: false,
        stop,
    })
}
