//! Extended finite state machines over tactic labels.
//!
//! A transition carries a label and a [`Guard`] over the parameter string of
//! the event. Machines are kept in canonical form: states are numbered
//! breadth-first from the initial state, visiting outgoing edges in
//! lexicographic `(label, params)` order, and the transition list is sorted.
//! Equal languages built the same way therefore compare and print equal.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Corpus, Trace, TraceElement};

#[derive(Debug, Error)]
pub enum EfsmError {
    #[error("invalid machine: {0}")]
    Invalid(String),
    #[error("malformed machine JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Data guard of a transition: the `(label, params)` pairs for which the
/// transition is possible. Unless `open`, params outside `allowed_params`
/// are impossible.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Guard {
    pub label: String,
    pub allowed_params: BTreeSet<String>,
    pub open: bool,
}

impl Guard {
    pub fn closed<I, S>(label: impl Into<String>, params: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Guard {
            label: label.into(),
            allowed_params: params.into_iter().map(Into::into).collect(),
            open: false,
        }
    }

    pub fn allows(&self, params: &str) -> bool {
        self.open || self.allowed_params.contains(params)
    }

    /// Merges `other` into `self`: params are unioned, openness or-ed.
    pub fn absorb(&mut self, other: &Guard) {
        self.allowed_params
            .extend(other.allowed_params.iter().cloned());
        self.open |= other.open;
    }

    fn sort_key(&self) -> (Vec<&str>, bool) {
        (
            self.allowed_params.iter().map(String::as_str).collect(),
            self.open,
        )
    }
}

pub fn guard_allows(guard: &Guard, params: &str) -> bool {
    guard.allows(params)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transition {
    pub from: StateId,
    pub label: String,
    pub guard: Guard,
    pub to: StateId,
}

impl Transition {
    pub fn admits(&self, element: &TraceElement) -> bool {
        self.label == element.label && self.guard.allows(&element.params)
    }
}

fn transition_order(a: &Transition, b: &Transition) -> std::cmp::Ordering {
    (a.from, &a.label, a.guard.sort_key(), a.to).cmp(&(b.from, &b.label, b.guard.sort_key(), b.to))
}

/// An EFSM with states `0..num_states`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Efsm {
    num_states: usize,
    initial: StateId,
    finals: BTreeSet<StateId>,
    transitions: Vec<Transition>,
    /// `transitions[offsets[s]..offsets[s + 1]]` leave state `s`.
    offsets: Vec<usize>,
}

impl Efsm {
    /// Validates and indexes a machine. The transition list is sorted, so
    /// input order does not matter.
    pub fn new(
        num_states: usize,
        initial: StateId,
        finals: BTreeSet<StateId>,
        mut transitions: Vec<Transition>,
    ) -> Result<Self, EfsmError> {
        let in_range = |s: StateId| s.0 < num_states;
        if !in_range(initial) {
            return Err(EfsmError::Invalid(format!(
                "initial state {initial} out of range"
            )));
        }
        if let Some(f) = finals.iter().find(|f| !in_range(**f)) {
            return Err(EfsmError::Invalid(format!("final state {f} out of range")));
        }
        for t in &transitions {
            if !in_range(t.from) || !in_range(t.to) {
                return Err(EfsmError::Invalid(format!(
                    "transition {} -> {} has an endpoint out of range",
                    t.from, t.to
                )));
            }
            if t.guard.label != t.label {
                return Err(EfsmError::Invalid(format!(
                    "guard label `{}` differs from transition label `{}`",
                    t.guard.label, t.label
                )));
            }
            if !t.guard.open && t.guard.allowed_params.is_empty() {
                return Err(EfsmError::Invalid(format!(
                    "closed guard on {} -{}-> {} admits nothing",
                    t.from, t.label, t.to
                )));
            }
        }
        transitions.sort_by(transition_order);
        transitions.dedup();
        let mut offsets = vec![0; num_states + 1];
        for t in &transitions {
            offsets[t.from.0 + 1] += 1;
        }
        for s in 0..num_states {
            offsets[s + 1] += offsets[s];
        }
        Ok(Efsm {
            num_states,
            initial,
            finals,
            transitions,
            offsets,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.num_states).map(StateId)
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn finals(&self) -> &BTreeSet<StateId> {
        &self.finals
    }

    pub fn is_final(&self, state: StateId) -> bool {
        self.finals.contains(&state)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn outgoing(&self, state: StateId) -> &[Transition] {
        &self.transitions[self.offsets[state.0]..self.offsets[state.0 + 1]]
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.transitions.iter().map(|t| t.label.as_str()).collect()
    }

    /// True when no state has two outgoing transitions with the same label.
    pub fn is_label_deterministic(&self) -> bool {
        self.states().all(|s| {
            let out = self.outgoing(s);
            out.windows(2).all(|w| w[0].label != w[1].label)
        })
    }

    /// States reachable after consuming `elements`, over all nondeterministic
    /// choices. Final states play no role here.
    pub fn reachable_after(&self, elements: &[TraceElement]) -> BTreeSet<StateId> {
        let mut current = BTreeSet::from([self.initial]);
        for element in elements {
            current = current
                .iter()
                .flat_map(|&s| self.outgoing(s))
                .filter(|t| t.admits(element))
                .map(|t| t.to)
                .collect();
            if current.is_empty() {
                break;
            }
        }
        current
    }

    /// Renumbers states breadth-first from the initial state and drops
    /// unreachable ones. Returns the machine and the old-to-new mapping.
    pub fn canonicalize(&self) -> (Efsm, Vec<Option<StateId>>) {
        let mut mapping: Vec<Option<StateId>> = vec![None; self.num_states];
        let mut queue = VecDeque::from([self.initial]);
        mapping[self.initial.0] = Some(StateId(0));
        let mut next = 1;
        while let Some(s) = queue.pop_front() {
            // outgoing() is already sorted by (label, guard, target)
            for t in self.outgoing(s) {
                if mapping[t.to.0].is_none() {
                    mapping[t.to.0] = Some(StateId(next));
                    next += 1;
                    queue.push_back(t.to);
                }
            }
        }
        let finals = self.finals.iter().filter_map(|f| mapping[f.0]).collect();
        let transitions = self
            .transitions
            .iter()
            .filter_map(|t| {
                Some(Transition {
                    from: mapping[t.from.0]?,
                    label: t.label.clone(),
                    guard: t.guard.clone(),
                    to: mapping[t.to.0]?,
                })
            })
            .collect();
        let machine = Efsm::new(next, StateId(0), finals, transitions)
            .expect("renumbering preserves validity");
        (machine, mapping)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&EfsmRecord::from(self)).expect("machines always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, EfsmError> {
        let record: EfsmRecord = serde_json::from_str(text)?;
        record.try_into()
    }

    pub fn write_json(&self, path: &Path) -> Result<(), EfsmError> {
        fs::write(path, self.to_json() + "\n").map_err(|source| EfsmError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_json(path: &Path) -> Result<Self, EfsmError> {
        let text = fs::read_to_string(path).map_err(|source| EfsmError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Builds the prefix-tree acceptor of a corpus.
///
/// Traces share states exactly along their common `(label, params)` prefix;
/// each edge carries a closed guard admitting only the param seen on it.
pub fn build_prefix_tree(corpus: &Corpus) -> Efsm {
    prefix_tree_of(corpus.traces.iter())
}

pub(crate) fn prefix_tree_of<'a>(traces: impl Iterator<Item = &'a Trace>) -> Efsm {
    let mut children: Vec<BTreeMap<TraceElement, usize>> = vec![BTreeMap::new()];
    let mut finals = BTreeSet::new();
    for trace in traces {
        let mut node = 0;
        for element in &trace.elements {
            node = match children[node].get(element) {
                Some(&child) => child,
                None => {
                    let child = children.len();
                    children.push(BTreeMap::new());
                    children[node].insert(element.clone(), child);
                    child
                }
            };
        }
        finals.insert(StateId(node));
    }
    let transitions = children
        .iter()
        .enumerate()
        .flat_map(|(from, edges)| {
            edges.iter().map(move |(element, &to)| Transition {
                from: StateId(from),
                label: element.label.clone(),
                guard: Guard::closed(element.label.clone(), [element.params.clone()]),
                to: StateId(to),
            })
        })
        .collect();
    let tree = Efsm::new(children.len(), StateId(0), finals, transitions)
        .expect("prefix tree is valid by construction");
    tree.canonicalize().0
}

/// True iff some path from the initial state consumes every element of the
/// trace and ends in a final state.
pub fn accepts(machine: &Efsm, trace: &Trace) -> bool {
    machine
        .reachable_after(&trace.elements)
        .iter()
        .any(|s| machine.is_final(*s))
}

fn dot_escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

fn edge_label(t: &Transition) -> String {
    const SAMPLE: usize = 3;
    let mut shown: Vec<&str> = t
        .guard
        .allowed_params
        .iter()
        .take(SAMPLE)
        .map(|p| if p.is_empty() { "ε" } else { p.as_str() })
        .collect();
    let more = t.guard.allowed_params.len().saturating_sub(SAMPLE);
    let extra = format!("+{more} more");
    if more > 0 {
        shown.push(&extra);
    }
    let mut label = format!("{} / {{{}}}", t.label, shown.join(", "));
    if t.guard.open {
        label.push_str(" (open)");
    }
    label
}

/// Graphviz rendering. Final states are double circles, the initial state is
/// drawn bold; edges show up to three sample params.
pub fn to_dot(machine: &Efsm) -> String {
    let mut out = String::from("digraph efsm {\n    rankdir=LR;\n    node [shape=circle];\n");
    for s in machine.states() {
        let mut attrs = Vec::new();
        if machine.is_final(s) {
            attrs.push("shape=doublecircle");
        }
        if s == machine.initial() {
            attrs.push("style=bold");
        }
        if attrs.is_empty() {
            let _ = writeln!(out, "    {s};");
        } else {
            let _ = writeln!(out, "    {s} [{}];", attrs.join(", "));
        }
    }
    for t in machine.transitions() {
        let _ = writeln!(
            out,
            "    {} -> {} [label=\"{}\"];",
            t.from,
            t.to,
            dot_escape(&edge_label(t))
        );
    }
    out.push_str("}\n");
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionRecord {
    from: usize,
    label: String,
    params: Vec<String>,
    open: bool,
    to: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EfsmRecord {
    states: usize,
    initial: usize,
    finals: Vec<usize>,
    transitions: Vec<TransitionRecord>,
}

impl From<&Efsm> for EfsmRecord {
    fn from(m: &Efsm) -> Self {
        EfsmRecord {
            states: m.num_states,
            initial: m.initial.0,
            finals: m.finals.iter().map(|f| f.0).collect(),
            transitions: m
                .transitions
                .iter()
                .map(|t| TransitionRecord {
                    from: t.from.0,
                    label: t.label.clone(),
                    params: t.guard.allowed_params.iter().cloned().collect(),
                    open: t.guard.open,
                    to: t.to.0,
                })
                .collect(),
        }
    }
}

impl TryFrom<EfsmRecord> for Efsm {
    type Error = EfsmError;

    fn try_from(r: EfsmRecord) -> Result<Self, EfsmError> {
        let transitions = r
            .transitions
            .into_iter()
            .map(|t| Transition {
                from: StateId(t.from),
                guard: Guard {
                    label: t.label.clone(),
                    allowed_params: t.params.into_iter().collect(),
                    open: t.open,
                },
                label: t.label,
                to: StateId(t.to),
            })
            .collect();
        Efsm::new(
            r.states,
            StateId(r.initial),
            r.finals.into_iter().map(StateId).collect(),
            transitions,
        )
    }
}
