//! State-merging inference over the prefix tree.
//!
//! Two states are merge candidates when they share at least `k` outgoing
//! label sequences of length `1..=k` (the k-tails score). Merging a pair
//! folds the machine back to label-determinism, unions the guards of edges
//! that collapse together, and is kept only if every training trace is still
//! accepted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::efsm::{accepts, build_prefix_tree, Efsm, Guard, StateId, Transition};
use crate::trace::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Blue-fringe merging: frontier states are compared against the
    /// consolidated (red) core.
    #[default]
    RedBlue,
    /// Merge the best-scoring pair anywhere in the machine until none is left.
    KTailsExhaustive,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::RedBlue => "redblue",
            Strategy::KTailsExhaustive => "ktails_exhaustive",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "redblue" => Ok(Strategy::RedBlue),
            "ktails_exhaustive" | "ktails" => Ok(Strategy::KTailsExhaustive),
            other => Err(format!(
                "unknown strategy `{other}` (expected redblue or ktails_exhaustive)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceConfig {
    pub strategy: Strategy,
    /// Minimum k-tails score for a pair to be merged.
    pub k: usize,
    /// Upper bound on merge/promote steps; `None` runs to completion.
    pub max_states_hint: Option<usize>,
    /// A merged guard with more distinct params than this becomes open.
    pub guard_open_threshold: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            strategy: Strategy::RedBlue,
            k: 1,
            max_states_hint: None,
            guard_open_threshold: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairScore {
    /// One state is final and the other is a non-final leaf.
    Incompatible,
    Score(usize),
}

impl PairScore {
    pub fn value(self) -> Option<usize> {
        match self {
            PairScore::Incompatible => None,
            PairScore::Score(s) => Some(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeCandidate {
    pub red: StateId,
    pub blue: StateId,
    pub score: usize,
}

/// The folded machine no longer accepts some training trace.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("merging {a} and {b} rejects training trace `{lemma}`")]
pub struct GuardConflict {
    pub a: StateId,
    pub b: StateId,
    pub lemma: String,
}

/// Distinct label sequences of length `1..=k` leaving `state`.
pub fn tails(machine: &Efsm, state: StateId, k: usize) -> BTreeSet<Vec<&str>> {
    let mut out = BTreeSet::new();
    let mut frontier: BTreeSet<(StateId, Vec<&str>)> = BTreeSet::from([(state, Vec::new())]);
    for _ in 0..k {
        let mut next = BTreeSet::new();
        for (s, path) in &frontier {
            for t in machine.outgoing(*s) {
                let mut longer = path.clone();
                longer.push(t.label.as_str());
                out.insert(longer.clone());
                next.insert((t.to, longer));
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    out
}

fn terminal_conflict(machine: &Efsm, a: StateId, b: StateId) -> bool {
    let leaf_non_final = |s: StateId| !machine.is_final(s) && machine.outgoing(s).is_empty();
    machine.is_final(a) != machine.is_final(b) && (leaf_non_final(a) || leaf_non_final(b))
}

pub fn score_pair(machine: &Efsm, a: StateId, b: StateId, k: usize) -> PairScore {
    if terminal_conflict(machine, a, b) {
        return PairScore::Incompatible;
    }
    let ta = tails(machine, a, k);
    let tb = tails(machine, b, k);
    PairScore::Score(ta.intersection(&tb).count())
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.0[root] != root {
            root = self.0[root];
        }
        let mut x = x;
        while self.0[x] != root {
            let up = self.0[x];
            self.0[x] = root;
            x = up;
        }
        root
    }

    /// Keeps the smaller representative; returns false if already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.0[drop] = keep;
        true
    }
}

/// Merges `a` and `b`, folds to label-determinism and renumbers canonically.
/// Also returns where each old state ended up.
pub(crate) fn merge_with_mapping(
    machine: &Efsm,
    a: StateId,
    b: StateId,
    training: &Corpus,
    guard_open_threshold: usize,
) -> Result<(Efsm, Vec<Option<StateId>>), GuardConflict> {
    debug_assert_ne!(a, b, "a state cannot be merged with itself");
    let mut uf = UnionFind::new(machine.num_states());
    uf.union(a.0, b.0);

    loop {
        let mut changed = false;
        let mut target: BTreeMap<(usize, &str), usize> = BTreeMap::new();
        for t in machine.transitions() {
            let from = uf.find(t.from.0);
            let to = uf.find(t.to.0);
            match target.get(&(from, t.label.as_str())) {
                Some(&existing) => {
                    let existing = uf.find(existing);
                    if existing != to {
                        uf.union(existing, to);
                        changed = true;
                    }
                }
                None => {
                    target.insert((from, t.label.as_str()), to);
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut edges: BTreeMap<(usize, &str, usize), Guard> = BTreeMap::new();
    for t in machine.transitions() {
        let key = (uf.find(t.from.0), t.label.as_str(), uf.find(t.to.0));
        edges
            .entry(key)
            .and_modify(|g| g.absorb(&t.guard))
            .or_insert_with(|| t.guard.clone());
    }
    let transitions = edges
        .into_iter()
        .map(|((from, label, to), mut guard)| {
            if guard.allowed_params.len() > guard_open_threshold {
                guard.open = true;
            }
            Transition {
                from: StateId(from),
                label: label.to_string(),
                guard,
                to: StateId(to),
            }
        })
        .collect();
    let finals = machine
        .finals()
        .iter()
        .map(|f| StateId(uf.find(f.0)))
        .collect();
    let quotient = Efsm::new(
        machine.num_states(),
        StateId(uf.find(machine.initial().0)),
        finals,
        transitions,
    )
    .expect("quotient of a valid machine is valid");
    let (merged, canonical) = quotient.canonicalize();

    if let Some(rejected) = training.traces.iter().find(|t| !accepts(&merged, t)) {
        return Err(GuardConflict {
            a,
            b,
            lemma: rejected.lemma_name.clone(),
        });
    }
    let mapping = (0..machine.num_states())
        .map(|s| canonical[uf.find(s)])
        .collect();
    Ok((merged, mapping))
}

/// Merges states `a` and `b` of a machine inferred from `training`.
pub fn merge_states(
    machine: &Efsm,
    a: StateId,
    b: StateId,
    training: &Corpus,
    config: &InferenceConfig,
) -> Result<Efsm, GuardConflict> {
    merge_with_mapping(machine, a, b, training, config.guard_open_threshold).map(|(m, _)| m)
}

/// True iff the machine accepts every trace of the corpus.
pub fn language_is_superset(machine: &Efsm, corpus: &Corpus) -> bool {
    corpus.traces.iter().all(|t| accepts(machine, t))
}

/// Infers a generalized EFSM from a corpus.
pub fn infer(corpus: &Corpus, config: &InferenceConfig) -> Efsm {
    let tree = build_prefix_tree(corpus);
    match config.strategy {
        Strategy::RedBlue => red_blue(tree, corpus, config),
        Strategy::KTailsExhaustive => ktails_exhaustive(tree, corpus, config),
    }
}

fn blue_states(machine: &Efsm, red: &BTreeSet<StateId>) -> BTreeSet<StateId> {
    red.iter()
        .flat_map(|r| machine.outgoing(*r))
        .map(|t| t.to)
        .filter(|s| !red.contains(s))
        .collect()
}

fn red_blue(mut machine: Efsm, corpus: &Corpus, config: &InferenceConfig) -> Efsm {
    let mut red = BTreeSet::from([machine.initial()]);
    let mut steps = 0;
    while let Some(&blue) = blue_states(&machine, &red).first() {
        if config.max_states_hint.is_some_and(|cap| steps >= cap) {
            log::debug!("step cap reached with {} states", machine.num_states());
            break;
        }
        steps += 1;

        let mut candidates: Vec<MergeCandidate> = red
            .iter()
            .filter_map(|&r| {
                let score = score_pair(&machine, r, blue, config.k).value()?;
                (score >= config.k).then_some(MergeCandidate {
                    red: r,
                    blue,
                    score,
                })
            })
            .collect();
        candidates.sort_by_key(|c| (std::cmp::Reverse(c.score), c.red));

        let merged = candidates.iter().find_map(|c| {
            merge_with_mapping(&machine, c.red, c.blue, corpus, config.guard_open_threshold).ok()
        });
        match merged {
            Some((next, mapping)) => {
                red = red.iter().filter_map(|r| mapping[r.0]).collect();
                machine = next;
            }
            None => {
                red.insert(blue);
            }
        }
    }
    machine
}

fn ktails_exhaustive(mut machine: Efsm, corpus: &Corpus, config: &InferenceConfig) -> Efsm {
    let mut steps = 0;
    loop {
        if config.max_states_hint.is_some_and(|cap| steps >= cap) {
            break;
        }
        steps += 1;
        let all_tails: Vec<_> = machine
            .states()
            .map(|s| tails(&machine, s, config.k))
            .collect();
        let mut candidates = Vec::new();
        for a in machine.states() {
            for b in machine.states().skip(a.0 + 1) {
                if terminal_conflict(&machine, a, b) {
                    continue;
                }
                let score = all_tails[a.0].intersection(&all_tails[b.0]).count();
                if score >= config.k {
                    candidates.push(MergeCandidate {
                        red: a,
                        blue: b,
                        score,
                    });
                }
            }
        }
        candidates.sort_by_key(|c| (std::cmp::Reverse(c.score), c.red, c.blue));
        let merged = candidates.iter().find_map(|c| {
            merge_with_mapping(&machine, c.red, c.blue, corpus, config.guard_open_threshold).ok()
        });
        match merged {
            Some((next, _)) => machine = next,
            None => break,
        }
    }
    machine
}
