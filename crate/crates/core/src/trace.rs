//! Proof scripts to traces.
//!
//! A proof script is lexed into "."-terminated sentences. Sentences between a
//! `Lemma`-like header and its `Qed`/`Defined` terminator are tactic sentences;
//! each one is split on top-level `;` into [`TraceElement`]s. An element that
//! was semicolon-composed with its successor keeps the trailing `;` in its
//! params, so the composition can be rebuilt at search time.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vernacular keywords that open a proof block.
const BLOCK_STARTERS: &[&str] = &[
    "Lemma",
    "Theorem",
    "Fact",
    "Corollary",
    "Remark",
    "Proposition",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("empty tactic sentence")]
    EmptySentence,
    #[error("line {line}: proof of `{lemma}` is never closed by Qed, Defined or Admitted")]
    UnterminatedProof { lemma: String, line: usize },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TraceError {
    fn line(&self) -> usize {
        match self {
            TraceError::UnterminatedProof { line, .. }
            | TraceError::Syntax { line, .. }
            | TraceError::Parse { line, .. }
            | TraceError::Schema { line, .. } => *line,
            _ => 0,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        TraceError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One tactic call: the tactic name and its argument text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TraceElement {
    pub label: String,
    pub params: String,
}

impl TraceElement {
    pub fn new(label: impl Into<String>, params: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            params: params.into(),
        }
    }

    /// True when this element is `;`-composed with the next one.
    pub fn is_composed(&self) -> bool {
        self.params.ends_with(';')
    }

    /// Source text of the element, e.g. `elim diff;` or `auto with arith`.
    pub fn fragment(&self) -> String {
        if self.params.is_empty() {
            self.label.clone()
        } else if self.params.starts_with(';') {
            format!("{}{}", self.label, self.params)
        } else {
            format!("{} {}", self.label, self.params)
        }
    }
}

/// The tactic history of a single lemma.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub lemma_name: String,
    pub elements: Vec<TraceElement>,
    pub source_theory: String,
    /// Full header sentence (`Lemma x : P.`), when the trace came from a script.
    pub statement: Option<String>,
}

impl Trace {
    pub fn new(
        lemma_name: impl Into<String>,
        source_theory: impl Into<String>,
        elements: Vec<TraceElement>,
    ) -> Self {
        Self {
            lemma_name: lemma_name.into(),
            elements,
            source_theory: source_theory.into(),
            statement: None,
        }
    }

    /// Statement to hand to a prover; falls back to the lemma name.
    pub fn statement_or_name(&self) -> &str {
        self.statement.as_deref().unwrap_or(&self.lemma_name)
    }
}

/// An ordered collection of traces with unique lemma names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub traces: Vec<Trace>,
    pub provenance: Vec<PathBuf>,
}

impl Corpus {
    /// Builds a corpus, renaming duplicate lemmas to `name#2`, `name#3`, ...
    pub fn new(traces: Vec<Trace>) -> Self {
        let mut corpus = Corpus::default();
        corpus.extend(traces);
        corpus
    }

    pub fn extend(&mut self, traces: impl IntoIterator<Item = Trace>) {
        let mut taken: BTreeSet<String> =
            self.traces.iter().map(|t| t.lemma_name.clone()).collect();
        let mut next_suffix: HashMap<String, usize> = HashMap::new();
        for mut trace in traces {
            if taken.contains(&trace.lemma_name) {
                let base = trace.lemma_name.clone();
                let n = next_suffix.entry(base.clone()).or_insert(2);
                while taken.contains(&format!("{base}#{n}")) {
                    *n += 1;
                }
                trace.lemma_name = format!("{base}#{n}");
                *n += 1;
            }
            taken.insert(trace.lemma_name.clone());
            self.traces.push(trace);
        }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn get(&self, lemma: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.lemma_name == lemma)
    }

    pub fn lemma_names(&self) -> Vec<String> {
        self.traces.iter().map(|t| t.lemma_name.clone()).collect()
    }

    /// Distinct `source_theory` values in first-appearance order.
    pub fn theories(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.traces
            .iter()
            .filter(|t| seen.insert(t.source_theory.clone()))
            .map(|t| t.source_theory.clone())
            .collect()
    }

    /// Sub-corpus holding only the traces of one theory.
    pub fn theory(&self, name: &str) -> Corpus {
        Corpus {
            traces: self
                .traces
                .iter()
                .filter(|t| t.source_theory == name)
                .cloned()
                .collect(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Collapses whitespace runs to a single space outside string literals and trims.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut pending_space = false;
    for c in text.chars() {
        if !in_string && c.is_whitespace() {
            pending_space = true;
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        if c == '"' {
            in_string = !in_string;
        }
        out.push(c);
    }
    out
}

/// Splits one tactic sentence (without its final ".") into trace elements.
///
/// Splitting happens on `;` at bracket depth 0 outside string literals.
pub fn split_tactic_sentence(sentence: &str) -> Result<Vec<TraceElement>, TraceError> {
    let mut fragments = Vec::new();
    let mut current = String::new();
    let mut depth = 0usize;
    let mut in_string = false;
    for c in sentence.chars() {
        match c {
            '"' => in_string = !in_string,
            '(' | '[' | '{' if !in_string => depth += 1,
            ')' | ']' | '}' if !in_string => depth = depth.saturating_sub(1),
            ';' if !in_string && depth == 0 => {
                fragments.push(std::mem::take(&mut current));
                continue;
            }
            _ => {}
        }
        current.push(c);
    }
    fragments.push(current);

    let last = fragments.len() - 1;
    fragments
        .iter()
        .enumerate()
        .map(|(i, fragment)| {
            let fragment = normalize_whitespace(fragment);
            if fragment.is_empty() {
                return Err(TraceError::EmptySentence);
            }
            let label_end = fragment
                .find(|c: char| c.is_whitespace() || c == ';')
                .unwrap_or(fragment.len());
            let (label, rest) = fragment.split_at(label_end);
            let mut params = rest.trim_start().to_string();
            if i != last {
                params.push(';');
            }
            Ok(TraceElement::new(label, params))
        })
        .collect()
}

#[derive(Debug)]
struct Sentence {
    text: String,
    line: usize,
}

/// Lexes a script into sentences with comments removed. Bullets and focus
/// braces at sentence start are dropped.
fn lex_sentences(source: &str) -> Result<Vec<Sentence>, TraceError> {
    let chars: Vec<char> = source.chars().collect();
    let mut sentences = Vec::new();
    let mut buf = String::new();
    let mut start_line = 1;
    let mut line = 1;
    let mut i = 0;
    let mut in_string = false;
    let mut string_line = 0;

    while i < chars.len() {
        let c = chars[i];
        if in_string {
            if c == '"' {
                in_string = false;
            }
            if c == '\n' {
                line += 1;
            }
            buf.push(c);
            i += 1;
            continue;
        }
        if c == '(' && chars.get(i + 1) == Some(&'*') {
            let comment_line = line;
            let mut depth = 1;
            i += 2;
            while depth > 0 {
                match (chars.get(i), chars.get(i + 1)) {
                    (None, _) => {
                        return Err(TraceError::Syntax {
                            line: comment_line,
                            message: "unterminated comment".into(),
                        })
                    }
                    (Some('('), Some('*')) => {
                        depth += 1;
                        i += 2;
                    }
                    (Some('*'), Some(')')) => {
                        depth -= 1;
                        i += 2;
                    }
                    (Some(ch), _) => {
                        if *ch == '\n' {
                            line += 1;
                        }
                        i += 1;
                    }
                }
            }
            buf.push(' ');
            continue;
        }
        if c == '\n' {
            line += 1;
        }
        let at_start = buf.trim().is_empty();
        if at_start {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if matches!(c, '-' | '+' | '*' | '{' | '}') {
                i += 1;
                continue;
            }
            buf.clear();
            start_line = line;
        }
        if c == '"' {
            in_string = true;
            string_line = line;
        }
        let ends_sentence = c == '.' && chars.get(i + 1).is_none_or(|next| next.is_whitespace());
        if ends_sentence {
            sentences.push(Sentence {
                text: std::mem::take(&mut buf),
                line: start_line,
            });
        } else {
            buf.push(c);
        }
        i += 1;
    }
    if in_string {
        return Err(TraceError::Syntax {
            line: string_line,
            message: "unterminated string literal".into(),
        });
    }
    if !buf.trim().is_empty() {
        sentences.push(Sentence {
            text: buf,
            line: start_line,
        });
    }
    Ok(sentences)
}

fn first_token(text: &str) -> &str {
    text.split_whitespace().next().unwrap_or("")
}

/// Lemma name following the keyword: `Lemma foo (n : nat) : P` gives `foo`.
fn lemma_name(header: &str) -> Option<String> {
    let mut words = header.split_whitespace();
    let mut keyword = words.next()?;
    if matches!(keyword, "Local" | "Global") {
        keyword = words.next()?;
    }
    debug_assert!(BLOCK_STARTERS.contains(&keyword));
    let rest = header.trim_start();
    let after = rest[rest.find(keyword)? + keyword.len()..].trim_start();
    let name: String = after
        .chars()
        .take_while(|c| !c.is_whitespace() && !matches!(c, ':' | '(' | '{' | '['))
        .collect();
    (!name.is_empty()).then_some(name)
}

fn opens_block(text: &str) -> bool {
    let mut words = text.split_whitespace();
    match words.next() {
        Some("Local") | Some("Global") => words.next().is_some_and(|w| BLOCK_STARTERS.contains(&w)),
        Some(w) => BLOCK_STARTERS.contains(&w),
        None => false,
    }
}

struct OpenProof {
    name: String,
    statement: String,
    line: usize,
    elements: Vec<TraceElement>,
}

/// Parses a proof script into one trace per closed proof block.
pub fn parse_proof_script(source_text: &str) -> Result<Vec<Trace>, TraceError> {
    parse_theory(source_text, "")
}

/// Like [`parse_proof_script`], tagging every trace with `theory`.
pub fn parse_theory(source_text: &str, theory: &str) -> Result<Vec<Trace>, TraceError> {
    let mut traces = Vec::new();
    let mut open: Option<OpenProof> = None;

    for sentence in lex_sentences(source_text)? {
        let text = sentence.text.trim();
        if opens_block(text) {
            if let Some(proof) = open.take() {
                return Err(TraceError::UnterminatedProof {
                    lemma: proof.name,
                    line: proof.line,
                });
            }
            let name = lemma_name(text).ok_or_else(|| TraceError::Syntax {
                line: sentence.line,
                message: "missing lemma name".into(),
            })?;
            open = Some(OpenProof {
                name,
                statement: format!("{}.", normalize_whitespace(text)),
                line: sentence.line,
                elements: Vec::new(),
            });
            continue;
        }
        let Some(proof) = open.as_mut() else {
            continue;
        };
        match first_token(text) {
            "Proof" => {}
            "Qed" | "Defined" => {
                let proof = open.take().expect("open proof");
                traces.push(Trace {
                    lemma_name: proof.name,
                    elements: proof.elements,
                    source_theory: theory.to_string(),
                    statement: Some(proof.statement),
                });
            }
            "Admitted" | "Abort" => {
                let proof = open.take().expect("open proof");
                log::warn!(
                    "line {}: skipping `{}`, proof not completed",
                    proof.line,
                    proof.name
                );
            }
            _ => {
                let elements = split_tactic_sentence(text).map_err(|e| match e {
                    TraceError::EmptySentence => TraceError::Syntax {
                        line: sentence.line,
                        message: "empty tactic in sentence".into(),
                    },
                    other => other,
                })?;
                proof.elements.extend(elements);
            }
        }
    }

    if let Some(proof) = open {
        return Err(TraceError::UnterminatedProof {
            lemma: proof.name,
            line: proof.line,
        });
    }
    Ok(traces)
}

fn is_trace_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("json")
    )
}

/// Loads proof scripts and trace files, in path order.
///
/// `.jsonl`/`.json` files are read as trace files; anything else is parsed as
/// a proof script whose theory name is the file stem.
pub fn load_corpus<P: AsRef<Path>>(paths: &[P]) -> Result<Corpus, TraceError> {
    let mut corpus = Corpus::default();
    for path in paths {
        let path = path.as_ref();
        let traces = if is_trace_file(path) {
            read_traces(path)?.traces
        } else {
            let text = fs::read_to_string(path).map_err(|e| TraceError::io(path, e))?;
            let theory = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            parse_theory(&text, &theory).map_err(|e| TraceError::Parse {
                file: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?
        };
        corpus.extend(traces);
        corpus.provenance.push(path.to_path_buf());
    }
    Ok(corpus)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRecord {
    l: String,
    v: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceRecord {
    lemma: String,
    theory: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    statement: Option<String>,
    events: Vec<EventRecord>,
}

impl From<&Trace> for TraceRecord {
    fn from(t: &Trace) -> Self {
        TraceRecord {
            lemma: t.lemma_name.clone(),
            theory: t.source_theory.clone(),
            statement: t.statement.clone(),
            events: t
                .elements
                .iter()
                .map(|e| EventRecord {
                    l: e.label.clone(),
                    v: e.params.clone(),
                })
                .collect(),
        }
    }
}

fn validate(record: TraceRecord, line: usize) -> Result<Trace, TraceError> {
    let schema = |message: String| TraceError::Schema { line, message };
    for event in &record.events {
        if event.l.is_empty() || event.l.contains(char::is_whitespace) || event.l.contains(';') {
            return Err(schema(format!("invalid label {:?}", event.l)));
        }
        if event.v.starts_with(char::is_whitespace) {
            return Err(schema(format!(
                "params {:?} start with whitespace",
                event.v
            )));
        }
    }
    if record.events.last().is_some_and(|e| e.v.ends_with(';')) {
        return Err(schema(format!(
            "trace `{}` ends inside a ';' composition",
            record.lemma
        )));
    }
    Ok(Trace {
        lemma_name: record.lemma,
        source_theory: record.theory,
        statement: record.statement,
        elements: record
            .events
            .into_iter()
            .map(|e| TraceElement::new(e.l, e.v))
            .collect(),
    })
}

/// Serializes one trace as a single JSON line (no trailing newline).
pub fn trace_to_json_line(trace: &Trace) -> String {
    serde_json::to_string(&TraceRecord::from(trace)).expect("trace records always serialize")
}

pub fn write_traces(corpus: &Corpus, path: &Path) -> Result<(), TraceError> {
    let file = fs::File::create(path).map_err(|e| TraceError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for trace in &corpus.traces {
        writeln!(out, "{}", trace_to_json_line(trace)).map_err(|e| TraceError::io(path, e))?;
    }
    out.flush().map_err(|e| TraceError::io(path, e))
}

/// Reads a JSON-lines trace file. Provenance is not persisted, so the
/// returned corpus has an empty provenance list.
pub fn read_traces(path: &Path) -> Result<Corpus, TraceError> {
    let file = fs::File::open(path).map_err(|e| TraceError::io(path, e))?;
    let mut traces = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| TraceError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(&line).map_err(|e| TraceError::Schema {
            line: idx + 1,
            message: e.to_string(),
        })?;
        traces.push(validate(record, idx + 1)?);
    }
    Ok(Corpus::new(traces))
}
