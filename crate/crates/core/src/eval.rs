//! k-folds evaluation harness.
//!
//! Each theory's lemmas are shuffled with a seeded generator and dealt
//! round-robin into `k` folds. For every fold a model is inferred from the
//! other folds and each held-out lemma is searched for. Found proofs are
//! classified as new (not a training sequence) and shorter (fewer elements
//! than the original proof).
//!
//! Proofs found by earlier rounds of [`iterate_adaptive`] are added to the
//! corpus as `lemma@rN` traces. They are training material only: they never
//! enter a test fold, and they are withheld from the fold that tests their
//! own lemma.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::inference::{infer, InferenceConfig};
use crate::prover::{run_builtin_baseline, ProverBackend};
use crate::search::{bfs_search, SearchConfig};
use crate::trace::{Corpus, Trace, TraceElement};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("cannot split {lemmas} lemmas into {k} folds")]
    TooFewLemmas { lemmas: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("rounds must be at least 1")]
    NoRounds,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn fold_of(&self, lemma: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|l| l == lemma))
    }
}

/// If `name` is an adaptive-loop augmentation (`lemma@rN`), its base lemma.
pub fn augmentation_base(name: &str) -> Option<&str> {
    let (base, round) = name.rsplit_once("@r")?;
    (!round.is_empty() && round.bytes().all(|b| b.is_ascii_digit())).then_some(base)
}

fn test_lemmas(corpus: &Corpus) -> Vec<&Trace> {
    corpus
        .traces
        .iter()
        .filter(|t| augmentation_base(&t.lemma_name).is_none())
        .collect()
}

pub fn partition_kfolds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    let mut names: Vec<String> = test_lemmas(corpus)
        .iter()
        .map(|t| t.lemma_name.clone())
        .collect();
    if names.len() < k {
        return Err(EvalError::TooFewLemmas {
            lemmas: names.len(),
            k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    names.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, name) in names.into_iter().enumerate() {
        folds[i % k].push(name);
    }
    Ok(FoldPlan { k, seed, folds })
}

/// Training corpus of fold `index`: everything except the fold's lemmas and
/// their augmentations.
pub fn fold_training(corpus: &Corpus, plan: &FoldPlan, index: usize) -> Corpus {
    let held_out: BTreeSet<&str> = plan.folds[index].iter().map(String::as_str).collect();
    let traces = corpus
        .traces
        .iter()
        .filter(|t| {
            let base = augmentation_base(&t.lemma_name).unwrap_or(&t.lemma_name);
            !held_out.contains(base)
        })
        .cloned()
        .collect();
    Corpus {
        traces,
        provenance: corpus.provenance.clone(),
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub k: usize,
    pub seed: u64,
    pub inference: InferenceConfig,
    pub search: SearchConfig,
    /// Folds evaluated concurrently.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 10,
            seed: 0,
            inference: InferenceConfig::default(),
            search: SearchConfig::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaOutcome {
    pub theory: String,
    pub lemma: String,
    pub fold: usize,
    pub found: bool,
    pub is_new: bool,
    pub is_shorter: bool,
    pub tactics_evaluated: u64,
    pub elapsed_seconds: f64,
    pub proof: Vec<String>,
    #[serde(skip)]
    pub elements: Vec<TraceElement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub library: String,
    pub theory: String,
    pub size: usize,
    pub total_proved: usize,
    pub new_count: usize,
    pub shorter_count: usize,
    pub baseline_proved: usize,
    pub per_lemma: Vec<LemmaOutcome>,
}

impl EvalReport {
    fn from_rows(theory: String, size: usize, per_lemma: Vec<LemmaOutcome>) -> Self {
        let proved = || per_lemma.iter().filter(|r| r.found);
        EvalReport {
            library: String::new(),
            theory,
            size,
            total_proved: proved().count(),
            new_count: proved().filter(|r| r.is_new).count(),
            shorter_count: proved().filter(|r| r.is_shorter).count(),
            baseline_proved: 0,
            per_lemma,
        }
    }

    /// Per-lemma rows as JSON lines.
    pub fn per_lemma_jsonl(&self) -> String {
        self.per_lemma
            .iter()
            .map(|row| serde_json::to_string(row).expect("rows always serialize") + "\n")
            .collect()
    }
}

fn evaluate_fold(
    corpus: &Corpus,
    plan: &FoldPlan,
    index: usize,
    config: &EvalConfig,
    backend: &dyn ProverBackend,
) -> Vec<LemmaOutcome> {
    let training = fold_training(corpus, plan, index);
    let model = infer(&training, &config.inference);
    log::info!(
        "fold {index}: {} training traces, model with {} states",
        training.len(),
        model.num_states()
    );
    let held_out: BTreeSet<&str> = plan.folds[index].iter().map(String::as_str).collect();
    test_lemmas(corpus)
        .into_iter()
        .filter(|t| held_out.contains(t.lemma_name.as_str()))
        .map(|original| {
            let mut row = LemmaOutcome {
                theory: original.source_theory.clone(),
                lemma: original.lemma_name.clone(),
                fold: index,
                found: false,
                is_new: false,
                is_shorter: false,
                tactics_evaluated: 0,
                elapsed_seconds: 0.0,
                proof: Vec::new(),
                elements: Vec::new(),
                error: None,
            };
            match bfs_search(
                &model,
                backend,
                &original.lemma_name,
                original.statement_or_name(),
                &config.search,
            ) {
                Ok(mut result) => {
                    result.classify(&training, Some(original));
                    row.found = result.found;
                    row.is_new = result.is_new;
                    row.is_shorter = result.is_shorter;
                    row.tactics_evaluated = result.tactics_evaluated;
                    row.elapsed_seconds = result.elapsed_seconds;
                    row.proof = result.sentences;
                    row.elements = result.elements;
                }
                Err(e) => {
                    log::warn!("{}: {e}", original.lemma_name);
                    row.error = Some(e.to_string());
                }
            }
            row
        })
        .collect()
}

/// Runs k-folds cross-validation over the corpus. The report's theory is the
/// single theory of the corpus, or `*` when it mixes several.
pub fn run_cross_validation(
    corpus: &Corpus,
    config: &EvalConfig,
    backend: &dyn ProverBackend,
) -> Result<EvalReport, EvalError> {
    let plan = partition_kfolds(corpus, config.k, config.seed)?;
    let jobs = config.jobs.clamp(1, plan.k);
    let mut per_fold: Vec<Vec<LemmaOutcome>> = if jobs == 1 {
        (0..plan.k)
            .map(|i| evaluate_fold(corpus, &plan, i, config, backend))
            .collect()
    } else {
        let results = Mutex::new(vec![Vec::new(); plan.k]);
        let next = AtomicUsize::new(0);
        thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= plan.k {
                        break;
                    }
                    let rows = evaluate_fold(corpus, &plan, i, config, backend);
                    results
                        .lock()
                        .expect("no worker panics while holding the lock")[i] = rows;
                });
            }
        });
        results.into_inner().expect("workers finished")
    };
    let rows: Vec<LemmaOutcome> = per_fold.iter_mut().flat_map(std::mem::take).collect();
    let size = test_lemmas(corpus).len();
    let theories: BTreeSet<&str> = test_lemmas(corpus)
        .iter()
        .map(|t| t.source_theory.as_str())
        .collect();
    let theory = match theories.len() {
        1 => theories.into_iter().next().unwrap_or_default().to_string(),
        _ => "*".to_string(),
    };
    Ok(EvalReport::from_rows(theory, size, rows))
}

/// Number of lemmas closed by the built-in automation command. Backend
/// errors count as not proved.
pub fn run_baseline(corpus: &Corpus, backend: &dyn ProverBackend) -> usize {
    test_lemmas(corpus)
        .iter()
        .filter(|t| {
            run_builtin_baseline(backend, &t.lemma_name, t.statement_or_name()).unwrap_or_else(
                |e| {
                    log::warn!("baseline on {}: {e}", t.lemma_name);
                    false
                },
            )
        })
        .count()
}

/// Evaluates each theory separately (or the whole corpus when `pooled`),
/// optionally filling the baseline column.
pub fn evaluate_theories(
    corpus: &Corpus,
    config: &EvalConfig,
    backend: &dyn ProverBackend,
    pooled: bool,
    with_baseline: bool,
) -> Result<Vec<EvalReport>, EvalError> {
    let groups = if pooled {
        vec![corpus.clone()]
    } else {
        corpus.theories().iter().map(|t| corpus.theory(t)).collect()
    };
    groups
        .iter()
        .map(|group| {
            let mut report = run_cross_validation(group, config, backend)?;
            if with_baseline {
                report.baseline_proved = run_baseline(group, backend);
            }
            Ok(report)
        })
        .collect()
}

/// Repeated cross-validation where every round's newly found proofs are fed
/// back into the corpus before the next round.
pub fn iterate_adaptive(
    corpus: &Corpus,
    rounds: usize,
    config: &EvalConfig,
    backend: &dyn ProverBackend,
) -> Result<(Corpus, Vec<EvalReport>), EvalError> {
    if rounds == 0 {
        return Err(EvalError::NoRounds);
    }
    let mut current = corpus.clone();
    let mut reports = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let report = run_cross_validation(&current, config, backend)?;
        // a proof is new for its lemma when no trace of that lemma has it yet
        let mut known: BTreeSet<(String, Vec<TraceElement>)> = current
            .traces
            .iter()
            .map(|t| {
                let base = augmentation_base(&t.lemma_name).unwrap_or(&t.lemma_name);
                (base.to_string(), t.elements.clone())
            })
            .collect();
        let originals: BTreeMap<&str, &Trace> = current
            .traces
            .iter()
            .map(|t| (t.lemma_name.as_str(), t))
            .collect();
        let mut additions = Vec::new();
        for row in report.per_lemma.iter().filter(|r| r.found) {
            if !known.insert((row.lemma.clone(), row.elements.clone())) {
                continue;
            }
            let original = originals[row.lemma.as_str()];
            additions.push(Trace {
                lemma_name: format!("{}@r{round}", row.lemma),
                elements: row.elements.clone(),
                source_theory: original.source_theory.clone(),
                statement: original.statement.clone(),
            });
        }
        log::info!("round {round}: {} new traces", additions.len());
        current.extend(additions);
        reports.push(report);
    }
    Ok((current, reports))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!(
                "unknown format `{other}` (expected tsv or markdown)"
            )),
        }
    }
}

/// `count (pct%)` with the percentage of `size` rounded down.
pub fn count_with_percent(count: usize, size: usize) -> String {
    let pct = (count * 100).checked_div(size).unwrap_or(0);
    format!("{count} ({pct}%)")
}

const COLUMNS: [&str; 7] = [
    "Library", "Theory", "Size", "Total", "New", "Shorter", "Baseline",
];

pub fn render_report(reports: &[EvalReport], format: ReportFormat) -> String {
    let rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            [
                r.library.clone(),
                r.theory.clone(),
                r.size.to_string(),
                count_with_percent(r.total_proved, r.size),
                r.new_count.to_string(),
                r.shorter_count.to_string(),
                count_with_percent(r.baseline_proved, r.size),
            ]
        })
        .collect();
    let mut out = String::new();
    match format {
        ReportFormat::Tsv => {
            out.push_str(&COLUMNS.join("\t"));
            out.push('\n');
            for row in rows {
                out.push_str(&row.join("\t"));
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| {} |", COLUMNS.join(" | "));
            out.push_str("|---|---|---:|---:|---:|---:|---:|\n");
            for row in rows {
                let _ = writeln!(out, "| {} |", row.join(" | "));
            }
        }
    }
    out
}
