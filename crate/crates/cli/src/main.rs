use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context, Result};
use clap::{CommandFactory, Parser, Subcommand};
use sepia_core::efsm::{to_dot, Efsm};
use sepia_core::eval::{
    evaluate_theories, iterate_adaptive, render_report, run_baseline, EvalConfig, EvalReport,
    ReportFormat,
};
use sepia_core::inference::{infer, InferenceConfig, Strategy};
use sepia_core::prover::{
    MockBackend, MockWorld, ProverBackend, SubprocessBackend, SubprocessConfig,
};
use sepia_core::search::{bfs_search, render_result, SearchConfig, SearchError};
use sepia_core::trace::{load_corpus, read_traces, write_traces, Corpus};

const BACKEND_ENV: &str = "SEPIA_BACKEND_CONFIG";

#[derive(Parser)]
#[command(
    name = "sepia",
    version,
    about = "Learn tactic models from proof traces and search for proofs"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract tactic traces from proof scripts (or existing .jsonl trace files).
    Extract {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Infer a model from a trace file.
    Infer {
        traces: PathBuf,
        #[arg(long, default_value = "redblue")]
        strategy: Strategy,
        /// Tail length used to score merge candidates.
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        guard_open_threshold: usize,
        /// Stop after this many merge/promote steps.
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Search for a proof of one lemma guided by a model.
    Search {
        model: PathBuf,
        #[arg(long)]
        lemma: String,
        /// Statement sent to the prover; defaults to the lemma name.
        #[arg(long)]
        statement: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        budget: u64,
        /// Wall-clock limit in seconds.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long)]
        max_depth: Option<usize>,
        /// Extra parameter tried on open guards (repeatable).
        #[arg(long = "param")]
        params: Vec<String>,
        /// mock:<fixture.json> or subprocess:<config.json>
        #[arg(long)]
        backend: Option<String>,
    },
    /// k-folds cross-validation over a trace file.
    Eval {
        traces: PathBuf,
        /// Number of folds.
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        budget: u64,
        /// Per-lemma wall-clock limit in seconds.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long)]
        backend: Option<String>,
        #[arg(long, default_value = "redblue")]
        strategy: Strategy,
        /// Tail length used to score merge candidates.
        #[arg(long, default_value_t = 1)]
        merge_k: usize,
        #[arg(long, default_value_t = 8)]
        guard_open_threshold: usize,
        /// Feed found proofs back into the corpus for this many rounds.
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        /// Evaluate the whole corpus as one theory.
        #[arg(long)]
        pooled: bool,
        #[arg(long, default_value = "tsv")]
        format: ReportFormat,
        /// Write per-lemma results as JSON lines.
        #[arg(long)]
        per_lemma: Option<PathBuf>,
        /// Write the corpus including proofs found by all rounds.
        #[arg(long)]
        augmented: Option<PathBuf>,
        /// Folds evaluated concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Value of the Library column.
        #[arg(long, default_value = "")]
        library: String,
        #[arg(long)]
        skip_baseline: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Count lemmas closed by the prover's built-in automation.
    Baseline {
        traces: PathBuf,
        #[arg(long)]
        backend: Option<String>,
    },
    /// Render a model as Graphviz DOT.
    ExportDot {
        model: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Marks errors that come from the prover backend (exit code 2).
#[derive(Debug)]
struct BackendFailure(anyhow::Error);

impl std::fmt::Display for BackendFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for BackendFailure {}

fn backend_failure(e: impl Into<anyhow::Error>) -> anyhow::Error {
    BackendFailure(e.into()).into()
}

fn open_backend(selector: Option<&str>) -> Result<Box<dyn ProverBackend>> {
    let env = std::env::var(BACKEND_ENV).ok();
    let selector = selector
        .map(str::to_string)
        .or(env)
        .ok_or_else(|| anyhow!("no backend given: use --backend or set {BACKEND_ENV}"))?;
    let (kind, path) = match selector.split_once(':') {
        Some((kind @ ("mock" | "subprocess"), path)) => (kind, path),
        _ => ("subprocess", selector.as_str()),
    };
    let path = Path::new(path);
    if kind == "mock" {
        let world = MockWorld::read(path).map_err(backend_failure)?;
        Ok(Box::new(MockBackend::new(world)))
    } else {
        let config = SubprocessConfig::read(path).map_err(backend_failure)?;
        Ok(Box::new(
            SubprocessBackend::new(config).map_err(backend_failure)?,
        ))
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .context("writing to stdout"),
    }
}

fn seconds(value: Option<f64>) -> Result<Option<Duration>> {
    value
        .map(|s| Duration::try_from_secs_f64(s).map_err(|_| anyhow!("invalid timeout {s}")))
        .transpose()
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    read_traces(path).with_context(|| format!("reading traces from {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let started = Instant::now();
    match cli.command {
        Command::Extract { files, output } => {
            let corpus = load_corpus(&files)?;
            write_traces(&corpus, &output)?;
            eprintln!("{} traces from {} files", corpus.len(), files.len());
        }
        Command::Infer {
            traces,
            strategy,
            k,
            guard_open_threshold,
            max_steps,
            output,
        } => {
            let corpus = read_corpus(&traces)?;
            let config = InferenceConfig {
                strategy,
                k,
                max_states_hint: max_steps,
                guard_open_threshold,
            };
            let model = infer(&corpus, &config);
            model.write_json(&output)?;
            eprintln!(
                "{} states, {} transitions",
                model.num_states(),
                model.transitions().len()
            );
        }
        Command::Search {
            model,
            lemma,
            statement,
            budget,
            timeout,
            max_depth,
            params,
            backend,
        } => {
            let machine = Efsm::read_json(&model)?;
            let config = SearchConfig {
                tactic_budget: budget,
                timeout: seconds(timeout)?,
                max_depth,
                extra_params: params,
                ..SearchConfig::default()
            };
            let backend = open_backend(backend.as_deref())?;
            let statement = statement.unwrap_or_else(|| lemma.clone());
            let result = match bfs_search(&machine, backend.as_ref(), &lemma, &statement, &config) {
                Ok(r) => r,
                Err(e @ SearchError::Prover(_)) => return Err(backend_failure(e)),
                Err(e) => return Err(e.into()),
            };
            print!("{}", render_result(&result, started.elapsed()));
            if !result.found {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Eval {
            traces,
            k,
            seed,
            budget,
            timeout,
            backend,
            strategy,
            merge_k,
            guard_open_threshold,
            rounds,
            pooled,
            format,
            per_lemma,
            augmented,
            jobs,
            library,
            skip_baseline,
            output,
        } => {
            let corpus = read_corpus(&traces)?;
            let config = EvalConfig {
                k,
                seed,
                inference: InferenceConfig {
                    strategy,
                    k: merge_k,
                    max_states_hint: None,
                    guard_open_threshold,
                },
                search: SearchConfig {
                    tactic_budget: budget,
                    timeout: seconds(timeout)?,
                    ..SearchConfig::default()
                },
                jobs,
            };
            let backend = open_backend(backend.as_deref())?;
            let mut reports = if rounds <= 1 {
                evaluate_theories(&corpus, &config, backend.as_ref(), pooled, false)?
            } else {
                let groups = if pooled {
                    vec![corpus.clone()]
                } else {
                    corpus.theories().iter().map(|t| corpus.theory(t)).collect()
                };
                let mut last = Vec::new();
                let mut all = Corpus::default();
                for group in &groups {
                    let (grown, mut history) =
                        iterate_adaptive(group, rounds, &config, backend.as_ref())?;
                    for (round, report) in history.iter().enumerate() {
                        log::info!(
                            "{} round {}: {} proved",
                            report.theory,
                            round + 1,
                            report.total_proved
                        );
                    }
                    all.extend(grown.traces);
                    last.push(history.pop().expect("at least one round"));
                }
                if let Some(path) = &augmented {
                    write_traces(&all, path)?;
                }
                last
            };
            if !skip_baseline {
                let groups: Vec<Corpus> = if pooled {
                    vec![corpus.clone()]
                } else {
                    corpus.theories().iter().map(|t| corpus.theory(t)).collect()
                };
                for (report, group) in reports.iter_mut().zip(&groups) {
                    report.baseline_proved = run_baseline(group, backend.as_ref());
                }
            }
            for report in &mut reports {
                report.library = library.clone();
            }
            if let Some(path) = &per_lemma {
                let lines: String = reports.iter().map(EvalReport::per_lemma_jsonl).collect();
                fs::write(path, lines).with_context(|| format!("writing {}", path.display()))?;
            }
            write_output(output.as_deref(), &render_report(&reports, format))?;
        }
        Command::Baseline { traces, backend } => {
            let corpus = read_corpus(&traces)?;
            let backend = open_backend(backend.as_deref())?;
            let proved = run_baseline(&corpus, backend.as_ref());
            println!(
                "{proved} of {} lemmas proved by the built-in automation",
                corpus.len()
            );
        }
        Command::ExportDot { model, output } => {
            let machine = Efsm::read_json(&model)?;
            write_output(output.as_deref(), &to_dot(&machine))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn usage_error(err: clap::Error, args: &[String]) -> ExitCode {
    let _ = err.print();
    let mut command = Cli::command();
    command.build();
    let sub = args
        .iter()
        .skip(1)
        .find(|a| !a.starts_with('-'))
        .and_then(|name| command.find_subcommand_mut(name).map(|c| c.render_help()));
    let help = sub.unwrap_or_else(|| command.render_help());
    eprintln!("\n{help}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return usage_error(e, &args),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) if e.is::<BackendFailure>() => {
            eprintln!("backend error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
