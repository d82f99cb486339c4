//! Learning finite-state models of tactic usage from proof traces and using
//! them to drive breadth-first proof search.

pub mod efsm;
pub mod eval;
pub mod inference;
pub mod prover;
pub mod search;
pub mod trace;

pub use efsm::{build_prefix_tree, Efsm, Guard, StateId, Transition};
pub use eval::{EvalConfig, EvalReport, ReportFormat};
pub use inference::{infer, InferenceConfig, Strategy};
pub use prover::{MockBackend, MockWorld, ProverBackend, ProverSession, SubprocessBackend};
pub use search::{bfs_search, ProofResult, SearchConfig};
pub use trace::{Corpus, Trace, TraceElement};
