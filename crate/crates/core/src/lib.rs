//! Core of the EvoGit orchestrator: the phylogenetic version graph, the
//! Git backend, diagnostics, agents, evolutionary operators and the run
//! loop.

pub mod agents;
pub mod canonical;
pub mod diagnostics;
pub mod evolution;
pub mod graph;
pub mod run;
pub mod vcs;

pub use graph::{ComparisonLedger, Evidence, GraphError, PhyloGraph, SharedGraph, VersionId};
pub use vcs::{ChangeSet, FileTree, GitStore, MergeOutcome, NotePayload};
