//! A run directory and everything that happens in it: initialization,
//! crash recovery, validation, checkpoints and the population scheduler.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.toml      frozen configuration
//! repo.git/        bare repository: versions, branches, notes
//! journal.jsonl    append-only event log (the commit point for the graph)
//! work/agent-<i>/  per-agent working directories for diagnostics
//! llm/log.jsonl    prompts and raw LLM responses
//! report.json      RunReport of the last completed run
//! run.lock         exclusive lock held by the writing process
//! ```

mod config;
mod control;
mod feedback;
mod journal;
mod report;
mod scheduler;
mod state;
mod views;

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock, RwLockReadGuard};
use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::run_checks;
use crate::evolution::{Candidate, EvolutionError};
use crate::graph::{GraphError, PhyloGraph, VersionId};
use crate::vcs::{BranchName, CommitMeta, FileTree, GitStore, VcsError, MAIN_BRANCH};

pub use config::{AgentsSection, Config, JudgeKind, JudgeSection, LlmSection, RunSection, SchedulerKind, Strategy, FROZEN_CONFIG};
pub use control::{ControlError, Phase, RunControl};
pub use feedback::{CheckpointHandler, CheckpointView, FeedbackRecord, Headless, Interactive, PruneSpec, ScriptEntry, Scripted};
pub use journal::{read_events, Event, Journal, RetireReason, JOURNAL_FILE};
pub use report::{RunReport, REPORT_FILE};
pub use scheduler::{iteration_seed, run_population, Population};
pub use state::{AgentStats, CheckpointEntry, Origin, RoundSample, RunState};
pub use views::{
    export_dot, frontier_view, graph_view, import_graph, notes_view, tree_view, DiffStats, EdgeView, FrontierEntry,
    GraphView, NodeStatus, NodeView, NotesView, TreeEntry,
};

pub const REPO_DIR: &str = "repo.git";
pub const LOCK_FILE: &str = "run.lock";
pub const TEST_MODE_ENV: &str = "EVOGIT_TEST_MODE";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{} is locked by another process", .0.display())]
    Locked(PathBuf),
    #[error("{} exists and is not empty", .0.display())]
    NotEmpty(PathBuf),
    #[error("configuration differs from the one frozen in {}", .0.display())]
    ConfigChanged(PathBuf),
    #[error("journal: {0}")]
    Journal(String),
    #[error("invalid feedback: {0}")]
    Feedback(String),
    #[error("run directory is open read-only")]
    ReadOnly,
    #[error(transparent)]
    Vcs(#[from] VcsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}

impl RunError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Process-level switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Fixed commit metadata, zeroed durations and wall-clock: the whole
    /// repository becomes a function of configuration and seeds.
    pub test_mode: bool,
}

impl RunOptions {
    pub fn from_env() -> Self {
        RunOptions {
            test_mode: std::env::var(TEST_MODE_ENV).is_ok_and(|v| v == "1"),
        }
    }

    pub fn meta(&self) -> CommitMeta {
        if self.test_mode {
            CommitMeta::fixed()
        } else {
            CommitMeta::wall_clock()
        }
    }
}

/// Result of [`Run::validate`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub versions: usize,
    pub retired: usize,
    pub frontier: usize,
    pub live_agents: usize,
    pub rounds_done: usize,
    pub problems: Vec<String>,
}

/// An open run directory.
pub struct Run {
    dir: PathBuf,
    config: Config,
    options: RunOptions,
    store: GitStore,
    state: RwLock<RunState>,
    journal: Option<Mutex<Journal>>,
    _lock: Option<File>,
}

fn acquire_lock(dir: &Path) -> Result<File, RunError> {
    let path = dir.join(LOCK_FILE);
    let file = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&path)
        .map_err(|e| RunError::io(&path, e))?;
    match file.try_lock() {
        Ok(()) => Ok(file),
        Err(std::fs::TryLockError::WouldBlock) => Err(RunError::Locked(dir.to_path_buf())),
        Err(std::fs::TryLockError::Error(e)) => Err(RunError::io(&path, e)),
    }
}

impl Run {
    /// Creates the run directory, commits `seed` as the root version with
    /// `brief` and its diagnostics in the note, and points every agent
    /// branch at it.
    pub fn init(config: &Config, seed: &FileTree, brief: &str, options: RunOptions) -> Result<Run, RunError> {
        config.validate()?;
        let dir = config.run_dir.clone();
        if dir.exists() {
            let mut entries = std::fs::read_dir(&dir).map_err(|e| RunError::io(&dir, e))?;
            if entries.next().is_some() {
                return Err(RunError::NotEmpty(dir));
            }
        }
        std::fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
        let lock = acquire_lock(&dir)?;
        config.freeze(&dir)?;
        let (store, root) = GitStore::init(&dir.join(REPO_DIR), seed, brief, options.meta())?;
        let workdir = dir.join("work").join("init");
        run_checks(&store, &root, &config.toolchain(), &workdir, options.test_mode)?;
        for i in 0..config.run.agents {
            store.set_branch(&BranchName::agent(i), &root)?;
        }
        let mut journal = Journal::create(&dir.join(JOURNAL_FILE), true)?;
        let event = Event::Root { id: root };
        let mut state = RunState::new(config.run.agents, config.run.comment_limit);
        state.apply(&event)?;
        journal.append(&event)?;
        Ok(Run {
            dir,
            config: Config::load_frozen(&config.run_dir)?,
            options,
            store,
            state: RwLock::new(state),
            journal: Some(Mutex::new(journal)),
            _lock: Some(lock),
        })
    }

    /// Opens for writing: takes the lock, replays the journal and repairs
    /// whatever a crash left behind.
    pub fn open(dir: &Path, options: RunOptions) -> Result<Run, RunError> {
        let lock = acquire_lock(dir)?;
        let config = Config::load_frozen(dir)?;
        let store = GitStore::open(&dir.join(REPO_DIR), options.meta())?;
        let cleared = store.clear_stale_locks()?;
        if cleared > 0 {
            log::warn!("removed {cleared} stale repository lock file(s)");
        }
        let (journal, events) = Journal::open(&dir.join(JOURNAL_FILE), true)?;
        let state = RunState::replay(&events, config.run.agents, config.run.comment_limit)?;
        let run = Run {
            dir: dir.to_path_buf(),
            config,
            options,
            store,
            state: RwLock::new(state),
            journal: Some(Mutex::new(journal)),
            _lock: Some(lock),
        };
        run.recover()?;
        Ok(run)
    }

    /// Opens without the lock for inspection. Writes are refused.
    pub fn open_readonly(dir: &Path, options: RunOptions) -> Result<Run, RunError> {
        let config = Config::load_frozen(dir)?;
        let store = GitStore::open(&dir.join(REPO_DIR), options.meta())?;
        let (events, _) = read_events(&dir.join(JOURNAL_FILE))?;
        let state = RunState::replay(&events, config.run.agents, config.run.comment_limit)?;
        Ok(Run {
            dir: dir.to_path_buf(),
            config,
            options,
            store,
            state: RwLock::new(state),
            journal: None,
            _lock: None,
        })
    }

    /// Brings refs and notes in line with the journal: agent branches point
    /// at their heads, scratch branches are gone, retired refs mirror the
    /// tombstones, and checkpoint comments are present on their notes.
    fn recover(&self) -> Result<(), RunError> {
        let state = self.state.read();
        for (i, head) in state.heads.iter().enumerate() {
            let branch = BranchName::agent(i);
            if self.store.branch_head(&branch)?.as_ref() != Some(head) {
                log::warn!("recovery: moving {} to {}", branch.as_str(), head.short());
                self.store.set_branch(&branch, head)?;
            }
            self.store.delete_branch(&BranchName::scratch(i))?;
        }
        let graph_retired: BTreeSet<VersionId> = state.graph.retired().into_iter().collect();
        let ref_retired: BTreeSet<VersionId> = self.store.retired_refs()?.into_iter().collect();
        for id in graph_retired.difference(&ref_retired) {
            self.store.mark_retired(id)?;
        }
        for id in ref_retired.difference(&graph_retired) {
            self.store.unmark_retired(id)?;
        }
        for rec in state.checkpoints.iter().filter_map(|c| c.feedback.as_ref()) {
            let latest = state
                .checkpoints
                .iter()
                .filter_map(|c| c.feedback.as_ref())
                .filter(|r| r.selected == rec.selected && r.comment.is_some())
                .last();
            if let Some(comment) = latest.and_then(|r| r.comment.clone()) {
                let mut note = self.store.read_note(&rec.selected)?.unwrap_or_default();
                if note.feedback.as_ref() != Some(&comment) {
                    note.feedback = Some(comment);
                    self.store.attach_note(&rec.selected, &note)?;
                }
            }
        }
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn options(&self) -> RunOptions {
        self.options
    }

    pub fn store(&self) -> &GitStore {
        &self.store
    }

    pub fn state(&self) -> RwLockReadGuard<'_, RunState> {
        self.state.read()
    }

    pub fn graph_snapshot(&self) -> PhyloGraph {
        self.state.read().graph.clone()
    }

    pub fn is_writable(&self) -> bool {
        self.journal.is_some()
    }

    pub fn workdir(&self, agent: usize) -> PathBuf {
        self.dir.join("work").join(format!("agent-{agent}"))
    }

    /// Replays the journal from disk into the in-memory state. Lets a
    /// read-only handle follow a run owned by another process.
    pub fn refresh(&self) -> Result<(), RunError> {
        let (events, _) = read_events(&self.dir.join(JOURNAL_FILE))?;
        let state = RunState::replay(&events, self.config.run.agents, self.config.run.comment_limit)?;
        *self.state.write() = state;
        Ok(())
    }

    /// Applies `event` to the state and makes it durable, in that order,
    /// under the state's write lock so journal order equals apply order.
    pub(crate) fn record(&self, event: Event) -> Result<(), RunError> {
        let journal = self.journal.as_ref().ok_or(RunError::ReadOnly)?;
        let mut state = self.state.write();
        state.apply(&event)?;
        journal.lock().append(&event)
    }

    /// Inserts a judged candidate: journal line, graph node and verdicts,
    /// then the agent branch moves and the scratch branch goes away.
    pub fn accept(&self, agent: usize, round: usize, candidate: &Candidate) -> Result<(), RunError> {
        self.record(Event::Node {
            id: candidate.id.clone(),
            parents: candidate.parents.clone(),
            agent,
            round,
            operation: candidate.operation,
        })?;
        self.store.set_branch(&BranchName::agent(agent), &candidate.id)?;
        self.store.delete_branch(&BranchName::scratch(agent))?;
        Ok(())
    }

    /// Marks `agent` failed. Its head is retired when it is on the frontier
    /// and not the only member, since nobody would extend it.
    pub fn fail_worker(&self, agent: usize, round: usize, error: String) -> Result<(), RunError> {
        log::error!("agent-{agent} failed in round {round}: {error}");
        self.record(Event::WorkerFailed { agent, round, error })?;
        let _ = self.store.delete_branch(&BranchName::scratch(agent));
        let (head, frontier) = {
            let s = self.state.read();
            (s.heads[agent].clone(), s.graph.active_frontier())
        };
        let shared = {
            let s = self.state.read();
            s.heads
                .iter()
                .enumerate()
                .any(|(i, h)| i != agent && s.is_live(i) && *h == head)
        };
        if frontier.len() > 1 && frontier.contains(&head) && !shared {
            self.record(Event::Retire {
                id: head.clone(),
                reason: RetireReason::Orphaned,
            })?;
            self.store.mark_retired(&head)?;
        }
        Ok(())
    }

    /// Closes a checkpoint: validates the decision against the current
    /// frontier, records it, retires the pruned versions and attaches the
    /// comment to the selected version's note.
    pub fn close_checkpoint(&self, view: &CheckpointView, decision: Option<FeedbackRecord>) -> Result<(), RunError> {
        let live_agents = self.state.read().live_agents();
        self.record(Event::Checkpoint {
            index: view.index,
            round: view.round,
            frontier: view.frontier.clone(),
            live_agents,
            feedback: decision.clone(),
        })?;
        if let Some(rec) = decision {
            for p in &rec.pruned {
                self.store.mark_retired(p)?;
            }
            if let Some(comment) = rec.comment {
                let mut note = self.store.read_note(&rec.selected)?.unwrap_or_default();
                note.feedback = Some(comment);
                self.store.attach_note(&rec.selected, &note)?;
            }
        }
        Ok(())
    }

    /// Validates a decision for `view` without applying it.
    pub fn check_feedback(&self, view: &CheckpointView, rec: &FeedbackRecord) -> Result<(), RunError> {
        let frontier = self.state.read().graph.active_frontier();
        if frontier != view.frontier {
            return Err(RunError::Feedback("frontier changed since the checkpoint opened".into()));
        }
        rec.validate(view.index, &frontier, self.config.run.comment_limit)
            .map_err(RunError::Feedback)
    }

    /// Cross-checks the journal-derived graph against the repository.
    pub fn validate(&self) -> ValidationReport {
        let state = self.state.read();
        let g = &state.graph;
        let mut problems = Vec::new();
        let mut problem = |p: String| problems.push(p);

        if let Err(e) = g.check_invariants() {
            problem(format!("graph invariant: {e}"));
        }
        if let Err(e) = g.ledger().check_invariants() {
            problem(format!("ledger invariant: {e}"));
        }
        for id in g.versions() {
            let parents: BTreeSet<VersionId> = g.parents(id).unwrap_or_default().into_iter().collect();
            match self.store.commit_info(id) {
                Ok(info) => {
                    if info.parents.into_iter().collect::<BTreeSet<_>>() != parents {
                        problem(format!("{id}: commit parents disagree with the graph"));
                    }
                }
                Err(e) => problem(format!("{id}: {e}")),
            }
            match self.store.read_note(id) {
                Ok(Some(note)) => {
                    if note.diagnostics.is_none() {
                        problem(format!("{id}: note has no diagnostics"));
                    }
                    if let Err(e) = note.validate() {
                        problem(format!("{id}: {e}"));
                    }
                    if Some(id) == g.root() && note.task_brief.is_none() {
                        problem("root note lacks the task brief".into());
                    }
                }
                Ok(None) => problem(format!("{id}: no note")),
                Err(e) => problem(format!("{id}: {e}")),
            }
            for p in &parents {
                if !g.better_than(id, p).map(|e| e.is_yes()).unwrap_or(false) {
                    problem(format!("edge {p} -> {id} has no verdict"));
                }
            }
        }

        match self.store.list_branches() {
            Ok(branches) => {
                if branches.get(MAIN_BRANCH) != g.root() {
                    problem("main does not point at the root".into());
                }
                for (i, head) in state.heads.iter().enumerate() {
                    if branches.get(BranchName::agent(i).as_str()) != Some(head) {
                        problem(format!("agent/{i} does not point at its head {}", head.short()));
                    }
                }
                if branches.len() != state.agents() + 1 {
                    problem(format!("expected {} branches, found {}", state.agents() + 1, branches.len()));
                }
            }
            Err(e) => problem(format!("branches: {e}")),
        }
        match self.store.reachable_commits() {
            Ok(commits) => {
                let reachable: BTreeSet<VersionId> = commits.into_iter().map(|c| c.id).collect();
                let nodes: BTreeSet<VersionId> = g.versions().cloned().collect();
                for extra in reachable.difference(&nodes) {
                    problem(format!("{extra} is reachable in the repository but not in the graph"));
                }
                for missing in nodes.difference(&reachable) {
                    problem(format!("{missing} is in the graph but unreachable from any ref"));
                }
            }
            Err(e) => problem(format!("reachability: {e}")),
        }
        match self.store.retired_refs() {
            Ok(refs) => {
                if refs != g.retired() {
                    let mut expected = g.retired();
                    expected.sort();
                    if refs != expected {
                        problem("retired refs disagree with the graph".into());
                    }
                }
            }
            Err(e) => problem(format!("retired refs: {e}")),
        }
        let frontier = g.active_frontier().len();
        if frontier > state.live_agents().max(1) {
            problem(format!("frontier of {frontier} exceeds {} live agents", state.live_agents()));
        }
        for c in &state.checkpoints {
            if c.frontier.len() > c.live_agents.max(1) {
                problem(format!("checkpoint {}: frontier of {} exceeds {} live agents", c.index, c.frontier.len(), c.live_agents));
            }
        }

        ValidationReport {
            ok: problems.is_empty(),
            versions: g.len(),
            retired: g.retired().len(),
            frontier,
            live_agents: state.live_agents(),
            rounds_done: state.rounds_done(),
            problems,
        }
    }
}
