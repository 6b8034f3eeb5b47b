//! Variation operators: localized mutation and LCA-anchored crossover.
//!
//! Both operators run in two steps. The *prepare* step (here) builds a
//! candidate, commits it to the agent's scratch branch, runs diagnostics and
//! asks the judge. Acceptance into the graph is done by the caller, which
//! owns the single-writer contract and the journal.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{build_context, Agent, AgentError, Judge, JudgeInput, MAX_REGION_LINES};
use crate::diagnostics::{compare_reports, run_in_dir, DiagnosticsReport, ToolchainConfig};
use crate::graph::{GraphError, PhyloGraph, VersionId};
use crate::vcs::{
    diff_trees, split_lines, BranchName, ChangeKind, FileEntry, FileTree, GitStore, JudgeRecord, NotePayload,
    Operation, RepoPath, VcsError,
};

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("frontier is empty")]
    EmptyFrontier,
    #[error("tree has no evolvable files and file creation is disabled")]
    NoEvolvableFiles,
    #[error("crossover parents must differ")]
    IdenticalParents,
    #[error("crossover parents {0} and {1} are comparable")]
    ComparableParents(VersionId, VersionId),
    #[error("{0} and {1} share no ancestor")]
    NoCommonAncestor(VersionId, VersionId),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Vcs(#[from] VcsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionMode {
    EditExisting,
    CreateFile,
}

/// Lines `start..=end` (1-based) of `path`. `end = start - 1` denotes an
/// empty range, used for empty files and new files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditRegion {
    pub path: RepoPath,
    pub start: usize,
    pub end: usize,
    pub mode: RegionMode,
}

impl EditRegion {
    pub fn existing(path: RepoPath, start: usize, end: usize) -> Self {
        EditRegion {
            path,
            start,
            end,
            mode: RegionMode::EditExisting,
        }
    }

    pub fn create(path: RepoPath) -> Self {
        EditRegion {
            path,
            start: 1,
            end: 0,
            mode: RegionMode::CreateFile,
        }
    }

    /// Number of original lines covered.
    pub fn len(&self) -> usize {
        (self.end + 1).saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for EditRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            RegionMode::CreateFile => write!(f, "{} (new file)", self.path),
            RegionMode::EditExisting => write!(f, "{}:{}-{}", self.path, self.start, self.end),
        }
    }
}

/// Continuity rule: keep building on the agent's own head while it is on
/// the frontier, otherwise rebase onto a uniformly drawn frontier member.
pub fn select_base<R: Rng + ?Sized>(
    frontier: &[VersionId],
    head: &VersionId,
    rng: &mut R,
) -> Result<VersionId, EvolutionError> {
    if frontier.contains(head) {
        return Ok(head.clone());
    }
    frontier.choose(rng).cloned().ok_or(EvolutionError::EmptyFrontier)
}

/// A window of at most `max` lines placed uniformly in a file of `len`
/// lines, as an inclusive 1-based range.
pub fn select_window<R: Rng + ?Sized>(len: usize, max: usize, rng: &mut R) -> (usize, usize) {
    let width = len.min(max);
    if width == 0 {
        return (1, 0);
    }
    let start = rng.gen_range(1..=len - width + 1);
    (start, start + width - 1)
}

/// With probability `p_new` offers a fresh file; otherwise a window in a
/// uniformly chosen text file.
pub fn select_region<R: Rng + ?Sized>(tree: &FileTree, p_new: f64, rng: &mut R) -> Result<EditRegion, EvolutionError> {
    let files: Vec<(&RepoPath, &FileEntry)> = tree.evolvable().collect();
    let create_allowed = p_new > 0.0;
    if files.is_empty() {
        return if create_allowed {
            Ok(EditRegion::create(fresh_path(tree, None, rng)))
        } else {
            Err(EvolutionError::NoEvolvableFiles)
        };
    }
    if create_allowed && rng.gen_bool(p_new.min(1.0)) {
        let like = files.choose(rng).map(|(p, _)| *p);
        return Ok(EditRegion::create(fresh_path(tree, like, rng)));
    }
    let (path, entry) = files.choose(rng).expect("non-empty");
    let (start, end) = select_window(entry.line_count(), MAX_REGION_LINES, rng);
    Ok(EditRegion::existing((*path).clone(), start, end))
}

/// A free path next to `like`, with the same extension.
fn fresh_path<R: Rng + ?Sized>(tree: &FileTree, like: Option<&RepoPath>, rng: &mut R) -> RepoPath {
    let dir = like
        .and_then(|p| p.as_str().rsplit_once('/'))
        .map(|(d, _)| format!("{d}/"))
        .unwrap_or_default();
    let ext = like
        .and_then(|p| p.extension())
        .map(|e| format!(".{e}"))
        .unwrap_or_else(|| ".txt".into());
    loop {
        let candidate = format!("{dir}new_{:08x}{ext}", rng.gen::<u32>());
        if let Ok(p) = RepoPath::new(candidate) {
            if tree.fits(&p) {
                return p;
            }
        }
    }
}

/// Applies a proposal to the parent tree. The proposal must target the
/// offered region; for new files only the path may be changed.
pub fn apply_proposal(
    parent: &FileTree,
    offered: &EditRegion,
    region: &EditRegion,
    replacement: &str,
) -> Result<FileTree, String> {
    let replacement = replacement.replace("\r\n", "\n").replace('\r', "\n");
    let mut tree = parent.clone();
    match offered.mode {
        RegionMode::CreateFile => {
            if region.mode != RegionMode::CreateFile || region.len() != 0 {
                return Err(format!("expected a new file, got region {region}"));
            }
            if !parent.fits(&region.path) {
                return Err(format!("{} already exists or collides with a directory", region.path));
            }
            if replacement.is_empty() {
                return Err("new file is empty".into());
            }
            tree.insert(region.path.clone(), FileEntry::text(&replacement));
        }
        RegionMode::EditExisting => {
            if region != offered {
                return Err(format!("proposal targets {region}, offered {offered}"));
            }
            let entry = parent
                .get(&region.path)
                .ok_or_else(|| format!("{} does not exist", region.path))?;
            let text = entry.as_text().ok_or_else(|| format!("{} is not text", region.path))?;
            let lines = split_lines(text);
            if region.start == 0 || region.end > lines.len() {
                return Err(format!("region {region} is out of bounds"));
            }
            let prefix = &lines[..region.start - 1];
            let suffix = &lines[region.end..];
            let mut middle = replacement;
            if !middle.is_empty() && !middle.ends_with('\n') && !suffix.is_empty() {
                middle.push('\n');
            }
            let spliced: String = prefix.iter().copied().chain([middle.as_str()]).chain(suffix.iter().copied()).collect();
            tree.insert(
                region.path.clone(),
                FileEntry::text(&spliced).with_executable(entry.executable),
            );
        }
    }
    Ok(tree)
}

/// Recomputes the diff and refuses anything outside `region`: exactly one
/// file changes, and for edits every line before and after the region is
/// byte-identical.
pub fn check_containment(parent: &FileTree, candidate: &FileTree, region: &EditRegion) -> Result<(), String> {
    let changes = diff_trees(parent, candidate);
    let touched: Vec<&str> = changes.paths().map(RepoPath::as_str).collect();
    if touched != [region.path.as_str()] {
        return Err(format!("edit touches {touched:?}, allowed only {}", region.path));
    }
    let change = &changes.files[0];
    match region.mode {
        RegionMode::CreateFile => {
            if change.kind != ChangeKind::Added {
                return Err(format!("{} was expected to be a new file", region.path));
            }
        }
        RegionMode::EditExisting => {
            if change.kind != ChangeKind::Modified {
                return Err(format!("{} must be modified in place", region.path));
            }
            let before = parent.get(&region.path).and_then(FileEntry::as_text).unwrap_or("");
            let after = candidate.get(&region.path).and_then(FileEntry::as_text).ok_or("result is not text")?;
            let (p, c) = (split_lines(before), split_lines(after));
            let head = region.start - 1;
            let tail = p.len().saturating_sub(region.end);
            if c.len() < head + tail || c[..head] != p[..head] || c[c.len() - tail..] != p[p.len() - tail..] {
                return Err(format!("edit leaks outside {region}"));
            }
            if parent.get(&region.path).map(|e| e.executable) != candidate.get(&region.path).map(|e| e.executable) {
                return Err("mode change outside the region contract".into());
            }
        }
    }
    Ok(())
}

/// Shared inputs of one agent's iteration.
pub struct Workbench<'a> {
    pub store: &'a GitStore,
    pub toolchain: &'a ToolchainConfig,
    pub judge: &'a dyn Judge,
    pub workdir: &'a Path,
    pub brief: &'a str,
    pub agent_index: usize,
    pub p_new: f64,
    pub pin_durations: bool,
}

impl Workbench<'_> {
    pub fn label(&self) -> String {
        format!("agent-{}", self.agent_index)
    }

    fn scratch(&self) -> BranchName {
        BranchName::scratch(self.agent_index)
    }

    fn message(&self, op: &str, rationale: &str) -> String {
        let line = rationale.lines().next().unwrap_or("").trim();
        format!("[{}][{op}] {line}", self.label())
    }

    /// Diagnostics previously recorded for `id`, or a fresh run.
    fn diagnostics_of(&self, id: &VersionId) -> Result<DiagnosticsReport, EvolutionError> {
        if let Some(report) = self.store.read_note(id)?.and_then(|n| n.diagnostics) {
            return Ok(report);
        }
        self.store.read_tree(id)?.materialize(self.workdir)?;
        Ok(run_in_dir(self.toolchain, self.workdir, id, self.pin_durations))
    }

    fn discard(&self) -> Result<(), EvolutionError> {
        self.store.delete_branch(&self.scratch())?;
        Ok(())
    }
}

/// A judged candidate waiting on its scratch branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub id: VersionId,
    pub parents: Vec<VersionId>,
    pub operation: Operation,
    pub note: NotePayload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Attempt {
    Accepted(Candidate),
    Rejected { reason: String },
}

impl Attempt {
    fn rejected(reason: impl Into<String>) -> Self {
        Attempt::Rejected { reason: reason.into() }
    }
}

/// Prepares a mutation of `base`. Agent failures are returned as errors;
/// invalid or non-improving proposals come back as [`Attempt::Rejected`]
/// and leave no trace outside the scratch branch.
pub fn mutate<R: Rng + ?Sized>(
    wb: &Workbench<'_>,
    base: &VersionId,
    agent: &dyn Agent,
    feedback: &[String],
    rng: &mut R,
) -> Result<Attempt, EvolutionError> {
    let parent_tree = wb.store.read_tree(base)?;
    let offered = select_region(&parent_tree, wb.p_new, rng)?;
    let ctx = build_context(wb.brief, &parent_tree, &offered, feedback)?;
    let proposal = agent.propose(&ctx, rng.gen())?;
    if proposal.rationale.trim().is_empty() {
        return Ok(Attempt::rejected("proposal has no rationale"));
    }
    let candidate = match apply_proposal(&parent_tree, &offered, &proposal.region, &proposal.replacement) {
        Ok(t) => t,
        Err(e) => return Ok(Attempt::rejected(e)),
    };
    if candidate == parent_tree {
        return Ok(Attempt::rejected("no-op proposal"));
    }
    if let Err(e) = check_containment(&parent_tree, &candidate, &proposal.region) {
        return Ok(Attempt::rejected(e));
    }

    let message = wb.message("mutate", &proposal.rationale);
    let id = wb.store.commit_snapshot(&wb.scratch(), &candidate, std::slice::from_ref(base), &message)?;
    candidate.materialize(wb.workdir)?;
    let after = run_in_dir(wb.toolchain, wb.workdir, &id, wb.pin_durations);
    let before = wb.diagnostics_of(base)?;
    let changes = diff_trees(&parent_tree, &candidate);
    let regression = compare_reports(&before, &after);
    let decision = wb.judge.judge(&JudgeInput {
        parent: base,
        child: &id,
        changes: &changes,
        before: &before,
        after: &after,
        regression: &regression,
        rationale: &proposal.rationale,
        feedback,
    });
    let decision = match decision {
        Ok(d) if d.improved => d,
        Ok(d) => {
            wb.discard()?;
            return Ok(Attempt::rejected(format!("judge: {}", d.rationale)));
        }
        Err(e) => {
            wb.discard()?;
            return Ok(Attempt::rejected(format!("judge failed: {e}")));
        }
    };
    let note = NotePayload {
        operation: Some(Operation::Mutate),
        agent: Some(wb.label()),
        diagnostics: Some(after),
        judge: vec![JudgeRecord {
            against: base.clone(),
            decision,
        }],
        comparison_targets: vec![base.clone()],
        ..NotePayload::default()
    };
    wb.store.attach_note(&id, &note)?;
    Ok(Attempt::Accepted(Candidate {
        id,
        parents: vec![base.clone()],
        operation: Operation::Mutate,
        note,
    }))
}

/// Prepares a three-way crossover of two incomparable versions. The
/// offspring must beat both parents.
pub fn crossover<R: Rng + ?Sized>(
    wb: &Workbench<'_>,
    graph: &PhyloGraph,
    v1: &VersionId,
    v2: &VersionId,
    feedback: &[String],
    rng: &mut R,
) -> Result<Attempt, EvolutionError> {
    if v1 == v2 {
        return Err(EvolutionError::IdenticalParents);
    }
    if !graph.incomparable(v1, v2)? {
        return Err(EvolutionError::ComparableParents(v1.clone(), v2.clone()));
    }
    let lca = graph
        .lowest_common_ancestor(v1, v2)?
        .ok_or_else(|| EvolutionError::NoCommonAncestor(v1.clone(), v2.clone()))?;
    let outcome = wb.store.three_way_merge(&lca, v1, v2, rng.gen())?;
    let (t1, t2) = (wb.store.read_tree(v1)?, wb.store.read_tree(v2)?);
    if outcome.merged.is_empty() && !(t1.is_empty() && t2.is_empty()) {
        return Ok(Attempt::rejected("merge produced an empty tree"));
    }
    if outcome.merged == t1 || outcome.merged == t2 {
        return Ok(Attempt::rejected("offspring equals a parent"));
    }

    let rationale = format!("merge {} and {} over {}", v1.short(), v2.short(), lca.short());
    let message = wb.message("crossover", &rationale);
    let parents = vec![v1.clone(), v2.clone()];
    let id = wb.store.commit_snapshot(&wb.scratch(), &outcome.merged, &parents, &message)?;
    outcome.merged.materialize(wb.workdir)?;
    let after = run_in_dir(wb.toolchain, wb.workdir, &id, wb.pin_durations);

    let mut records = Vec::with_capacity(2);
    for (parent, parent_tree) in [(v1, &t1), (v2, &t2)] {
        let before = wb.diagnostics_of(parent)?;
        let changes = diff_trees(parent_tree, &outcome.merged);
        let regression = compare_reports(&before, &after);
        let decision = wb.judge.judge(&JudgeInput {
            parent,
            child: &id,
            changes: &changes,
            before: &before,
            after: &after,
            regression: &regression,
            rationale: &rationale,
            feedback,
        });
        match decision {
            Ok(d) if d.improved => records.push(JudgeRecord {
                against: parent.clone(),
                decision: d,
            }),
            Ok(d) => {
                wb.discard()?;
                return Ok(Attempt::rejected(format!("judge vs {}: {}", parent.short(), d.rationale)));
            }
            Err(e) => {
                wb.discard()?;
                return Ok(Attempt::rejected(format!("judge failed: {e}")));
            }
        }
    }
    let note = NotePayload {
        operation: Some(Operation::Crossover),
        agent: Some(wb.label()),
        diagnostics: Some(after),
        judge: records,
        comparison_targets: parents.clone(),
        conflicts: outcome.conflicts,
        ..NotePayload::default()
    };
    wb.store.attach_note(&id, &note)?;
    Ok(Attempt::Accepted(Candidate {
        id,
        parents,
        operation: Operation::Crossover,
        note,
    }))
}

/// One locality breach found by [`locality_violations`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LocalityViolation {
    pub version: VersionId,
    pub files: usize,
    pub affected_lines: usize,
}

/// Every single-parent version must differ from its parent in exactly one
/// file and at most [`MAX_REGION_LINES`] original lines.
pub fn locality_violations(store: &GitStore, graph: &PhyloGraph) -> Result<Vec<LocalityViolation>, EvolutionError> {
    let mut out = Vec::new();
    for id in graph.versions() {
        let parents = graph.parents(id)?;
        if parents.len() != 1 {
            continue;
        }
        let changes = store.diff(&parents[0], id)?;
        let affected: usize = changes.files.iter().map(|f| f.affected_base_lines()).sum();
        if changes.files.len() != 1 || affected > MAX_REGION_LINES {
            out.push(LocalityViolation {
                version: id.clone(),
                files: changes.files.len(),
                affected_lines: affected,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path(p: &str) -> RepoPath {
        RepoPath::new(p).unwrap()
    }

    fn numbered(n: usize) -> String {
        (1..=n).map(|i| format!("{i}\n")).collect()
    }

    #[test]
    fn base_selection() {
        let ids: Vec<_> = ["aa", "bb", "cc"].iter().map(|h| VersionId::from_hex(h).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_base(&ids[..2], &ids[1], &mut rng).unwrap(), ids[1]);
        assert_eq!(select_base(&ids[..1], &ids[2], &mut rng).unwrap(), ids[0]);
        assert!(select_base(&[], &ids[0], &mut rng).is_err());
    }

    #[test]
    fn whole_file_window() {
        let tree = FileTree::new().with_text("a.txt", &numbered(40)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = select_region(&tree, 0.0, &mut rng).unwrap();
        assert_eq!(r, EditRegion::existing(path("a.txt"), 1, 40));
    }

    #[test]
    fn empty_tree_creates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = select_region(&FileTree::new(), 0.05, &mut rng).unwrap();
        assert_eq!(r.mode, RegionMode::CreateFile);
        assert!(select_region(&FileTree::new(), 0.0, &mut rng).is_err());
    }

    #[test]
    fn create_region_mimics_existing_file() {
        let tree = FileTree::new().with_text("src/a.js", "x\n").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = select_region(&tree, 1.0, &mut rng).unwrap();
        assert_eq!(r.mode, RegionMode::CreateFile);
        assert!(r.path.as_str().starts_with("src/new_") && r.path.as_str().ends_with(".js"));
    }

    #[test]
    fn splice_and_containment() {
        let parent = FileTree::new()
            .with_text("a.txt", &numbered(10))
            .unwrap()
            .with_text("b.txt", "keep\n")
            .unwrap();
        let region = EditRegion::existing(path("a.txt"), 3, 5);
        let child = apply_proposal(&parent, &region, &region, "X\nY").unwrap();
        assert_eq!(child.get(&path("a.txt")).unwrap().as_text().unwrap(), "1\n2\nX\nY\n6\n7\n8\n9\n10\n");
        check_containment(&parent, &child, &region).unwrap();

        // Leaks into a line after the region.
        let leaked = parent.clone().with_text("a.txt", "1\n2\nX\n6\n7\n8\n9\nZ\n").unwrap();
        assert!(check_containment(&parent, &leaked, &region).is_err());
        // Touches a second file.
        let two = child.clone().with_text("b.txt", "changed\n").unwrap();
        assert!(check_containment(&parent, &two, &region).is_err());
        // Proposal for another region.
        let other = EditRegion::existing(path("a.txt"), 1, 2);
        assert!(apply_proposal(&parent, &region, &other, "q\n").is_err());
    }

    #[test]
    fn new_file_proposals() {
        let parent = FileTree::new().with_text("a.txt", "x\n").unwrap();
        let offered = EditRegion::create(path("new.txt"));
        let renamed = EditRegion::create(path("lib/other.txt"));
        let child = apply_proposal(&parent, &offered, &renamed, "hello\n").unwrap();
        check_containment(&parent, &child, &renamed).unwrap();
        let clash = EditRegion::create(path("a.txt"));
        assert!(apply_proposal(&parent, &offered, &clash, "x\n").is_err());
        assert!(apply_proposal(&parent, &offered, &offered, "").is_err());
    }

    #[test]
    fn region_display() {
        assert_eq!(EditRegion::existing(path("a.rs"), 2, 9).to_string(), "a.rs:2-9");
        assert_eq!(EditRegion::existing(path("a.rs"), 2, 9).len(), 8);
        assert_eq!(EditRegion::create(path("n.rs")).len(), 0);
    }
}
