use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use git2::{BranchType, ErrorCode, FileMode, ObjectType, Oid, Repository, RepositoryInitOptions, Signature, Sort, Time, TreeWalkMode, TreeWalkResult};
use parking_lot::Mutex;

use crate::graph::VersionId;

use super::diff::{diff_trees, ChangeSet};
use super::merge::{merge_trees, MergeOutcome};
use super::notes::{NotePayload, Operation, NOTES_REF};
use super::tree::{FileEntry, FileTree, RepoPath};
use super::VcsError;

pub const MAIN_BRANCH: &str = "main";
const RETIRED_PREFIX: &str = "refs/evogit/retired/";

/// Author/committer identity and clock for new commits and notes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitMeta {
    pub name: String,
    pub email: String,
    /// Seconds since the epoch; `None` uses the wall clock.
    pub fixed_time: Option<i64>,
}

impl CommitMeta {
    /// Pinned identity and timestamp so digests are reproducible.
    pub fn fixed() -> Self {
        CommitMeta {
            name: "evogit".into(),
            email: "evogit@localhost".into(),
            fixed_time: Some(1_700_000_000),
        }
    }

    pub fn wall_clock() -> Self {
        CommitMeta {
            fixed_time: None,
            ..Self::fixed()
        }
    }

    fn signature(&self) -> Result<Signature<'static>, VcsError> {
        Ok(match self.fixed_time {
            Some(t) => Signature::new(&self.name, &self.email, &Time::new(t, 0))?,
            None => Signature::now(&self.name, &self.email)?,
        })
    }
}

/// Branch name validated against Git's ref-name rules.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchName(String);

impl BranchName {
    pub fn new(name: impl Into<String>) -> Result<Self, VcsError> {
        let name = name.into();
        if name.is_empty() || !git2::Reference::is_valid_name(&format!("refs/heads/{name}")) {
            return Err(VcsError::InvalidBranch(name));
        }
        Ok(BranchName(name))
    }

    pub fn main() -> Self {
        BranchName(MAIN_BRANCH.into())
    }

    /// `agent/<index>`
    pub fn agent(index: usize) -> Self {
        BranchName(format!("agent/{index}"))
    }

    /// `scratch/agent-<index>`: holds a candidate until it is judged.
    pub fn scratch(index: usize) -> Self {
        BranchName(format!("scratch/agent-{index}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn refname(&self) -> String {
        format!("refs/heads/{}", self.0)
    }
}

impl std::fmt::Display for BranchName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitInfo {
    pub id: VersionId,
    pub parents: Vec<VersionId>,
    pub message: String,
}

fn oid(id: &VersionId) -> Result<Oid, VcsError> {
    Oid::from_bytes(id.digest()).map_err(|_| VcsError::UnknownVersion(id.clone()))
}

fn version(oid: Oid) -> VersionId {
    VersionId::from_digest(oid.as_bytes()).expect("git object ids are non-empty")
}

/// A bare Git repository holding every version, branch and note of a run.
/// Object-database access is serialized through one handle.
pub struct GitStore {
    path: PathBuf,
    repo: Mutex<Repository>,
    meta: CommitMeta,
}

impl std::fmt::Debug for GitStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GitStore").field("path", &self.path).finish()
    }
}

impl GitStore {
    /// Creates a bare repository at `path`, commits `seed` on `main` as the
    /// root version and stores the task brief as a note on it.
    pub fn init(
        path: &Path,
        seed: &FileTree,
        brief: &str,
        meta: CommitMeta,
    ) -> Result<(GitStore, VersionId), VcsError> {
        if path.exists() {
            let mut entries = fs::read_dir(path).map_err(|e| VcsError::io(path, e))?;
            if entries.next().is_some() {
                return Err(VcsError::NotEmpty(path.to_path_buf()));
            }
        }
        fs::create_dir_all(path).map_err(|e| VcsError::io(path, e))?;
        let mut opts = RepositoryInitOptions::new();
        opts.bare(true).initial_head(MAIN_BRANCH);
        let repo = Repository::init_opts(path, &opts)?;
        let store = GitStore {
            path: path.to_path_buf(),
            repo: Mutex::new(repo),
            meta,
        };
        let root = store.commit_root(seed, "[init] seed version")?;
        store.attach_note(
            &root,
            &NotePayload {
                operation: Some(Operation::Init),
                task_brief: Some(brief.to_owned()),
                ..NotePayload::default()
            },
        )?;
        Ok((store, root))
    }

    pub fn open(path: &Path, meta: CommitMeta) -> Result<GitStore, VcsError> {
        let repo = Repository::open_bare(path)?;
        Ok(GitStore {
            path: path.to_path_buf(),
            repo: Mutex::new(repo),
            meta,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn meta(&self) -> &CommitMeta {
        &self.meta
    }

    fn commit_root(&self, tree: &FileTree, message: &str) -> Result<VersionId, VcsError> {
        let repo = self.repo.lock();
        let tree_oid = write_tree(&repo, tree)?;
        let tree = repo.find_tree(tree_oid)?;
        let sig = self.meta.signature()?;
        let commit = repo.commit(None, &sig, &sig, message, &tree, &[])?;
        repo.reference(&BranchName::main().refname(), commit, true, "evogit init")?;
        Ok(version(commit))
    }

    /// Commits `tree` with one or two parents and moves `branch` to it.
    pub fn commit_snapshot(
        &self,
        branch: &BranchName,
        tree: &FileTree,
        parents: &[VersionId],
        message: &str,
    ) -> Result<VersionId, VcsError> {
        if parents.is_empty() || parents.len() > 2 {
            return Err(VcsError::ParentCount(parents.len()));
        }
        if parents.len() == 2 && parents[0] == parents[1] {
            return Err(VcsError::IdenticalParents(parents[0].clone()));
        }
        let repo = self.repo.lock();
        let parent_commits = parents
            .iter()
            .map(|p| find_commit(&repo, p))
            .collect::<Result<Vec<_>, _>>()?;
        let tree_oid = write_tree(&repo, tree)?;
        let git_tree = repo.find_tree(tree_oid)?;
        let sig = self.meta.signature()?;
        let refs: Vec<&git2::Commit> = parent_commits.iter().collect();
        let commit = repo.commit(None, &sig, &sig, message, &git_tree, &refs)?;
        repo.reference(&branch.refname(), commit, true, "evogit commit")?;
        Ok(version(commit))
    }

    pub fn contains(&self, id: &VersionId) -> bool {
        let repo = self.repo.lock();
        oid(id).is_ok_and(|o| repo.find_commit(o).is_ok())
    }

    pub fn commit_info(&self, id: &VersionId) -> Result<CommitInfo, VcsError> {
        let repo = self.repo.lock();
        let commit = find_commit(&repo, id)?;
        Ok(CommitInfo {
            id: id.clone(),
            parents: commit.parent_ids().map(version).collect(),
            message: String::from_utf8_lossy(commit.message_bytes()).into_owned(),
        })
    }

    pub fn read_tree(&self, id: &VersionId) -> Result<FileTree, VcsError> {
        let repo = self.repo.lock();
        let commit = find_commit(&repo, id)?;
        let tree = commit.tree()?;
        let mut out = FileTree::new();
        let mut failure = None;
        tree.walk(TreeWalkMode::PreOrder, |dir, entry| {
            if entry.kind() != Some(ObjectType::Blob) {
                return TreeWalkResult::Ok;
            }
            let read = || -> Result<(RepoPath, FileEntry), VcsError> {
                let name = entry
                    .name()
                    .ok_or_else(|| VcsError::InvalidPath(dir.to_owned(), "non UTF-8 name".into()))?;
                let blob = repo.find_blob(entry.id())?;
                let exec = entry.filemode() == i32::from(FileMode::BlobExecutable);
                Ok((
                    RepoPath::new(format!("{dir}{name}"))?,
                    FileEntry::bytes(blob.content().to_vec()).with_executable(exec),
                ))
            };
            match read() {
                Ok((path, file)) => {
                    out.insert(path, file);
                    TreeWalkResult::Ok
                }
                Err(e) => {
                    failure = Some(e);
                    TreeWalkResult::Abort
                }
            }
        })
        .or_else(|e| if failure.is_some() { Ok(()) } else { Err(e) })?;
        match failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    pub fn diff(&self, base: &VersionId, target: &VersionId) -> Result<ChangeSet, VcsError> {
        Ok(diff_trees(&self.read_tree(base)?, &self.read_tree(target)?))
    }

    /// `a` equals `b` or is one of its ancestors in the commit graph.
    pub fn is_ancestor(&self, a: &VersionId, b: &VersionId) -> Result<bool, VcsError> {
        if a == b {
            return Ok(true);
        }
        let repo = self.repo.lock();
        let (oa, ob) = (find_commit(&repo, a)?.id(), find_commit(&repo, b)?.id());
        Ok(repo.graph_descendant_of(ob, oa)?)
    }

    /// Three-way merge of `first` and `second` against `lca`.
    pub fn three_way_merge(
        &self,
        lca: &VersionId,
        first: &VersionId,
        second: &VersionId,
        seed: u64,
    ) -> Result<MergeOutcome, VcsError> {
        if first == second {
            return Err(VcsError::IdenticalParents(first.clone()));
        }
        for v in [first, second] {
            if !self.is_ancestor(lca, v)? {
                return Err(VcsError::NotAncestor {
                    lca: lca.clone(),
                    version: v.clone(),
                });
            }
        }
        let base = self.read_tree(lca)?;
        Ok(merge_trees(&base, &self.read_tree(first)?, &self.read_tree(second)?, seed))
    }

    /// Attaches `payload`, replacing the current note. Earlier payloads stay
    /// in the notes ref history.
    pub fn attach_note(&self, id: &VersionId, payload: &NotePayload) -> Result<(), VcsError> {
        let json = payload.to_json()?;
        let repo = self.repo.lock();
        let commit = find_commit(&repo, id)?;
        let sig = self.meta.signature()?;
        repo.note(&sig, &sig, Some(NOTES_REF), commit.id(), &json, true)?;
        Ok(())
    }

    /// Current note, or `None` when the commit has none.
    pub fn read_note(&self, id: &VersionId) -> Result<Option<NotePayload>, VcsError> {
        match self.read_note_text(id)? {
            Some(text) => NotePayload::from_json(&text).map(Some),
            None => Ok(None),
        }
    }

    pub fn read_note_text(&self, id: &VersionId) -> Result<Option<String>, VcsError> {
        let repo = self.repo.lock();
        let commit = find_commit(&repo, id)?;
        let found = repo.find_note(Some(NOTES_REF), commit.id());
        match found {
            Ok(note) => Ok(Some(String::from_utf8_lossy(note.message_bytes()).into_owned())),
            Err(e) if e.code() == ErrorCode::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Every distinct payload attached to `id`, oldest first.
    pub fn note_history(&self, id: &VersionId) -> Result<Vec<NotePayload>, VcsError> {
        let repo = self.repo.lock();
        let target = find_commit(&repo, id)?.id().to_string();
        let mut walk = repo.revwalk()?;
        match walk.push_ref(NOTES_REF) {
            Ok(()) => {}
            Err(e) if e.code() == ErrorCode::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        }
        walk.set_sorting(Sort::TOPOLOGICAL | Sort::REVERSE)?;
        let candidates = [
            target.clone(),
            format!("{}/{}", &target[..2], &target[2..]),
            format!("{}/{}/{}", &target[..2], &target[2..4], &target[4..]),
        ];
        let mut texts: Vec<String> = Vec::new();
        for notes_commit in walk {
            let tree = repo.find_commit(notes_commit?)?.tree()?;
            let entry = candidates.iter().find_map(|p| tree.get_path(Path::new(p)).ok());
            let Some(entry) = entry else { continue };
            let blob = repo.find_blob(entry.id())?;
            let text = String::from_utf8_lossy(blob.content()).into_owned();
            if texts.last() != Some(&text) {
                texts.push(text);
            }
        }
        texts.iter().map(|t| NotePayload::from_json(t)).collect()
    }

    /// `main` plus every `agent/*` branch head.
    pub fn list_branches(&self) -> Result<BTreeMap<String, VersionId>, VcsError> {
        let repo = self.repo.lock();
        let mut out = BTreeMap::new();
        for branch in repo.branches(Some(BranchType::Local))? {
            let (branch, _) = branch?;
            let Some(name) = branch.name()?.map(str::to_owned) else { continue };
            if name != MAIN_BRANCH && !name.starts_with("agent/") {
                continue;
            }
            if let Some(target) = branch.get().target() {
                out.insert(name, version(target));
            }
        }
        Ok(out)
    }

    pub fn branch_head(&self, branch: &BranchName) -> Result<Option<VersionId>, VcsError> {
        let repo = self.repo.lock();
        let found = repo.find_reference(&branch.refname());
        match found {
            Ok(r) => Ok(r.target().map(version)),
            Err(e) if e.code() == ErrorCode::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn set_branch(&self, branch: &BranchName, id: &VersionId) -> Result<(), VcsError> {
        let repo = self.repo.lock();
        let target = find_commit(&repo, id)?.id();
        repo.reference(&branch.refname(), target, true, "evogit move")?;
        Ok(())
    }

    /// Deletes `branch`; missing branches are ignored.
    pub fn delete_branch(&self, branch: &BranchName) -> Result<(), VcsError> {
        let repo = self.repo.lock();
        let found = repo.find_reference(&branch.refname());
        match found {
            Ok(mut r) => Ok(r.delete()?),
            Err(e) if e.code() == ErrorCode::NotFound => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    /// Keeps a retired version reachable after its branch moves on.
    pub fn mark_retired(&self, id: &VersionId) -> Result<(), VcsError> {
        let repo = self.repo.lock();
        let target = find_commit(&repo, id)?.id();
        repo.reference(&format!("{RETIRED_PREFIX}{id}"), target, true, "evogit retire")?;
        Ok(())
    }

    pub fn retired_refs(&self) -> Result<Vec<VersionId>, VcsError> {
        let repo = self.repo.lock();
        let mut out = Vec::new();
        for r in repo.references_glob(&format!("{RETIRED_PREFIX}*"))? {
            if let Some(t) = r?.target() {
                out.push(version(t));
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn unmark_retired(&self, id: &VersionId) -> Result<(), VcsError> {
        let repo = self.repo.lock();
        let found = repo.find_reference(&format!("{RETIRED_PREFIX}{id}"));
        match found {
            Ok(mut r) => Ok(r.delete()?),
            Err(e) if e.code() == ErrorCode::NotFound => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    /// Commits reachable from `main`, the agent branches and retired refs,
    /// in topological order (parents first).
    pub fn reachable_commits(&self) -> Result<Vec<CommitInfo>, VcsError> {
        let mut heads: Vec<VersionId> = self.list_branches()?.into_values().collect();
        heads.extend(self.retired_refs()?);
        let repo = self.repo.lock();
        let mut walk = repo.revwalk()?;
        for h in &heads {
            walk.push(oid(h)?)?;
        }
        walk.set_sorting(Sort::TOPOLOGICAL | Sort::REVERSE)?;
        let mut out = Vec::new();
        for o in walk {
            let commit = repo.find_commit(o?)?;
            out.push(CommitInfo {
                id: version(commit.id()),
                parents: commit.parent_ids().map(version).collect(),
                message: String::from_utf8_lossy(commit.message_bytes()).into_owned(),
            });
        }
        Ok(out)
    }

    /// Removes `*.lock` files a killed writer may have left behind. Only
    /// call while holding the run's exclusive lock.
    pub fn clear_stale_locks(&self) -> Result<usize, VcsError> {
        let mut removed = 0;
        let mut stack = vec![self.path.clone()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir).map_err(|e| VcsError::io(&dir, e))? {
                let entry = entry.map_err(|e| VcsError::io(&dir, e))?;
                let path = entry.path();
                if path.is_dir() {
                    if entry.file_name() != "objects" {
                        stack.push(path);
                    }
                } else if path.extension().is_some_and(|e| e == "lock") {
                    fs::remove_file(&path).map_err(|e| VcsError::io(&path, e))?;
                    removed += 1;
                }
            }
        }
        Ok(removed)
    }
}

fn find_commit<'r>(repo: &'r Repository, id: &VersionId) -> Result<git2::Commit<'r>, VcsError> {
    let o = oid(id)?;
    repo.find_commit(o).map_err(|e| {
        if e.code() == ErrorCode::NotFound {
            VcsError::UnknownVersion(id.clone())
        } else {
            e.into()
        }
    })
}

enum Node<'a> {
    File(&'a FileEntry),
    Dir(BTreeMap<&'a str, Node<'a>>),
}

fn write_tree(repo: &Repository, tree: &FileTree) -> Result<Oid, VcsError> {
    let mut root: BTreeMap<&str, Node> = BTreeMap::new();
    for (path, entry) in tree.iter() {
        let mut dir = &mut root;
        let mut segments = path.as_str().split('/').peekable();
        while let Some(seg) = segments.next() {
            if segments.peek().is_none() {
                if dir.insert(seg, Node::File(entry)).is_some() {
                    return Err(VcsError::TreeConflict(path.to_string()));
                }
                break;
            }
            let node = dir.entry(seg).or_insert_with(|| Node::Dir(BTreeMap::new()));
            dir = match node {
                Node::Dir(d) => d,
                Node::File(_) => return Err(VcsError::TreeConflict(path.to_string())),
            };
        }
    }
    write_dir(repo, &root)
}

fn write_dir(repo: &Repository, dir: &BTreeMap<&str, Node>) -> Result<Oid, VcsError> {
    let mut builder = repo.treebuilder(None)?;
    for (name, node) in dir {
        match node {
            Node::File(entry) => {
                let blob = repo.blob(entry.data())?;
                let mode = if entry.executable {
                    FileMode::BlobExecutable
                } else {
                    FileMode::Blob
                };
                builder.insert(name, blob, i32::from(mode))?;
            }
            Node::Dir(children) => {
                let sub = write_dir(repo, children)?;
                builder.insert(name, sub, i32::from(FileMode::Tree))?;
            }
        }
    }
    Ok(builder.write()?)
}
