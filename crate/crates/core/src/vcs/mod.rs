//! Git-backed storage for versions: snapshots, branches, notes, diffs and
//! the three-way merge used by crossover.

mod diff;
mod merge;
mod notes;
mod store;
mod tree;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::graph::VersionId;

pub use diff::{apply_changeset, apply_hunks, diff_lines, diff_trees, ChangeKind, ChangeSet, FileChange, Hunk};
pub use merge::{merge_lines, merge_trees, Conflict, LineRegion, MergeOutcome, Parent};
pub use notes::{JudgeRecord, NotePayload, Operation, NOTES_REF, NOTE_SCHEMA_VERSION};
pub use store::{BranchName, CommitInfo, CommitMeta, GitStore, MAIN_BRANCH};
pub use tree::{split_lines, FileEntry, FileTree, RepoPath};

#[derive(Debug, Error)]
pub enum VcsError {
    #[error(transparent)]
    Git(#[from] git2::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid path {0:?}: {1}")]
    InvalidPath(String, String),
    #[error("path {0:?} collides with a file or directory of the same name")]
    TreeConflict(String),
    #[error("invalid branch name {0:?}")]
    InvalidBranch(String),
    #[error("unknown version {0}")]
    UnknownVersion(VersionId),
    #[error("a commit needs one or two parents, got {0}")]
    ParentCount(usize),
    #[error("both parents are the same version {0}")]
    IdenticalParents(VersionId),
    #[error("{lca} is not an ancestor of {version}")]
    NotAncestor { lca: VersionId, version: VersionId },
    #[error("{} exists and is not empty", .0.display())]
    NotEmpty(PathBuf),
    #[error("change set does not apply: {0}")]
    BadChangeSet(String),
    #[error("malformed note payload: {0}")]
    MalformedNote(String),
}

impl VcsError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        VcsError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
