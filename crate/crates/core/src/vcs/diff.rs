//! Line-based structural diff between file trees.
//!
//! Lines keep their `\n` terminator, so applying a [`ChangeSet`] reproduces
//! the target byte for byte, including a missing final newline.

use std::collections::BTreeSet;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::tree::{split_lines, FileEntry, FileTree, RepoPath};
use super::VcsError;

/// Above this many DP cells the differ stops looking for an optimal
/// alignment and emits the trimmed middle as a single hunk.
const LCS_CELL_LIMIT: usize = 16_000_000;

/// Replacement of base lines `start .. start + len` (1-based) by `lines`.
/// A zero-length hunk inserts before base line `start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub start: usize,
    pub len: usize,
    pub lines: Vec<String>,
}

impl Hunk {
    /// One past the last replaced base line.
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Added,
    Deleted,
    Modified,
}

/// Changes to a single path. Text targets carry hunks against the base
/// text; when either side is binary the whole target travels in `binary`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub path: RepoPath,
    pub kind: ChangeKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hunks: Vec<Hunk>,
    #[serde(default)]
    pub executable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "base64_opt")]
    pub binary: Option<Vec<u8>>,
}

impl FileChange {
    /// Count of base lines replaced or deleted.
    pub fn affected_base_lines(&self) -> usize {
        self.hunks.iter().map(|h| h.len).sum()
    }

    pub fn added_lines(&self) -> usize {
        self.hunks.iter().map(|h| h.lines.len()).sum()
    }
}

/// Structured diff between two trees, one entry per changed path in path
/// order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub files: Vec<FileChange>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn paths(&self) -> impl Iterator<Item = &RepoPath> + '_ {
        self.files.iter().map(|f| &f.path)
    }

    pub fn get(&self, path: &RepoPath) -> Option<&FileChange> {
        self.files.iter().find(|f| &f.path == path)
    }
}

mod base64_opt {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(bytes) => s.serialize_str(&BASE64.encode(bytes)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| BASE64.decode(s).map_err(serde::de::Error::custom)).transpose()
    }
}

/// Hunks turning `base` into `target`, aligned on a longest common
/// subsequence of lines. Hunks come out sorted and non-adjacent.
pub fn diff_lines<S: AsRef<str>>(base: &[S], target: &[S]) -> Vec<Hunk> {
    let base: Vec<&str> = base.iter().map(AsRef::as_ref).collect();
    let target: Vec<&str> = target.iter().map(AsRef::as_ref).collect();

    let prefix = base.iter().zip(&target).take_while(|(a, b)| a == b).count();
    let max_suffix = base.len().min(target.len()) - prefix;
    let suffix = base
        .iter()
        .rev()
        .zip(target.iter().rev())
        .take(max_suffix)
        .take_while(|(a, b)| a == b)
        .count();
    let b = &base[prefix..base.len() - suffix];
    let t = &target[prefix..target.len() - suffix];

    let matches = if b.is_empty() || t.is_empty() || b.len() * t.len() > LCS_CELL_LIMIT {
        Vec::new()
    } else {
        lcs_matches(b, t)
    };

    let mut hunks = Vec::new();
    let (mut bi, mut ti) = (0, 0);
    let to_hunk = |bi: usize, be: usize, ti: usize, te: usize| Hunk {
        start: prefix + bi + 1,
        len: be - bi,
        lines: t[ti..te].iter().map(|s| s.to_string()).collect(),
    };
    for (mb, mt) in matches.into_iter().chain(std::iter::once((b.len(), t.len()))) {
        if mb > bi || mt > ti {
            hunks.push(to_hunk(bi, mb, ti, mt));
        }
        bi = mb + 1;
        ti = mt + 1;
    }
    hunks
}

/// Index pairs of one longest common subsequence, in increasing order.
fn lcs_matches(a: &[&str], b: &[&str]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let width = m + 1;
    // suffix[i * width + j] = LCS length of a[i..] and b[j..]
    let mut suffix = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i * width + j] = if a[i] == b[j] {
                suffix[(i + 1) * width + j + 1] + 1
            } else {
                suffix[(i + 1) * width + j].max(suffix[i * width + j + 1])
            };
        }
    }
    let mut out = Vec::with_capacity(suffix[0] as usize);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            out.push((i, j));
            i += 1;
            j += 1;
        } else if suffix[(i + 1) * width + j] >= suffix[i * width + j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Applies sorted, disjoint hunks to `base`.
pub fn apply_hunks<S: AsRef<str>>(base: &[S], hunks: &[Hunk]) -> Result<Vec<String>, VcsError> {
    let mut out = Vec::with_capacity(base.len());
    let mut cursor = 1;
    for h in hunks {
        if h.start < cursor || h.end() > base.len() + 1 {
            return Err(VcsError::BadChangeSet(format!(
                "hunk {}+{} out of order or beyond {} lines",
                h.start,
                h.len,
                base.len()
            )));
        }
        out.extend(base[cursor - 1..h.start - 1].iter().map(|s| s.as_ref().to_owned()));
        out.extend(h.lines.iter().cloned());
        cursor = h.end();
    }
    out.extend(base[cursor - 1..].iter().map(|s| s.as_ref().to_owned()));
    Ok(out)
}

/// Per-file diff between two trees.
pub fn diff_trees(base: &FileTree, target: &FileTree) -> ChangeSet {
    let paths: BTreeSet<&RepoPath> = base.paths().chain(target.paths()).collect();
    let mut files = Vec::new();
    for path in paths {
        let change = match (base.get(path), target.get(path)) {
            (Some(a), Some(b)) if a == b => continue,
            (Some(_), None) => FileChange {
                path: path.clone(),
                kind: ChangeKind::Deleted,
                hunks: Vec::new(),
                executable: false,
                binary: None,
            },
            (before, Some(after)) => {
                let kind = if before.is_some() {
                    ChangeKind::Modified
                } else {
                    ChangeKind::Added
                };
                let base_text = before.map_or(Some(""), FileEntry::as_text);
                match (base_text, after.as_text()) {
                    (Some(old), Some(new)) => FileChange {
                        path: path.clone(),
                        kind,
                        hunks: diff_lines(&split_lines(old), &split_lines(new)),
                        executable: after.executable,
                        binary: None,
                    },
                    _ => FileChange {
                        path: path.clone(),
                        kind,
                        hunks: Vec::new(),
                        executable: after.executable,
                        binary: Some(after.data().to_vec()),
                    },
                }
            }
            (None, None) => unreachable!("path came from one of the trees"),
        };
        files.push(change);
    }
    ChangeSet { files }
}

/// Applies a change set to its base tree.
pub fn apply_changeset(base: &FileTree, changes: &ChangeSet) -> Result<FileTree, VcsError> {
    let mut tree = base.clone();
    for change in &changes.files {
        let existing = tree.get(&change.path);
        match (change.kind, existing) {
            (ChangeKind::Deleted, Some(_)) => {
                tree.remove(&change.path);
                continue;
            }
            (ChangeKind::Added, None) | (ChangeKind::Modified, Some(_)) => {}
            (kind, _) => {
                return Err(VcsError::BadChangeSet(format!(
                    "{kind:?} does not fit the base state of {}",
                    change.path
                )))
            }
        }
        let entry = match &change.binary {
            Some(bytes) => FileEntry::bytes(bytes.clone()),
            None => {
                let old = match existing {
                    Some(e) => e.as_text().ok_or_else(|| {
                        VcsError::BadChangeSet(format!("text hunks against binary {}", change.path))
                    })?,
                    None => "",
                };
                let lines = apply_hunks(&split_lines(old), &change.hunks)?;
                FileEntry::bytes(lines.concat().into_bytes())
            }
        };
        tree.insert(change.path.clone(), entry.with_executable(change.executable));
    }
    Ok(tree)
}
