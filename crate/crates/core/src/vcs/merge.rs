//! Three-way merge of file trees with randomized whole-region conflict
//! resolution.
//!
//! Both parents are diffed against the common ancestor. Hunks whose base
//! ranges do not collide are applied as they are. Colliding hunks from the
//! two sides are grouped into a contiguous region; the region is taken whole
//! from one parent, chosen by a fair coin from the seeded generator. The
//! output never contains conflict markers.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::diff::{apply_hunks, diff_lines, Hunk};
use super::tree::{split_lines, FileEntry, FileTree, RepoPath};

/// Which parent a conflicted region was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Parent {
    First,
    Second,
}

impl From<Parent> for u8 {
    fn from(p: Parent) -> u8 {
        match p {
            Parent::First => 1,
            Parent::Second => 2,
        }
    }
}

impl TryFrom<u8> for Parent {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Parent::First),
            2 => Ok(Parent::Second),
            other => Err(format!("parent must be 1 or 2, got {other}")),
        }
    }
}

/// Base line range `start .. end` (1-based, end exclusive). An empty range
/// marks competing insertions before line `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRegion {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub path: RepoPath,
    pub region: LineRegion,
    pub chosen_parent: Parent,
    /// The whole file was taken from one side: binary content, add/add of
    /// differing assets, or modify/delete.
    #[serde(default)]
    pub whole_file: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeOutcome {
    pub merged: FileTree,
    pub conflicts: Vec<Conflict>,
    pub clean: bool,
}

fn coin(rng: &mut ChaCha8Rng) -> Parent {
    if rng.gen_bool(0.5) {
        Parent::First
    } else {
        Parent::Second
    }
}

/// Merges `first` and `second` against their common ancestor `base`.
/// Deterministic for a fixed `seed`: conflicts are resolved in path order,
/// then region order, one draw each.
pub fn merge_trees(base: &FileTree, first: &FileTree, second: &FileTree, seed: u64) -> MergeOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut merged = FileTree::new();
    let mut conflicts = Vec::new();

    let paths: BTreeSet<&RepoPath> = base.paths().chain(first.paths()).chain(second.paths()).collect();
    for path in paths {
        let (b, x, y) = (base.get(path), first.get(path), second.get(path));
        let result = if x == y || y == b {
            x.cloned()
        } else if x == b {
            y.cloned()
        } else {
            merge_file(path, b, x, y, &mut rng, &mut conflicts)
        };
        if let Some(entry) = result {
            merged.insert(path.clone(), entry);
        }
    }
    let clean = conflicts.is_empty();
    MergeOutcome {
        merged,
        conflicts,
        clean,
    }
}

/// Both sides changed the file, differently.
fn merge_file(
    path: &RepoPath,
    base: Option<&FileEntry>,
    first: Option<&FileEntry>,
    second: Option<&FileEntry>,
    rng: &mut ChaCha8Rng,
    conflicts: &mut Vec<Conflict>,
) -> Option<FileEntry> {
    let base_text = base.map_or(Some(""), FileEntry::as_text);
    let texts = (
        base_text,
        first.and_then(FileEntry::as_text),
        second.and_then(FileEntry::as_text),
    );
    if let (Some(b), Some(x), Some(y)) = texts {
        let base_exec = base.is_some_and(|e| e.executable);
        let (x_exec, y_exec) = (first.unwrap().executable, second.unwrap().executable);
        let executable = if x_exec != base_exec { x_exec } else { y_exec };
        let (b, x, y) = (split_lines(b), split_lines(x), split_lines(y));
        let lines = merge_lines(path, &b, &x, &y, rng, conflicts);
        return Some(FileEntry::bytes(lines.concat().into_bytes()).with_executable(executable));
    }
    let chosen_parent = coin(rng);
    let base_lines = base_text.map_or(0, |t| split_lines(t).len());
    conflicts.push(Conflict {
        path: path.clone(),
        region: LineRegion {
            start: 1,
            end: base_lines + 1,
        },
        chosen_parent,
        whole_file: true,
    });
    match chosen_parent {
        Parent::First => first.cloned(),
        Parent::Second => second.cloned(),
    }
}

struct Cluster<'h> {
    start: usize,
    end: usize,
    first: Vec<&'h Hunk>,
    second: Vec<&'h Hunk>,
}

impl<'h> Cluster<'h> {
    fn new(side: Parent, h: &'h Hunk) -> Self {
        let mut c = Cluster {
            start: h.start,
            end: h.end(),
            first: Vec::new(),
            second: Vec::new(),
        };
        c.push(side, h);
        c
    }

    fn push(&mut self, side: Parent, h: &'h Hunk) {
        self.end = self.end.max(h.end());
        match side {
            Parent::First => self.first.push(h),
            Parent::Second => self.second.push(h),
        }
    }

    /// Hunks arrive sorted by (start, len), so `h.start >= self.start`.
    fn collides(&self, h: &Hunk) -> bool {
        let extent_empty = self.start == self.end;
        match (extent_empty, h.len == 0) {
            (false, false) => h.start < self.end,
            (false, true) => self.start < h.start && h.start < self.end,
            (true, true) => h.start == self.start,
            (true, false) => false,
        }
    }

    /// The region's text as one side would have it.
    fn side_text(&self, base: &[&str], hunks: &[&Hunk]) -> Vec<String> {
        let local: Vec<Hunk> = hunks
            .iter()
            .map(|h| Hunk {
                start: h.start - self.start + 1,
                len: h.len,
                lines: h.lines.clone(),
            })
            .collect();
        apply_hunks(&base[self.start - 1..self.end - 1], &local)
            .expect("side hunks lie inside their cluster")
    }
}

/// Line-level three-way merge of one text file.
pub fn merge_lines(
    path: &RepoPath,
    base: &[&str],
    first: &[&str],
    second: &[&str],
    rng: &mut ChaCha8Rng,
    conflicts: &mut Vec<Conflict>,
) -> Vec<String> {
    let first_hunks = diff_lines(base, first);
    let second_hunks = diff_lines(base, second);
    let mut tagged: Vec<(Parent, &Hunk)> = first_hunks
        .iter()
        .map(|h| (Parent::First, h))
        .chain(second_hunks.iter().map(|h| (Parent::Second, h)))
        .collect();
    tagged.sort_by_key(|(_, h)| (h.start, h.len));

    let mut clusters: Vec<Cluster> = Vec::new();
    for (side, h) in tagged {
        match clusters.last_mut() {
            Some(c) if c.collides(h) => c.push(side, h),
            _ => clusters.push(Cluster::new(side, h)),
        }
    }

    let mut output: Vec<Hunk> = Vec::new();
    for c in &clusters {
        if c.first.is_empty() || c.second.is_empty() {
            output.extend(c.first.iter().chain(&c.second).map(|h| (*h).clone()));
            continue;
        }
        let first_text = c.side_text(base, &c.first);
        let second_text = c.side_text(base, &c.second);
        let lines = if first_text == second_text {
            first_text
        } else {
            let chosen_parent = coin(rng);
            conflicts.push(Conflict {
                path: path.clone(),
                region: LineRegion {
                    start: c.start,
                    end: c.end,
                },
                chosen_parent,
                whole_file: false,
            });
            match chosen_parent {
                Parent::First => first_text,
                Parent::Second => second_text,
            }
        };
        output.push(Hunk {
            start: c.start,
            len: c.end - c.start,
            lines,
        });
    }
    output.sort_by_key(|h| (h.start, h.len));
    apply_hunks(base, &output).expect("clusters are disjoint and sorted")
}
