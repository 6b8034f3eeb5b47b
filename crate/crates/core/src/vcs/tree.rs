use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::VcsError;

/// Repository-relative path with forward slashes and no `.`/`..` segments.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RepoPath(String);

impl RepoPath {
    pub fn new(path: impl Into<String>) -> Result<Self, VcsError> {
        let path = path.into();
        let bad = |why: &str| Err(VcsError::InvalidPath(path.clone(), why.to_owned()));
        if path.is_empty() {
            return bad("empty");
        }
        if path.starts_with('/') {
            return bad("absolute");
        }
        if path.contains('\\') || path.contains('\0') {
            return bad("contains a backslash or NUL");
        }
        for segment in path.split('/') {
            match segment {
                "" => return bad("empty segment"),
                "." | ".." => return bad("relative segment"),
                ".git" => return bad("reserved segment"),
                _ => {}
            }
        }
        Ok(RepoPath(path))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn extension(&self) -> Option<&str> {
        let name = self.0.rsplit('/').next()?;
        let (stem, ext) = name.rsplit_once('.')?;
        (!stem.is_empty() && !ext.is_empty()).then_some(ext)
    }
}

impl fmt::Display for RepoPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for RepoPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl Serialize for RepoPath {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for RepoPath {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        RepoPath::new(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// One file of a snapshot.
#[derive(Clone, PartialEq, Eq)]
pub struct FileEntry {
    data: Vec<u8>,
    pub executable: bool,
}

impl FileEntry {
    /// Text content; CRLF and lone CR line endings are normalized to LF.
    pub fn text(content: &str) -> Self {
        let normalized = if content.contains('\r') {
            content.replace("\r\n", "\n").replace('\r', "\n")
        } else {
            content.to_owned()
        };
        FileEntry {
            data: normalized.into_bytes(),
            executable: false,
        }
    }

    /// Raw content, copied through untouched.
    pub fn bytes(data: Vec<u8>) -> Self {
        FileEntry {
            data,
            executable: false,
        }
    }

    pub fn with_executable(mut self, executable: bool) -> Self {
        self.executable = executable;
        self
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// UTF-8 without NUL bytes counts as text; everything else is an asset.
    pub fn as_text(&self) -> Option<&str> {
        if self.data.contains(&0) {
            return None;
        }
        std::str::from_utf8(&self.data).ok()
    }

    pub fn is_text(&self) -> bool {
        self.as_text().is_some()
    }

    pub fn line_count(&self) -> usize {
        self.as_text().map_or(0, |t| split_lines(t).len())
    }
}

impl fmt::Debug for FileEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_text() {
            Some(t) if t.len() <= 80 => write!(f, "FileEntry({t:?}, x={})", self.executable),
            _ => write!(f, "FileEntry({} bytes, x={})", self.data.len(), self.executable),
        }
    }
}

/// Splits text into lines that keep their `\n` terminator; only the last
/// line may lack one. Concatenating the pieces yields the input.
pub fn split_lines(text: &str) -> Vec<&str> {
    text.split_inclusive('\n').collect()
}

/// Complete snapshot of a codebase: path → file, ordered by path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileTree {
    files: BTreeMap<RepoPath, FileEntry>,
}

impl FileTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: RepoPath, entry: FileEntry) -> Option<FileEntry> {
        self.files.insert(path, entry)
    }

    /// Convenience for tests and fixtures.
    pub fn with_text(mut self, path: &str, content: &str) -> Result<Self, VcsError> {
        self.insert(RepoPath::new(path)?, FileEntry::text(content));
        Ok(self)
    }

    pub fn remove(&mut self, path: &RepoPath) -> Option<FileEntry> {
        self.files.remove(path)
    }

    pub fn get(&self, path: &RepoPath) -> Option<&FileEntry> {
        self.files.get(path)
    }

    pub fn contains(&self, path: &RepoPath) -> bool {
        self.files.contains_key(path)
    }

    /// Whether a new file at `path` can be added: nothing lives at that
    /// path, and it neither sits below an existing file nor shadows a
    /// directory.
    pub fn fits(&self, path: &RepoPath) -> bool {
        let p = path.as_str();
        self.files.keys().all(|existing| {
            let e = existing.as_str();
            e != p
                && !(p.starts_with(e) && p.as_bytes()[e.len()] == b'/')
                && !(e.starts_with(p) && e.as_bytes()[p.len()] == b'/')
        })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RepoPath, &FileEntry)> + '_ {
        self.files.iter()
    }

    pub fn paths(&self) -> impl Iterator<Item = &RepoPath> + '_ {
        self.files.keys()
    }

    /// Text files, in path order. Only these are eligible for mutation.
    pub fn evolvable(&self) -> impl Iterator<Item = (&RepoPath, &FileEntry)> + '_ {
        self.files.iter().filter(|(_, e)| e.is_text())
    }

    /// Reads a directory recursively, skipping `.git`. Text files are
    /// newline-normalized; other files are kept byte-exact.
    pub fn read_dir(root: &Path) -> Result<Self, VcsError> {
        let mut tree = FileTree::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            let entries = fs::read_dir(&dir).map_err(|e| VcsError::io(&dir, e))?;
            for entry in entries {
                let entry = entry.map_err(|e| VcsError::io(&dir, e))?;
                let path = entry.path();
                let file_type = entry.file_type().map_err(|e| VcsError::io(&path, e))?;
                if file_type.is_dir() {
                    if entry.file_name() != ".git" {
                        stack.push(path);
                    }
                    continue;
                }
                if !file_type.is_file() {
                    continue;
                }
                let rel = path
                    .strip_prefix(root)
                    .expect("walked path is under root")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join("/");
                let data = fs::read(&path).map_err(|e| VcsError::io(&path, e))?;
                let file = match String::from_utf8(data) {
                    Ok(text) if !text.contains('\0') => FileEntry::text(&text),
                    Ok(text) => FileEntry::bytes(text.into_bytes()),
                    Err(e) => FileEntry::bytes(e.into_bytes()),
                };
                tree.insert(RepoPath::new(rel)?, file.with_executable(is_executable(&path)));
            }
        }
        Ok(tree)
    }

    /// Writes the tree into `dir`, replacing whatever was there.
    pub fn materialize(&self, dir: &Path) -> Result<(), VcsError> {
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| VcsError::io(dir, e))?;
        }
        fs::create_dir_all(dir).map_err(|e| VcsError::io(dir, e))?;
        for (path, entry) in &self.files {
            let target = dir.join(path.as_str());
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent).map_err(|e| VcsError::io(parent, e))?;
            }
            fs::write(&target, entry.data()).map_err(|e| VcsError::io(&target, e))?;
            set_executable(&target, entry.executable)?;
        }
        Ok(())
    }
}

impl FromIterator<(RepoPath, FileEntry)> for FileTree {
    fn from_iter<I: IntoIterator<Item = (RepoPath, FileEntry)>>(iter: I) -> Self {
        FileTree {
            files: iter.into_iter().collect(),
        }
    }
}

#[cfg(unix)]
fn is_executable(path: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    fs::metadata(path).map(|m| m.permissions().mode() & 0o111 != 0).unwrap_or(false)
}

#[cfg(not(unix))]
fn is_executable(_: &Path) -> bool {
    false
}

#[cfg(unix)]
fn set_executable(path: &Path, executable: bool) -> Result<(), VcsError> {
    use std::os::unix::fs::PermissionsExt;
    let mode = if executable { 0o755 } else { 0o644 };
    fs::set_permissions(path, fs::Permissions::from_mode(mode)).map_err(|e| VcsError::io(path, e))
}

#[cfg(not(unix))]
fn set_executable(_: &Path, _: bool) -> Result<(), VcsError> {
    Ok(())
}
