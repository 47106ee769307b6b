use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Dir,
    File,
    Symlink,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirEntry {
    pub name: String,
    pub kind: EntryKind,
    pub size: u64,
}

/// A directory tree the session may not leave. Paths starting with `/` are
/// relative to the root; others are relative to the working directory.
#[derive(Debug, Clone)]
pub struct Sandbox {
    root: PathBuf,
}

impl Sandbox {
    pub fn new(root: &Path) -> std::io::Result<Self> {
        let root = fs::canonicalize(root)?;
        if !root.is_dir() {
            return Err(std::io::Error::new(std::io::ErrorKind::NotADirectory, format!("{} is not a directory", root.display())));
        }
        Ok(Sandbox { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// The canonical location of `path`, which must exist inside the root
    /// after resolving `..` and symlinks.
    pub fn resolve(&self, cwd: &Path, path: &str) -> Result<PathBuf, ApiError> {
        let joined = match path.strip_prefix('/') {
            Some(rest) => self.root.join(rest),
            None => cwd.join(path),
        };
        let mut lexical = PathBuf::new();
        for c in joined.components() {
            match c {
                Component::ParentDir => {
                    lexical.pop();
                }
                Component::CurDir => {}
                c => lexical.push(c),
            }
        }
        if !lexical.starts_with(&self.root) {
            return Err(ApiError::PathEscapesSandbox(path.to_string()));
        }
        let canon = fs::canonicalize(&joined).map_err(|_| ApiError::NotFound(path.to_string()))?;
        if !canon.starts_with(&self.root) {
            return Err(ApiError::PathEscapesSandbox(path.to_string()));
        }
        Ok(canon)
    }

    pub fn resolve_dir(&self, cwd: &Path, path: &str) -> Result<PathBuf, ApiError> {
        let p = self.resolve(cwd, path)?;
        if p.is_dir() {
            Ok(p)
        } else {
            Err(ApiError::NotADirectory(path.to_string()))
        }
    }

    /// `/`-rooted display form of a path inside the sandbox.
    pub fn display(&self, p: &Path) -> String {
        let rel = p.strip_prefix(&self.root).unwrap_or(p);
        let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        format!("/{}", parts.join("/"))
    }

    /// Entries of a directory sorted by name.
    pub fn list(&self, dir: &Path) -> Result<Vec<DirEntry>, ApiError> {
        let read = fs::read_dir(dir).map_err(|e| ApiError::NotFound(format!("{}: {e}", self.display(dir))))?;
        let mut out = Vec::new();
        for entry in read.flatten() {
            let Ok(meta) = entry.path().symlink_metadata() else { continue };
            let ft = meta.file_type();
            let kind = if ft.is_symlink() {
                EntryKind::Symlink
            } else if ft.is_dir() {
                EntryKind::Dir
            } else if ft.is_file() {
                EntryKind::File
            } else {
                EntryKind::Other
            };
            let size = if kind == EntryKind::File { meta.len() } else { 0 };
            out.push(DirEntry { name: entry.file_name().to_string_lossy().into_owned(), kind, size });
        }
        out.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree() -> (tempfile::TempDir, Sandbox) {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("root");
        fs::create_dir_all(root.join("a/b")).unwrap();
        fs::write(root.join("a/f.txt"), "hello").unwrap();
        fs::create_dir(tmp.path().join("outside")).unwrap();
        #[cfg(unix)]
        std::os::unix::fs::symlink(tmp.path().join("outside"), root.join("a/out")).unwrap();
        let sb = Sandbox::new(&root).unwrap();
        (tmp, sb)
    }

    #[test]
    fn resolution_stays_inside() {
        let (_tmp, sb) = tree();
        let root = sb.root().to_path_buf();
        let a = sb.resolve_dir(&root, "a").unwrap();
        assert_eq!(sb.display(&a), "/a");
        assert_eq!(sb.resolve_dir(&a, "b/..").unwrap(), a);
        assert_eq!(sb.resolve_dir(&a, "/").unwrap(), root);
        assert_eq!(sb.display(&root), "/");
        assert!(matches!(sb.resolve_dir(&a, "../../.."), Err(ApiError::PathEscapesSandbox(_))));
        assert!(matches!(sb.resolve_dir(&a, "../../nope"), Err(ApiError::PathEscapesSandbox(_))));
        assert!(matches!(sb.resolve_dir(&a, "f.txt"), Err(ApiError::NotADirectory(_))));
        assert!(matches!(sb.resolve_dir(&a, "missing"), Err(ApiError::NotFound(_))));
    }

    #[cfg(unix)]
    #[test]
    fn symlinks_cannot_escape() {
        let (_tmp, sb) = tree();
        let a = sb.root().join("a");
        assert!(matches!(sb.resolve_dir(&a, "out"), Err(ApiError::PathEscapesSandbox(_))));
        let entries = sb.list(&a).unwrap();
        let kinds: Vec<_> = entries.iter().map(|e| (e.name.as_str(), e.kind, e.size)).collect();
        assert_eq!(kinds, [("b", EntryKind::Dir, 0), ("f.txt", EntryKind::File, 5), ("out", EntryKind::Symlink, 0)]);
    }
}
