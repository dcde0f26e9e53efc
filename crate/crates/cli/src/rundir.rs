use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::Local;

/// A fresh output directory. The timestamp lives only in the directory name,
/// so file contents stay reproducible.
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, label: &str) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        let stem = format!("{}-{}", Local::now().format("%Y%m%d-%H%M%S"), sanitize(label));
        for n in 0u32.. {
            let name = if n == 0 { stem.clone() } else { format!("{stem}-{n}") };
            let path = root.join(name);
            match fs::create_dir(&path) {
                Ok(()) => return Ok(RunDir { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e).with_context(|| format!("cannot create {}", path.display())),
            }
        }
        unreachable!("u32 suffixes exhausted")
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes a new file; existing files are never overwritten.
    pub fn write(&self, rel: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .with_context(|| format!("cannot create {}", path.display()))?;
        f.write_all(bytes.as_ref())?;
        Ok(path)
    }
}

fn sanitize(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "run".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collisions_get_a_suffix_and_files_are_write_once() {
        let root = tempfile::tempdir().unwrap();
        let a = RunDir::create(root.path(), "hut").unwrap();
        let b = RunDir::create(root.path(), "hut").unwrap();
        assert_ne!(a.path(), b.path());
        a.write("x.txt", "1").unwrap();
        assert!(a.write("x.txt", "2").is_err());
        assert_eq!(fs::read_to_string(a.path().join("x.txt")).unwrap(), "1");
    }

    #[test]
    fn labels_are_path_safe() {
        assert_eq!(sanitize("a/b c"), "a_b_c");
        assert_eq!(sanitize(""), "run");
    }
}
