use anyhow::{Context, Result};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Files written by one command, removed again if the command fails.
pub struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(root: PathBuf) -> Self {
        Self { root, files: Vec::new(), dirs: Vec::new() }
    }

    fn ensure_dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        missing.reverse();
        self.dirs.extend(missing);
        Ok(())
    }

    /// Writes `rel` under the output root through `f`.
    pub fn write<F>(&mut self, rel: impl AsRef<Path>, f: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            self.ensure_dir(parent)?;
        }
        self.files.push(path.clone());
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<PathBuf> {
        self.write(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn write_text(&mut self, rel: impl AsRef<Path>, text: &str) -> Result<PathBuf> {
        self.write(rel, |w| Ok(w.write_all(text.as_bytes())?))
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn remove_all(&mut self) {
        for f in self.files.drain(..).rev() {
            let _ = std::fs::remove_file(f);
        }
        for d in self.dirs.drain(..).rev() {
            let _ = std::fs::remove_dir(d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cleanup_removes_created_files_and_dirs() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("out");
        let mut o = Outputs::new(root.clone());
        o.write_text("a/b.txt", "x").unwrap();
        o.write_json("c.json", &vec![1, 2]).unwrap();
        assert!(root.join("a/b.txt").is_file());
        o.remove_all();
        assert!(!root.exists());
    }

    #[test]
    fn cleanup_keeps_existing_dirs() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::write(tmp.path().join("keep.txt"), "k").unwrap();
        let mut o = Outputs::new(tmp.path().to_path_buf());
        o.write_text("new.txt", "x").unwrap();
        o.remove_all();
        assert!(tmp.path().join("keep.txt").is_file());
        assert!(!tmp.path().join("new.txt").exists());
    }
}
