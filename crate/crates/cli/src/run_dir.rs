//! `runs/<name>/{manifests,weights,metrics,explanations}` and its lock file.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifests(&self) -> PathBuf {
        self.root.join("manifests")
    }

    pub fn weights(&self) -> PathBuf {
        self.root.join("weights")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics")
    }

    pub fn explanations(&self) -> PathBuf {
        self.root.join("explanations")
    }

    pub fn windows_manifest(&self) -> PathBuf {
        self.manifests().join("windows.csv")
    }

    pub fn fold_plan(&self) -> PathBuf {
        self.manifests().join("folds.csv")
    }

    pub fn fold_weights(&self, fold: usize) -> PathBuf {
        self.weights().join(format!("fold_{fold}.pcgw"))
    }

    /// Creates the layout and takes the lock; released when the guard drops.
    pub fn open(&self) -> Result<RunLock, CliError> {
        for d in [self.manifests(), self.weights(), self.metrics(), self.explanations()] {
            fs::create_dir_all(&d).map_err(|e| CliError::Data(format!("cannot create {}: {e}", d.display())))?;
        }
        let path = self.root.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Runtime(format!(
                "run directory {} is in use (remove {} if no other command is running)",
                self.root.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::Data(format!("cannot create {}: {e}", path.display()))),
        }
    }
}

#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes via a sibling temporary file and a rename, so an interrupted
/// command never leaves a half-written artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::new(dir.path().join("r"));
        let lock = run.open().unwrap();
        assert!(run.manifests().is_dir() && run.explanations().is_dir());
        assert!(matches!(run.open(), Err(CliError::Runtime(_))));
        drop(lock);
        run.open().unwrap();
    }
}
