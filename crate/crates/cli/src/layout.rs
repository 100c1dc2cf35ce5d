//! Where each command reads and writes under the output directory.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use dualrank::{Error, Result};

pub const LOCK_FILE: &str = ".dualrank.lock";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_STATE_FILE: &str = "train_state.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const TRACE_FILE: &str = "lambda_trace.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const AGREEMENT_FILE: &str = "agreement.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_RANK1_FILE: &str = "sweep_rank1.csv";

#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn stage1(&self, pref_only: bool) -> PathBuf {
        self.root.join(if pref_only { "stage1_pref_only" } else { "stage1" })
    }

    pub fn stage1_checkpoint(&self) -> PathBuf {
        self.stage1(false).join(CHECKPOINT_FILE)
    }

    pub fn aligned(&self, name: &str) -> PathBuf {
        self.root.join("aligned").join(name)
    }

    pub fn eval(&self, name: &str) -> PathBuf {
        self.root.join("eval").join(name)
    }

    pub fn sweep(&self) -> PathBuf {
        self.root.join("sweep")
    }

    pub fn compare(&self, name: &str) -> PathBuf {
        self.root.join("compare").join(name)
    }

    pub fn gradcheck(&self) -> PathBuf {
        self.root.join("gradcheck")
    }
}

/// Directory name of the file's parent, used to label derived outputs.
pub fn parent_name(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

pub fn epsilon_label(epsilon: f64) -> String {
    format!("eps_{epsilon}")
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Exclusive hold on an output directory; released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(root: &Path) -> Result<Self> {
        create_dir(root)?;
        let path = root.join(LOCK_FILE);
        let mut file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::io(
                    &path,
                    std::io::Error::new(e.kind(), "output directory is in use by another dualrank process"),
                )
            } else {
                Error::io(&path, e)
            }
        })?;
        let _ = writeln!(file, "{}", std::process::id());
        Ok(Self { path })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(OutputLock::acquire(dir.path()), Err(Error::Io { .. })));
        drop(lock);
        assert!(!dir.path().join(LOCK_FILE).exists());
        OutputLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn labels() {
        assert_eq!(parent_name(Path::new("runs/stage1/checkpoint.json")), "stage1");
        assert_eq!(epsilon_label(0.05), "eps_0.05");
    }
}
