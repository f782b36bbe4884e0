//! A coarse lock on the output directory so two invocations cannot
//! interleave writes. The lock is a file created with `create_new`, which is
//! atomic on every platform we target; it is removed when the guard drops.
//! A crash can leave the file behind, in which case the error message names
//! it so the operator can delete it after checking no other run is live.

use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::CliError;

const LOCK_NAME: &str = ".fundrank.lock";

/// Holds the output directory lock until dropped.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    /// Creates `dir` if needed and takes the lock inside it.
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| crate::io_err(dir, e))?;
        let path = dir.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                // Best effort: record the owning process for post-mortems.
                let _ = writeln!(file, "pid {}", std::process::id());
                let _ = File::flush(&mut file);
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Locked(format!(
                    "{} exists; delete it if no other run is alive",
                    path.display()
                )))
            }
            Err(e) => Err(crate::io_err(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
