//! Output files are staged under temporary names next to their destination
//! and renamed into place together once every one of them is written.

use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::CliError;

#[derive(Default)]
pub struct PendingWrites {
    staged: Vec<(NamedTempFile, PathBuf)>,
}

impl PendingWrites {
    pub fn add(&mut self, dest: &Path, bytes: Vec<u8>) -> Result<(), CliError> {
        let fail = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", dest.display()));
        let dir = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(dir).map_err(fail)?;
        tmp.write_all(&bytes).map_err(fail)?;
        tmp.flush().map_err(fail)?;
        self.staged.push((tmp, dest.to_path_buf()));
        Ok(())
    }

    /// Renames every staged file into place, returning the destinations.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::with_capacity(self.staged.len());
        for (tmp, dest) in self.staged {
            tmp.persist(&dest)
                .map_err(|e| CliError::Runtime(format!("{}: {}", dest.display(), e.error)))?;
            done.push(dest);
        }
        Ok(done)
    }
}
