//! Outputs are written into a staging directory inside the output
//! directory and moved into place only after the command succeeds.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use crate::error::{io, CliError};

pub struct Staging {
    out_dir: PathBuf,
    dir: TempDir,
    files: Vec<String>,
}

impl Staging {
    pub fn new(out_dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir)
            .map_err(|e| io(format!("cannot create {}: {e}", out_dir.display())))?;
        let dir = tempfile::Builder::new()
            .prefix(".phonocorr-staging-")
            .tempdir_in(out_dir)
            .map_err(|e| io(format!("cannot stage in {}: {e}", out_dir.display())))?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            dir,
            files: Vec::new(),
        })
    }

    /// Stages `name` (a bare file name) with the bytes produced by `fill`.
    pub fn write(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(io(format!("refusing output name {name:?}")));
        }
        if self.files.iter().any(|f| f == name) {
            return Err(io(format!("output {name} written twice")));
        }
        let mut buf = Vec::new();
        fill(&mut buf)?;
        let mut f = fs::File::create(self.dir.path().join(name)).map_err(io)?;
        f.write_all(&buf).map_err(io)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Moves every staged file into the output directory. The staging
    /// directory is removed either way.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut out = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let target = self.out_dir.join(name);
            fs::rename(self.dir.path().join(name), &target).map_err(|e| {
                io(format!(
                    "cannot move {name} into {}: {e}",
                    self.out_dir.display()
                ))
            })?;
            out.push(target);
        }
        Ok(out)
    }
}

pub fn csv_err(e: impl std::fmt::Display) -> CliError {
    io(format!("writing CSV: {e}"))
}
