use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliResult;

/// Where a command writes its files.
#[derive(Clone, Debug)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn new(root: PathBuf) -> Self {
        OutputDir { root }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Creates (truncating) a file in the directory.
    pub fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        std::fs::create_dir_all(&self.root)?;
        Ok(BufWriter::new(File::create(self.path(name))?))
    }
}

/// Writes one JSON line.
pub fn emit<T: Serialize>(out: &mut dyn Write, record: &T) -> CliResult<()> {
    let line = serde_json::to_string(record)?;
    writeln!(out, "{line}")?;
    Ok(())
}
