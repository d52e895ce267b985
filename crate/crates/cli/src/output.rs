use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;
use tempfile::NamedTempFile;

/// Failures the library cannot classify on its own.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    NotConverged(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "usage: {msg}"),
            Failure::NotConverged(msg) => write!(f, "not converged: {msg}"),
        }
    }
}

impl std::error::Error for Failure {}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

pub fn exit_code(err: &anyhow::Error) -> u8 {
    use overscale::Error as E;
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => EXIT_USAGE,
                Failure::NotConverged(_) => EXIT_NUMERICAL,
            };
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidArgument(_) | E::UnsupportedConversion(_) => EXIT_USAGE,
                E::NumericalFailure(_) | E::InvalidStart(_) | E::BootstrapUnstable { .. } => EXIT_NUMERICAL,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

/// Where a command's results go: JSON to stdout, notes to stderr, and the
/// artifact to `--out` when given.
pub struct Output {
    pub seed: u64,
    quiet: bool,
    path: Option<PathBuf>,
}

impl Output {
    pub fn new(seed: u64, quiet: bool, path: Option<PathBuf>) -> Self {
        Output { seed, quiet, path }
    }

    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    pub fn has_artifact_path(&self) -> bool {
        self.path.is_some()
    }

    pub fn artifact(&self, contents: String) -> Result<()> {
        if let Some(path) = &self.path {
            write_atomic(path, contents.as_bytes())?;
            self.note(format!("wrote {}", path.display()));
        }
        Ok(())
    }

    pub fn json(&self, value: &Value) -> Result<()> {
        self.raw(&(serde_json::to_string(value)? + "\n"))
    }

    pub fn raw(&self, text: &str) -> Result<()> {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(text.as_bytes())?;
        stdout.flush()?;
        Ok(())
    }
}

/// Writes via a temporary file in the destination directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp =
        NamedTempFile::new_in(dir).with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
