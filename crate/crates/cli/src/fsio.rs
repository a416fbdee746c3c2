//! File plumbing: exit-code-carrying failures, atomic writes, and config
//! path resolution through `HERCULES_CONFIG_DIR`.

use std::fs;
use std::path::{Path, PathBuf};

/// Exit codes: 2 config error, 3 infeasible scenario, 4 internal error.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// A command failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: String) -> Failure {
        Failure {
            code: EXIT_CONFIG,
            message,
        }
    }

    pub fn infeasible(message: String) -> Failure {
        Failure {
            code: EXIT_INFEASIBLE,
            message,
        }
    }

    pub fn internal(message: String) -> Failure {
        Failure {
            code: EXIT_INTERNAL,
            message,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for Failure {}

/// Name of the environment variable holding the default config directory.
pub const CONFIG_DIR_ENV: &str = "HERCULES_CONFIG_DIR";

/// Locate the scenario config: the path as given if it exists, else inside
/// `$HERCULES_CONFIG_DIR`. `Ok(None)` means the caller passed the default
/// name and no file exists anywhere — run on builtin defaults.
pub fn resolve_config(path: &Path, is_default_name: bool) -> Result<Option<PathBuf>, Failure> {
    if path.exists() {
        return Ok(Some(path.to_path_buf()));
    }
    if path.is_relative() {
        if let Ok(dir) = std::env::var(CONFIG_DIR_ENV) {
            let joined = Path::new(&dir).join(path);
            if joined.exists() {
                return Ok(Some(joined));
            }
        }
    }
    if is_default_name {
        Ok(None)
    } else {
        Err(Failure::config(format!(
            "config file `{}` not found (also tried ${CONFIG_DIR_ENV})",
            path.display()
        )))
    }
}

pub fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::internal(format!("reading `{}`: {e}", path.display())))
}

/// Write via a hidden sibling temp file plus rename, so readers never see a
/// half-written file and concurrent sub-runs cannot interleave.
pub fn atomic_write(path: &Path, contents: &str) -> Result<(), Failure> {
    let err = |e: std::io::Error| Failure::internal(format!("writing `{}`: {e}", path.display()));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(err)?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Failure::internal(format!("`{}` has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, contents).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}
