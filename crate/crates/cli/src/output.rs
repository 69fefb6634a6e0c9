use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Writes `name` inside `dir` through a temporary file and a rename, so a
/// reader never sees a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// File-name suffix for scan point `i`, empty outside scans.
pub fn point_suffix(i: Option<usize>) -> String {
    i.map(|i| format!("_{i:03}")).unwrap_or_default()
}
