//! Directory walking for `spd scan`.

use std::fs;
use std::path::Path;

use spd_core::protocol::{manifest_from_listing, ScanOutcome};

use crate::error::{invalid, CliError, Result};

/// Every file below `root`, as sorted `/`-separated relative paths.
pub fn list_files(root: &Path) -> Result<Vec<String>> {
    if !root.is_dir() {
        return Err(invalid!("{} is not a directory", root.display()));
    }
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(CliError::io(&dir))? {
            let entry = entry.map_err(CliError::io(&dir))?;
            let path = entry.path();
            let kind = entry.file_type().map_err(CliError::io(&path))?;
            if kind.is_dir() {
                stack.push(path);
            } else if kind.is_file() {
                let rel = path.strip_prefix(root).expect("walked paths stay under the root");
                let parts: Option<Vec<&str>> = rel.components().map(|c| c.as_os_str().to_str()).collect();
                let parts = parts.ok_or_else(|| invalid!("non-UTF-8 path {}", path.display()))?;
                out.push(parts.join("/"));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn scan_dir(root: &Path) -> Result<ScanOutcome> {
    Ok(manifest_from_listing(&list_files(root)?)?)
}
