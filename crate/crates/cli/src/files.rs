//! Directory listing, JSON output and sidecar manifests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{CliError, CliResult};

/// Extensions accepted for rasters inside input directories.
const RASTER_EXTENSIONS: [&str; 4] = ["png", "tif", "tiff", "npy"];

/// Raster files of `dir` keyed by file stem, sorted by stem.
pub fn list_rasters(dir: &Path) -> CliResult<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Usage(format!("directory not found: {}", dir.display()))
        } else {
            CliError::Runtime(format!("cannot list {}: {e}", dir.display()))
        }
    })?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::Runtime(e.to_string()))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| RASTER_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        if let Some(previous) = out.insert(stem.to_owned(), path.clone()) {
            return Err(CliError::Validation(format!(
                "ambiguous inputs {} and {}",
                previous.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Usage(format!("file not found: {}", path.display()))
        } else {
            CliError::Runtime(format!("cannot read {}: {e}", path.display()))
        }
    })
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push(b'\n');
    cellsplit::imagecore::write_atomic(path, |w| w.write_all(&text))?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Sidecar<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: C,
    pub inputs: BTreeMap<&'a str, String>,
    pub outputs: Vec<String>,
}

impl<'a, C: Serialize> Sidecar<'a, C> {
    pub fn new(command: &'a str, config: C) -> Self {
        Sidecar {
            tool: "cellsplit",
            version: cellsplit::VERSION,
            command,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(mut self, name: &'a str, path: &Path) -> Self {
        self.inputs.insert(name, path.display().to_string());
        self
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// Writes the sidecar next to `primary` as `<primary>.json`.
    pub fn write_beside(&self, primary: &Path) -> CliResult<()> {
        let mut name = primary.as_os_str().to_owned();
        name.push(".json");
        write_json(Path::new(&name), self)
    }
}

/// Extension of `path`, lowercased.
pub fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}
