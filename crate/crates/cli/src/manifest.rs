use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use a5tune::{Error, Result};
use serde::Serialize;

/// Record of one subcommand invocation, written as
/// `<out>/run_manifest_<command>.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: Option<PathBuf>,
    pub fingerprint: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Wall-clock milliseconds per phase.
    pub timings_ms: BTreeMap<String, u128>,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&Path>, fingerprint: &str) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.map(Path::to_path_buf),
            fingerprint: fingerprint.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn timing(&mut self, phase: &str, since: Instant) {
        self.timings_ms.insert(phase.to_string(), since.elapsed().as_millis());
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        if let Some(missing) = self.outputs.iter().find(|p| !p.exists()) {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("declared output missing: {}", missing.display()),
            )));
        }
        let path = out_dir.join(format!("run_manifest_{}.json", self.command));
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
