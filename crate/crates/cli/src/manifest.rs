//! `run_manifest.txt`, written next to every output directory's contents.

use std::path::Path;
use std::time::Instant;

use surro_core::fsio;

use crate::fail::CliResult;

pub struct RunManifest {
    command: String,
    start: Instant,
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self { command: command.to_string(), start: Instant::now(), entries: Vec::new() }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn path(&mut self, key: &str, p: &Path) -> &mut Self {
        self.set(key, p.display())
    }

    /// The wall-time line is the only field that differs between reruns.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let mut s = format!("[run]\ncommand = {}\ntool_version = {}\n", self.command, env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str(&format!("wall_time_s = {:.3}\n", self.start.elapsed().as_secs_f64()));
        fsio::write_atomic(&dir.join("run_manifest.txt"), s.as_bytes())?;
        Ok(())
    }
}
