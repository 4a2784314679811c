//! Run manifest: `key = value` lines followed by one `output = <path>` line
//! per file written. Written on success and on failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.txt";

pub fn version() -> String {
    option_env!("OTFWI_GIT_DESCRIBE")
        .map(str::to_string)
        .unwrap_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")))
}

/// Hex SHA-256 of the canonical configuration text.
pub fn config_hash(config: &str) -> String {
    hex::encode(Sha256::digest(config.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub scenario: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub started: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
    pub outputs: Vec<PathBuf>,
    /// Extra `key = value` facts (solver diagnostics, summary numbers).
    pub notes: Vec<(String, String)>,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: usize) -> Self {
        RunManifest {
            command: command.to_string(),
            scenario: None,
            config_hash: config_hash(""),
            seed,
            threads,
            started: Utc::now(),
            finished: None,
            outputs: Vec::new(),
            notes: Vec::new(),
            status: "running".into(),
            exit_code: 0,
            error: None,
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let ts = |t: &DateTime<Utc>| t.to_rfc3339_opts(SecondsFormat::Millis, true);
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(
            s,
            "scenario = {}",
            self.scenario.as_deref().unwrap_or("none")
        );
        let _ = writeln!(s, "config_hash = {}", self.config_hash);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "version = {}", version());
        let _ = writeln!(s, "started = {}", ts(&self.started));
        let _ = writeln!(
            s,
            "finished = {}",
            self.finished.as_ref().map_or("none".into(), ts)
        );
        let _ = writeln!(s, "status = {}", self.status);
        let _ = writeln!(s, "exit_code = {}", self.exit_code);
        if let Some(e) = &self.error {
            let _ = writeln!(s, "error = {}", e.replace('\n', " "));
        }
        for (k, v) in &self.notes {
            let _ = writeln!(s, "{k} = {v}");
        }
        for p in &self.outputs {
            let _ = writeln!(s, "output = {}", p.display());
        }
        s
    }

    pub fn write(&mut self, dir: &Path) -> std::io::Result<PathBuf> {
        self.finished = Some(Utc::now());
        std::fs::create_dir_all(dir)?;
        let path = dir.join(FILE_NAME);
        std::fs::write(&path, self.render())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        assert_eq!(config_hash("a = 1"), config_hash("a = 1"));
        assert_ne!(config_hash("a = 1"), config_hash("a = 2"));
        assert_eq!(config_hash("").len(), 64);
    }

    #[test]
    fn render_lists_outputs_and_errors() {
        let mut m = RunManifest::new("simulate", 7, 2);
        m.outputs.push(PathBuf::from("out/shot_000.bin"));
        m.status = "error".into();
        m.exit_code = 2;
        m.error = Some("bad\nkey".into());
        m.note("shots", 1);
        let text = m.render();
        assert!(text.contains("command = simulate\n"));
        assert!(text.contains("seed = 7\n"));
        assert!(text.contains("error = bad key\n"));
        assert!(text.contains("shots = 1\n"));
        assert!(text.ends_with("output = out/shot_000.bin\n"));
        assert!(text.contains("finished = none\n"));
    }
}
