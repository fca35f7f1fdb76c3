//! Run directories and run records.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mfclab_core::metrics::MetricsReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const RECORD_FILE: &str = "run_record.json";
/// Present in a run directory whose command did not finish successfully.
pub const FAILURE_MARKER: &str = "FAILED";

/// SHA-256 of the canonical configuration text, hex encoded.
pub fn config_hash(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Metrics of one simulated run, without the per-section detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub controller: String,
    pub trajectory: String,
    pub seed: u64,
    pub completed: bool,
    pub failure: Option<String>,
    pub iae: f64,
    pub mle: f64,
    pub m_epsilon: f64,
    pub m_zeta: f64,
    /// SimLog CSV, relative to the run directory.
    pub log: Option<String>,
}

impl RunMetrics {
    pub fn from_report(controller: &str, trajectory: &str, seed: u64, report: &MetricsReport) -> Self {
        RunMetrics {
            controller: controller.to_string(),
            trajectory: trajectory.to_string(),
            seed,
            completed: report.completed,
            failure: None,
            iae: report.iae,
            mle: report.mle,
            m_epsilon: report.m_epsilon,
            m_zeta: report.m_zeta,
            log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    pub tool_version: String,
    pub seeds: Vec<u64>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub runs: Vec<RunMetrics>,
    /// Other artifacts, relative to the run directory.
    pub files: Vec<String>,
}

/// Owner of all writes into one run directory.
pub struct RunDir {
    path: PathBuf,
    record: RunRecord,
}

impl RunDir {
    /// Creates `<root>/<command>-<time>-<hash8>`; a numeric suffix keeps
    /// directories from the same second apart.
    pub fn create(root: &Path, command: &str, canonical_config: &str) -> Result<Self, CliError> {
        let hash = config_hash(canonical_config);
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
        fs::create_dir_all(root)
            .map_err(|e| CliError::Config(format!("cannot create output root `{}`: {e}", root.display())))?;
        let base = format!("{command}-{stamp}-{}", &hash[..8]);
        let mut path = root.join(&base);
        let mut n = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    n += 1;
                    path = root.join(format!("{base}-{n}"));
                }
                Err(e) => return Err(e.into()),
            }
        }
        fs::write(path.join("config.toml"), canonical_config)?;
        let record = RunRecord {
            command: command.to_string(),
            config_hash: hash,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: Vec::new(),
            status: "running".into(),
            message: None,
            runs: Vec::new(),
            files: vec!["config.toml".into()],
        };
        Ok(RunDir { path, record })
    }

    /// Reopens an existing run directory; its stored configuration must
    /// hash to `canonical_config`.
    pub fn reopen(path: &Path, canonical_config: &str) -> Result<Self, CliError> {
        let text = fs::read_to_string(path.join(RECORD_FILE))
            .map_err(|e| CliError::Config(format!("`{}` is not a run directory: {e}", path.display())))?;
        let mut record: RunRecord =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("corrupt run record: {e}")))?;
        let hash = config_hash(canonical_config);
        if record.config_hash != hash {
            return Err(CliError::Config(format!(
                "configuration differs from the one in `{}` (hash {} vs {})",
                path.display(),
                &record.config_hash[..8],
                &hash[..8]
            )));
        }
        record.status = "running".into();
        record.message = None;
        let _ = fs::remove_file(path.join(FAILURE_MARKER));
        Ok(RunDir { path: path.to_path_buf(), record })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record_mut(&mut self) -> &mut RunRecord {
        &mut self.record
    }

    fn register(&mut self, name: &str) {
        if !self.record.files.iter().any(|f| f == name) {
            self.record.files.push(name.to_string());
        }
    }

    /// Creates (truncating) an artifact file.
    pub fn create_file(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.register(name);
        Ok(BufWriter::new(File::create(self.path.join(name))?))
    }

    /// Opens an artifact for appending.
    pub fn append_file(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.register(name);
        Ok(BufWriter::new(OpenOptions::new().create(true).append(true).open(self.path.join(name))?))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let mut f = self.create_file(name)?;
        f.write_all(text.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    fn save_record(&self) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(&self.record).map_err(|e| CliError::Internal(e.to_string()))?;
        fs::write(self.path.join(RECORD_FILE), json + "\n")?;
        Ok(())
    }

    /// Writes the record with the outcome of `result`, leaving a failure
    /// marker next to the partial artifacts on error.
    pub fn finish<T>(mut self, result: Result<T, CliError>) -> Result<T, CliError> {
        match &result {
            Ok(_) => self.record.status = "ok".into(),
            Err(e) => {
                self.record.status = "failed".into();
                self.record.message = Some(e.to_string());
                fs::write(self.path.join(FAILURE_MARKER), format!("{e}\n"))?;
            }
        }
        self.save_record()?;
        result
    }
}
