use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use crate::digest;
use crate::error::Result;
use crate::io::write_atomic;
use crate::report::session::{rfc3339, SessionLog, LOG_FILE};

/// A session directory and its log, with the clock used for new entries.
pub struct Session {
    dir: PathBuf,
    log: SessionLog,
    fixed_time: Option<DateTime<Utc>>,
}

impl Session {
    /// Open the log in `dir`, or start one whose id is derived from the
    /// run configuration and start time.
    pub fn open(dir: &Path, config: &serde_json::Value, fixed_time: Option<DateTime<Utc>>) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        let path = dir.join(LOG_FILE);
        let log = if path.is_file() {
            SessionLog::load(&path)?
        } else {
            let start = fixed_time.unwrap_or_else(Utc::now);
            let seed = format!("{}|{}", serde_json::to_string(config)?, rfc3339::format(&start));
            SessionLog::new(digest::sha256_hex(seed.as_bytes())[..16].to_string())
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            log,
            fixed_time,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn now(&self) -> DateTime<Utc> {
        let t = self.fixed_time.unwrap_or_else(Utc::now);
        self.log.last_timestamp().map_or(t, |last| last.max(t))
    }

    pub fn artifact(&mut self, kind: &str, name: &str) -> Result<()> {
        let now = self.now();
        self.log.record_artifact(now, kind, &self.dir, name)?;
        Ok(())
    }

    pub fn payload(&mut self, kind: &str, payload: serde_json::Value) -> Result<()> {
        let now = self.now();
        self.log.record_payload(now, kind, payload)?;
        Ok(())
    }

    /// Copy `src` into the session directory as `name` unless it already is
    /// that file.
    pub fn import(&self, src: &Path, name: &str) -> Result<()> {
        let dst = self.dir.join(name);
        if let (Ok(a), Ok(b)) = (src.canonicalize(), dst.canonicalize()) {
            if a == b {
                return Ok(());
            }
        }
        let bytes = std::fs::read(src).map_err(|e| crate::Error::io(src, e))?;
        write_atomic(&dst, &bytes)
    }

    pub fn save(&self) -> Result<()> {
        self.log.write(&self.dir.join(LOG_FILE))
    }

    /// Save the log with an `error` entry appended when `result` failed.
    pub fn finish<T>(mut self, result: Result<T>) -> Result<T> {
        if let Err(e) = &result {
            let entry = serde_json::json!({ "message": e.to_string(), "exit_code": e.exit_code() });
            self.payload("error", entry)?;
        }
        self.save()?;
        result
    }
}
