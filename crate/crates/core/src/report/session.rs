//! Append-only, timestamped session log stored as JSON lines.

use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const LOG_FILE: &str = "session.log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub session_id: String,
    pub seq: u64,
    #[serde(with = "rfc3339")]
    pub timestamp: DateTime<Utc>,
    pub kind: String,
    /// SHA-256 of the artifact file, or of the canonical payload JSON.
    pub digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<serde_json::Value>,
}

/// RFC 3339 with a `Z` suffix and whatever sub-second digits are needed.
pub mod rfc3339 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn format(t: &DateTime<Utc>) -> String {
        t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
    }

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&raw)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    session_id: String,
    entries: Vec<LogEntry>,
}

impl SessionLog {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            entries: Vec::new(),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn last_timestamp(&self) -> Option<DateTime<Utc>> {
        self.entries.last().map(|e| e.timestamp)
    }

    /// Append an entry. Timestamps must not go backwards.
    pub fn record(
        &mut self,
        timestamp: DateTime<Utc>,
        kind: &str,
        digest: String,
        artifact: Option<String>,
        payload: Option<serde_json::Value>,
    ) -> Result<&LogEntry> {
        if let Some(last) = self.last_timestamp() {
            if timestamp < last {
                return Err(Error::Integrity(format!(
                    "log timestamp {} precedes {}",
                    rfc3339::format(&timestamp),
                    rfc3339::format(&last)
                )));
            }
        }
        self.entries.push(LogEntry {
            session_id: self.session_id.clone(),
            seq: self.entries.len() as u64,
            timestamp,
            kind: kind.to_string(),
            digest,
            artifact,
            payload,
        });
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Log a file inside `dir` together with its content digest.
    pub fn record_artifact(
        &mut self,
        timestamp: DateTime<Utc>,
        kind: &str,
        dir: &Path,
        file_name: &str,
    ) -> Result<&LogEntry> {
        let digest = digest::file_sha256(&dir.join(file_name))?;
        self.record(timestamp, kind, digest, Some(file_name.to_string()), None)
    }

    /// Log an inline JSON payload, digested in its serialized form.
    pub fn record_payload(
        &mut self,
        timestamp: DateTime<Utc>,
        kind: &str,
        payload: serde_json::Value,
    ) -> Result<&LogEntry> {
        let digest = digest::sha256_hex(&serde_json::to_vec(&payload)?);
        self.record(timestamp, kind, digest, None, Some(payload))
    }

    /// Most recent entry of `kind` naming `artifact`.
    pub fn latest_artifact(&self, kind: &str) -> Option<&LogEntry> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.kind == kind && e.artifact.is_some())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<LogEntry>)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let session_id = entries
            .first()
            .map(|e| e.session_id.clone())
            .ok_or_else(|| Error::Integrity("session log is empty".into()))?;
        for (i, pair) in entries.windows(2).enumerate() {
            if pair[1].timestamp < pair[0].timestamp {
                return Err(Error::Integrity(format!(
                    "log entry {} goes back in time",
                    i + 1
                )));
            }
        }
        if let Some(e) = entries.iter().find(|e| e.session_id != session_id) {
            return Err(Error::Integrity(format!(
                "log entry {} belongs to session {}",
                e.seq, e.session_id
            )));
        }
        Ok(Self {
            session_id,
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl()?.as_bytes())
    }

    /// Check that every logged artifact exists in `dir` with its recorded
    /// digest. Entries whose kind is in `skip_kinds` are not checked.
    pub fn verify_artifacts(&self, dir: &Path, skip_kinds: &[&str]) -> Result<()> {
        let mut latest: Vec<&LogEntry> = Vec::new();
        for entry in self.entries.iter().filter(|e| !skip_kinds.contains(&e.kind.as_str())) {
            if let Some(name) = &entry.artifact {
                latest.retain(|e| e.artifact.as_ref() != Some(name));
                latest.push(entry);
            }
        }
        let missing: Vec<String> = latest
            .iter()
            .filter_map(|e| e.artifact.clone())
            .filter(|name| !dir.join(name).is_file())
            .collect();
        if !missing.is_empty() {
            return Err(Error::IncompleteSession { missing });
        }
        for entry in latest {
            let name = entry.artifact.as_ref().expect("filtered on artifact");
            let path = dir.join(name);
            let found = digest::file_sha256(&path)?;
            if found != entry.digest {
                return Err(Error::DigestMismatch {
                    path,
                    expected: entry.digest.clone(),
                    found,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap()
    }

    #[test]
    fn timestamps_must_not_decrease() {
        let mut log = SessionLog::new("s1");
        log.record(t(5), "a", "d".into(), None, None).unwrap();
        log.record(t(5), "b", "d".into(), None, None).unwrap();
        assert!(log.record(t(4), "c", "d".into(), None, None).is_err());
        assert_eq!(log.entries().len(), 2);
    }

    #[test]
    fn jsonl_round_trip_and_format() {
        let mut log = SessionLog::new("s1");
        log.record_payload(t(0), "config", serde_json::json!({"a": 1})).unwrap();
        log.record(t(1), "note", "x".into(), Some("f.wav".into()), None).unwrap();
        let text = log.to_jsonl().unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"timestamp\":\"2023-11-14T22:13:20Z\""));
        assert_eq!(SessionLog::from_jsonl(&text).unwrap(), log);
    }

    #[test]
    fn artifacts_are_verified() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), b"hello").unwrap();
        let mut log = SessionLog::new("s1");
        log.record_artifact(t(0), "data", dir.path(), "a.txt").unwrap();
        log.verify_artifacts(dir.path(), &[]).unwrap();

        std::fs::write(dir.path().join("a.txt"), b"tampered").unwrap();
        assert!(matches!(
            log.verify_artifacts(dir.path(), &[]),
            Err(Error::DigestMismatch { .. })
        ));
        std::fs::remove_file(dir.path().join("a.txt")).unwrap();
        match log.verify_artifacts(dir.path(), &[]) {
            Err(Error::IncompleteSession { missing }) => assert_eq!(missing, vec!["a.txt"]),
            other => panic!("unexpected {other:?}"),
        }
        log.verify_artifacts(dir.path(), &["data"]).unwrap();
    }
}
