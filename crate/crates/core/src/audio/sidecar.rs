//! `<name>.sg.json`: binds a safeguarded stimulus file to the parameters
//! and floor that produced it.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::wav::SampleFormat;
use crate::digest;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::report::session::rfc3339;
use crate::safeguard::{ProfileParams, Sdr, ThresholdProfile, ZeroBinPhase};

pub const SIDECAR_SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataSidecar {
    pub schema_version: u64,
    pub tool_version: String,
    /// Stimulus WAV, relative to the sidecar's directory.
    pub stimulus_file: String,
    pub stimulus_digest: String,
    /// Copy of the source audio, relative to the sidecar's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_file: Option<String>,
    /// SHA-256 of the source audio file bytes.
    pub source_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_channel: Option<u16>,
    pub sample_rate: u32,
    pub sample_format: SampleFormat,
    pub original_len: usize,
    pub pad_len: usize,
    pub frame_len: usize,
    pub profile: ProfileParams,
    pub zero_bin_phase: ZeroBinPhase,
    /// Floor for bins `0..=frame_len/2`.
    pub floor_half: Vec<f64>,
    pub modified_bins: usize,
    pub sdr_db: Sdr,
    #[serde(with = "rfc3339")]
    pub created_at: DateTime<Utc>,
}

impl MetadataSidecar {
    pub fn threshold_profile(&self) -> Result<ThresholdProfile> {
        ThresholdProfile::from_half(&self.floor_half, self.frame_len, self.profile.clone())
    }
}

/// `foo.sg.wav` and `foo.wav` both map to `foo.sg.json`.
pub fn sidecar_path(wav: &Path) -> PathBuf {
    let stem = wav
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let base = stem.strip_suffix(".sg").unwrap_or(&stem);
    wav.with_file_name(format!("{base}.sg.json"))
}

pub fn write_sidecar(path: &Path, sidecar: &MetadataSidecar) -> Result<()> {
    let mut text = serde_json::to_string_pretty(sidecar)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Parse a sidecar, rejecting unknown schema versions, and check the
/// stimulus digest when the stimulus file is present next to it.
pub fn read_sidecar(path: &Path) -> Result<MetadataSidecar> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let version = raw
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Integrity(format!("{}: missing schema_version", path.display())))?;
    if version != SIDECAR_SCHEMA_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: SIDECAR_SCHEMA_VERSION,
        });
    }
    let sidecar: MetadataSidecar = serde_json::from_value(raw)?;
    if sidecar.floor_half.len() != sidecar.frame_len / 2 + 1 {
        return Err(Error::Integrity(format!(
            "{}: floor has {} entries for a {}-sample frame",
            path.display(),
            sidecar.floor_half.len(),
            sidecar.frame_len
        )));
    }
    let stimulus = path.with_file_name(&sidecar.stimulus_file);
    if stimulus.is_file() {
        let found = digest::file_sha256(&stimulus)?;
        if found != sidecar.stimulus_digest {
            return Err(Error::DigestMismatch {
                path: stimulus,
                expected: sidecar.stimulus_digest,
                found,
            });
        }
    }
    Ok(sidecar)
}
