use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::audio::SampleFormat;
use crate::error::{Error, Result};
use crate::safeguard::{DEFAULT_ABS_FLOOR_DB, DEFAULT_PAD_LEN, DEFAULT_REL_FLOOR_DB, DEFAULT_WINDOW_BINS};

/// Everything a run depends on. Loaded from `--config`, overridden by
/// flags, and written in full to the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub safeguard: SafeguardConfig,
    pub channel: ChannelConfig,
    pub measurement: MeasurementConfig,
    pub output_dir: Option<PathBuf>,
    /// Fixed clock for log entries and sidecars; wall-clock time when unset.
    #[serde(with = "optional_rfc3339")]
    pub timestamp: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafeguardConfig {
    pub flat_floor: bool,
    /// Level of the flat floor relative to the spectral peak.
    pub level_db: f64,
    pub window_bins: usize,
    pub rel_floor_db: f64,
    pub abs_floor_db: f64,
    pub pad_len: usize,
    pub random_phase_seed: Option<u64>,
    pub input_channel: Option<u16>,
    pub format: SampleFormat,
    /// Reuse the floor stored in this sidecar instead of deriving one.
    pub profile_from: Option<PathBuf>,
}

impl Default for SafeguardConfig {
    fn default() -> Self {
        Self {
            flat_floor: false,
            level_db: -40.0,
            window_bins: DEFAULT_WINDOW_BINS,
            rel_floor_db: DEFAULT_REL_FLOOR_DB,
            abs_floor_db: DEFAULT_ABS_FLOOR_DB,
            pad_len: DEFAULT_PAD_LEN,
            random_phase_seed: None,
            input_channel: None,
            format: SampleFormat::Float32,
            profile_from: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub ir_path: Option<PathBuf>,
    pub taps: Option<Vec<f64>>,
    pub snr_db: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementConfig {
    pub periods: usize,
    pub single_shot: bool,
    pub compare_raw: bool,
    pub response_path: Option<PathBuf>,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            periods: 2,
            single_shot: false,
            compare_raw: false,
            response_path: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            safeguard: SafeguardConfig::default(),
            channel: ChannelConfig::default(),
            measurement: MeasurementConfig::default(),
            output_dir: None,
            timestamp: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Parameter(format!("config {}: {e}", path.display())))
    }

    /// `--config` file if given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

mod optional_rfc3339 {
    use super::*;
    use crate::report::session::rfc3339;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Option<DateTime<Utc>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match t {
            Some(t) => s.serialize_str(&rfc3339::format(t)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<DateTime<Utc>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|raw| {
                DateTime::parse_from_rfc3339(&raw)
                    .map(|t| t.with_timezone(&Utc))
                    .map_err(serde::de::Error::custom)
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"safeguard": {"pad_len": 64}, "timestamp": "2026-01-01T00:00:00Z"}"#,
        )
        .unwrap();
        assert_eq!(cfg.safeguard.pad_len, 64);
        assert_eq!(cfg.safeguard.window_bins, 65);
        assert_eq!(cfg.measurement.periods, 2);
        let round: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"safeguard": {"pad": 1}}"#).is_err());
    }
}
