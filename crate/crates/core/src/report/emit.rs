use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::IrMetrics;
use super::plot::SpectrumPlotData;
use super::session::{rfc3339, SessionLog, LOG_FILE};
use crate::channel::RecordingMode;
use crate::error::Result;
use crate::estimator::MeasurementResult;
use crate::io::write_atomic;
use crate::safeguard::{ProfileParams, SafeguardedSignal, Sdr};

pub const REPORT_SCHEMA_VERSION: u64 = 1;
pub const DB_REFERENCE: &str = "unitary-spectrum dBFS (0 dB = unit DFT-bin magnitude)";
/// Log entries of this kind describe report output and are left out of the
/// report body, so that re-running the report reproduces it byte for byte.
pub const REPORT_LOG_KIND: &str = "report";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportFormats {
    pub json: bool,
    pub csv: bool,
}

impl Default for ReportFormats {
    fn default() -> Self {
        Self { json: true, csv: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSummary {
    pub digest: String,
    pub sample_rate: u32,
    pub frame_len: usize,
    pub original_len: usize,
    pub pad_len: usize,
    pub modified_bins: usize,
    pub sdr_db: Sdr,
    pub profile: ProfileParams,
    pub min_floor: f64,
}

impl From<&SafeguardedSignal> for StimulusSummary {
    fn from(sg: &SafeguardedSignal) -> Self {
        Self {
            digest: sg.digest(),
            sample_rate: sg.sample_rate(),
            frame_len: sg.frame_len(),
            original_len: sg.original_len,
            pad_len: sg.pad_len,
            modified_bins: sg.modified_bins,
            sdr_db: sg.sdr_db,
            profile: sg.profile.params().clone(),
            min_floor: sg.profile.min_floor(),
        }
    }
}

/// Same measurement repeated with the unsafeguarded original.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawComparison {
    pub safeguarded_error_db: f64,
    pub raw_error_db: Option<f64>,
    /// Why the raw deconvolution could not be carried out, if it failed.
    pub raw_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSummary {
    pub mode: RecordingMode,
    pub averaged_frames: usize,
    pub stimulus_digest: String,
    pub sample_rate: u32,
    pub ir_len: usize,
    pub peak_tap: usize,
    pub peak_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSummary {
    pub bins: usize,
    pub max_freq_hz: f64,
    /// Smallest gap between the safeguarded curve and the threshold.
    pub min_floor_margin_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub seq: u64,
    pub timestamp: String,
    pub kind: String,
    pub digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u64,
    pub session_id: String,
    pub db_reference: String,
    pub stimulus: Option<StimulusSummary>,
    pub measurement: MeasurementSummary,
    pub metrics: Option<IrMetrics>,
    pub raw_comparison: Option<RawComparison>,
    pub plot: PlotSummary,
    pub log: Vec<LogSummary>,
}

pub struct ReportContext<'a> {
    pub result: &'a MeasurementResult,
    pub plot: &'a SpectrumPlotData,
    pub log: &'a SessionLog,
    pub stimulus: Option<StimulusSummary>,
    pub metrics: Option<IrMetrics>,
    pub raw_comparison: Option<RawComparison>,
}

impl ReportContext<'_> {
    pub fn build(&self) -> Report {
        let taps = self.result.h_est.samples();
        let (peak_tap, peak_value) = taps
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0_f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, v) } else { best });
        let min_floor_margin_db = self
            .plot
            .safeguarded_db
            .iter()
            .zip(&self.plot.threshold_db)
            .map(|(s, t)| s - t)
            .fold(f64::INFINITY, f64::min);
        Report {
            schema_version: REPORT_SCHEMA_VERSION,
            session_id: self.log.session_id().to_string(),
            db_reference: DB_REFERENCE.to_string(),
            stimulus: self.stimulus.clone(),
            measurement: MeasurementSummary {
                mode: self.result.mode,
                averaged_frames: self.result.averaged_frames,
                stimulus_digest: self.result.stimulus_digest.clone(),
                sample_rate: self.result.h_est.sample_rate(),
                ir_len: taps.len(),
                peak_tap,
                peak_value,
            },
            metrics: self.metrics.clone(),
            raw_comparison: self.raw_comparison.clone(),
            plot: PlotSummary {
                bins: self.plot.len(),
                max_freq_hz: self.plot.freq_hz.last().copied().unwrap_or(0.0),
                min_floor_margin_db: if min_floor_margin_db.is_finite() {
                    min_floor_margin_db
                } else {
                    0.0
                },
            },
            log: self
                .log
                .entries()
                .iter()
                .filter(|e| e.kind != REPORT_LOG_KIND)
                .map(|e| LogSummary {
                    seq: e.seq,
                    timestamp: rfc3339::format(&e.timestamp),
                    kind: e.kind.clone(),
                    digest: e.digest.clone(),
                    artifact: e.artifact.clone(),
                })
                .collect(),
        }
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(writer.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)
}

pub fn plot_csv(plot: &SpectrumPlotData) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "freq_hz",
            "original_db",
            "safeguarded_db",
            "smoothed_original_db",
            "smoothed_safeguarded_db",
            "threshold_db",
        ],
        (0..plot.len()).map(|m| {
            vec![
                num(plot.freq_hz[m]),
                num(plot.original_db[m]),
                num(plot.safeguarded_db[m]),
                num(plot.smoothed_original_db[m]),
                num(plot.smoothed_safeguarded_db[m]),
                num(plot.threshold_db[m]),
            ]
        }),
    )
}

pub fn ir_csv(result: &MeasurementResult) -> Result<Vec<u8>> {
    let rate = f64::from(result.h_est.sample_rate());
    let residual = result.residual.as_ref().map(|r| r.samples());
    let mut header = vec!["tap", "time_s", "h_est"];
    if residual.is_some() {
        header.push("residual");
    }
    csv_bytes(
        &header,
        result.h_est.samples().iter().enumerate().map(|(n, v)| {
            let mut row = vec![n.to_string(), num(n as f64 / rate), num(*v)];
            if let Some(r) = residual {
                row.push(num(r[n]));
            }
            row
        }),
    )
}

pub fn metrics_csv(metrics: &IrMetrics, raw: Option<&RawComparison>) -> Result<Vec<u8>> {
    let mut rows = vec![
        vec!["rmse".to_string(), num(metrics.rmse)],
        vec!["error_db".to_string(), num(metrics.error_db)],
        vec![
            "spectral_log_distance_db".to_string(),
            num(metrics.spectral_log_distance_db),
        ],
        vec!["bins_compared".to_string(), metrics.bins_compared.to_string()],
    ];
    if let Some(db) = raw.and_then(|r| r.raw_error_db) {
        rows.push(vec!["raw_error_db".to_string(), num(db)]);
    }
    csv_bytes(&["metric", "value"], rows.into_iter())
}

/// Write `report.json`, `plot.csv`, `ir.csv`, `metrics.csv` (when metrics
/// are known) and the session log into `dir`. Output bytes depend only on
/// the inputs.
pub fn emit_report(dir: &Path, ctx: &ReportContext<'_>, formats: ReportFormats) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    if formats.json {
        let mut text = serde_json::to_string_pretty(&ctx.build())?;
        text.push('\n');
        put("report.json", text.as_bytes())?;
    }
    if formats.csv {
        put("plot.csv", &plot_csv(ctx.plot)?)?;
        put("ir.csv", &ir_csv(ctx.result)?)?;
        if let Some(m) = &ctx.metrics {
            put("metrics.csv", &metrics_csv(m, ctx.raw_comparison.as_ref())?)?;
        }
    }
    put(LOG_FILE, ctx.log.to_jsonl()?.as_bytes())?;
    Ok(written)
}
