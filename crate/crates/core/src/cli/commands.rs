use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::RunConfig;
use super::session::Session;
use super::ReportArgs;
use crate::audio::{self, MetadataSidecar, SampleFormat, SIDECAR_SCHEMA_VERSION};
use crate::channel::{self, ChannelModel, NoiseLevel, Recording, RecordingMode, Simulator};
use crate::digest;
use crate::error::{Error, Result};
use crate::estimator::{self, MeasurementResult};
use crate::io::write_atomic;
use crate::report::emit::REPORT_LOG_KIND;
use crate::report::{
    emit_report, ir_metrics, make_plot_data, IrMetrics, RawComparison, ReportContext, ReportFormats,
    SessionLog, StimulusSummary,
};
use crate::report::session::LOG_FILE;
use crate::safeguard::{
    self, ProfileParams, SafeguardOptions, SafeguardedSignal, ThresholdProfile, ZeroBinPhase,
};
use crate::spectral::{self, Signal};

pub const RESULT_FILE: &str = "result.json";
pub const MEASUREMENT_SCHEMA_VERSION: u64 = 1;
const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub schema_version: u64,
    pub result: MeasurementResult,
    /// Simulated channel with its noise level resolved to a sigma.
    pub channel: Option<ChannelModel>,
    pub metrics: Option<IrMetrics>,
    pub raw_comparison: Option<RawComparison>,
    /// Recorded frame files in the session directory.
    pub frames: Vec<String>,
}

fn file_name(path: &Path) -> Result<String> {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Parameter(format!("{} has no file name", path.display())))
}

/// `foo.wav`, `foo.sg.wav` and `foo.source.wav` all give `foo`.
fn base_name(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "stimulus".into());
    for suffix in [".sg", ".source"] {
        if let Some(base) = stem.strip_suffix(suffix) {
            return base.to_string();
        }
    }
    stem
}

fn largest_odd_at_most(len: usize) -> usize {
    if len % 2 == 1 {
        len
    } else {
        len - 1
    }
}

fn build_profile(padded: &Signal, cfg: &RunConfig) -> Result<ThresholdProfile> {
    let sg = &cfg.safeguard;
    let spectrum = spectral::forward(padded);
    if sg.flat_floor {
        return safeguard::constant_profile(sg.level_db, &spectrum);
    }
    let window = sg.window_bins.min(largest_odd_at_most(padded.len()));
    if window != sg.window_bins {
        eprintln!(
            "note: smoothing window reduced from {} to {window} bins for a {}-sample frame",
            sg.window_bins,
            padded.len()
        );
    }
    safeguard::smoothed_profile(&spectrum, window, sg.rel_floor_db, sg.abs_floor_db)
}

fn config_payload(command: &str, input: &Path, cfg: &RunConfig) -> Result<serde_json::Value> {
    Ok(json!({
        "command": command,
        "input": input.to_string_lossy(),
        "tool_version": TOOL_VERSION,
        "config": serde_json::to_value(cfg)?,
    }))
}

pub fn prepare(input: &Path, cfg: &RunConfig) -> Result<()> {
    let out_dir = cfg.resolved_output_dir();
    let payload = config_payload("prepare", input, cfg)?;
    let mut session = Session::open(&out_dir, &payload, cfg.timestamp)?;
    session.payload("config", payload)?;
    let result = prepare_in(&mut session, input, cfg);
    session.finish(result)
}

fn prepare_in(session: &mut Session, input: &Path, cfg: &RunConfig) -> Result<()> {
    let sgc = &cfg.safeguard;
    let source = audio::read_wav(input, sgc.input_channel)?;
    let source_digest = digest::file_sha256(input)?;
    let padded = source.zero_padded(sgc.pad_len);

    let (profile, tolerance) = match &sgc.profile_from {
        Some(path) => {
            let stored = audio::read_sidecar(path)?;
            let profile = stored.threshold_profile()?;
            if profile.len() != padded.len() {
                return Err(Error::Dimension {
                    expected: profile.len(),
                    found: padded.len(),
                });
            }
            // The input may itself be a stored stimulus; allow for its rounding.
            let input_format = audio::wav_info(input)?.format;
            (profile, input_format.quantization_bound(&padded))
        }
        None => (build_profile(&padded, cfg)?, 0.0),
    };
    let options = SafeguardOptions {
        zero_bin_phase: sgc
            .random_phase_seed
            .map_or(ZeroBinPhase::Zero, |seed| ZeroBinPhase::Random { seed }),
        tolerance,
        created_at: Some(session.now()),
    };
    let sg = safeguard::apply_safeguard_with(&source, &profile, sgc.pad_len, &options)?;

    let base = base_name(input);
    let source_name = format!("{base}.source.wav");
    let stimulus_name = format!("{base}.sg.wav");
    let stimulus_path = session.dir().join(&stimulus_name);
    session.import(input, &source_name)?;
    audio::write_wav(&sg.stimulus, &stimulus_path, sgc.format)?;

    let sidecar = MetadataSidecar {
        schema_version: SIDECAR_SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        stimulus_file: stimulus_name.clone(),
        stimulus_digest: digest::file_sha256(&stimulus_path)?,
        source_file: Some(source_name.clone()),
        source_digest,
        source_channel: sgc.input_channel,
        sample_rate: sg.sample_rate(),
        sample_format: sgc.format,
        original_len: sg.original_len,
        pad_len: sg.pad_len,
        frame_len: sg.frame_len(),
        profile: sg.profile.params().clone(),
        zero_bin_phase: options.zero_bin_phase,
        floor_half: sg.profile.half().to_vec(),
        modified_bins: sg.modified_bins,
        sdr_db: sg.sdr_db,
        created_at: sg.created_at,
    };
    let sidecar_path = audio::sidecar_path(&stimulus_path);
    audio::write_sidecar(&sidecar_path, &sidecar)?;

    session.artifact("source", &source_name)?;
    session.artifact("stimulus", &stimulus_name)?;
    session.artifact("sidecar", &file_name(&sidecar_path)?)?;

    println!("stimulus: {}", stimulus_path.display());
    println!("sidecar: {}", sidecar_path.display());
    println!("modified bins: {} of {}", sg.modified_bins, sg.frame_len());
    println!("sdr_db: {}", sg.sdr_db);
    Ok(())
}

/// A stimulus file with its sidecar, checked against each other.
struct LoadedStimulus {
    sg: SafeguardedSignal,
    sidecar: MetadataSidecar,
    sidecar_path: PathBuf,
}

fn load_stimulus(stimulus: &Path, sidecar: Option<&Path>) -> Result<LoadedStimulus> {
    let sidecar_path = sidecar.map_or_else(|| audio::sidecar_path(stimulus), Path::to_path_buf);
    if !sidecar_path.is_file() {
        return Err(Error::Integrity(format!(
            "{} has no sidecar ({}); only safeguarded stimuli can be measured",
            stimulus.display(),
            sidecar_path.display()
        )));
    }
    let sidecar = audio::read_sidecar(&sidecar_path)?;
    let found = digest::file_sha256(stimulus)?;
    if found != sidecar.stimulus_digest {
        return Err(Error::DigestMismatch {
            path: stimulus.to_path_buf(),
            expected: sidecar.stimulus_digest,
            found,
        });
    }
    let signal = audio::read_wav(stimulus, None)?;
    if signal.len() != sidecar.frame_len || signal.sample_rate() != sidecar.sample_rate {
        return Err(Error::Integrity(format!(
            "{} does not match its sidecar ({} samples at {} Hz expected)",
            stimulus.display(),
            sidecar.frame_len,
            sidecar.sample_rate
        )));
    }
    let sg = SafeguardedSignal {
        stimulus: signal,
        source_digest: sidecar.source_digest.clone(),
        profile: sidecar.threshold_profile()?,
        pad_len: sidecar.pad_len,
        original_len: sidecar.original_len,
        modified_bins: sidecar.modified_bins,
        sdr_db: sidecar.sdr_db,
        created_at: sidecar.created_at,
    };
    Ok(LoadedStimulus {
        sg,
        sidecar,
        sidecar_path,
    })
}

fn channel_model(cfg: &RunConfig, sample_rate: u32) -> Result<Option<ChannelModel>> {
    let ch = &cfg.channel;
    let ir = match (&ch.ir_path, &ch.taps) {
        (Some(path), _) => {
            let ir = audio::read_wav(path, None)?;
            if ir.sample_rate() != sample_rate {
                return Err(Error::SampleRate {
                    left: ir.sample_rate(),
                    right: sample_rate,
                });
            }
            ir.into_samples()
        }
        (None, Some(taps)) => taps.clone(),
        (None, None) => return Ok(None),
    };
    let mut model = ChannelModel::new(ir, sample_rate)?.with_seed(ch.seed);
    if let Some(snr) = ch.snr_db {
        model = model.with_noise(NoiseLevel::SnrDb(snr))?;
    } else if let Some(sigma) = ch.noise_sigma {
        model = model.with_noise(NoiseLevel::Sigma(sigma))?;
    }
    model.validate()?;
    Ok(Some(model))
}

fn mode_of(cfg: &RunConfig) -> RecordingMode {
    if cfg.measurement.single_shot {
        RecordingMode::SingleShot
    } else {
        RecordingMode::Periodic {
            periods: cfg.measurement.periods,
        }
    }
}

fn simulate(channel: &ChannelModel, frame: &Signal, pad_len: usize, mode: RecordingMode) -> Result<Recording> {
    let sim = Simulator::new(channel);
    match mode {
        RecordingMode::Periodic { periods } => sim.periodic_frame(frame, periods),
        RecordingMode::SingleShot => sim.single_shot_frame(frame, pad_len),
    }
}

/// RMS of the noiseless channel output for `frame`.
fn clean_output_rms(channel: &ChannelModel, frame: &Signal, pad_len: usize, mode: RecordingMode) -> Result<f64> {
    let quiet = ChannelModel {
        noise: channel::Noise::None,
        ..channel.clone()
    };
    let rec = simulate(&quiet, frame, pad_len, mode)?;
    Ok(rec.frames[0].rms())
}

/// Split a recorded response into frames of `frame_len` samples.
fn ingest_response(path: &Path, frame_len: usize, sample_rate: u32, mode: RecordingMode) -> Result<Recording> {
    let response = audio::read_wav(path, None)?;
    if response.sample_rate() != sample_rate {
        return Err(Error::SampleRate {
            left: response.sample_rate(),
            right: sample_rate,
        });
    }
    let samples = response.samples();
    if samples.len() % frame_len != 0 {
        return Err(Error::Dimension {
            expected: frame_len * (samples.len() / frame_len).max(1),
            found: samples.len(),
        });
    }
    let count = samples.len() / frame_len;
    let (skip, mode) = match mode {
        RecordingMode::SingleShot if count == 1 => (0, mode),
        RecordingMode::SingleShot => {
            return Err(Error::Dimension {
                expected: frame_len,
                found: samples.len(),
            })
        }
        RecordingMode::Periodic { .. } if count >= 2 => (1, RecordingMode::Periodic { periods: count }),
        RecordingMode::Periodic { .. } => {
            return Err(Error::Parameter(format!(
                "periodic response needs at least 2 periods of {frame_len} samples"
            )))
        }
    };
    let frames = samples
        .chunks(frame_len)
        .skip(skip)
        .map(|c| Signal::new(c.to_vec(), sample_rate))
        .collect::<Result<Vec<_>>>()?;
    Recording::from_frames(frames, mode)
}

pub fn measure(stimulus: &Path, cfg: &RunConfig) -> Result<()> {
    let out_dir = cfg.resolved_output_dir();
    let payload = config_payload("measure", stimulus, cfg)?;
    // Refuse before touching the output directory.
    let loaded = load_stimulus(stimulus, None)?;
    let mut session = Session::open(&out_dir, &payload, cfg.timestamp)?;
    session.payload("config", payload)?;
    let result = measure_in(&mut session, stimulus, loaded, cfg);
    session.finish(result)
}

fn measure_in(session: &mut Session, stimulus: &Path, loaded: LoadedStimulus, cfg: &RunConfig) -> Result<()> {
    let LoadedStimulus {
        sg,
        sidecar,
        sidecar_path,
    } = loaded;
    let rate = sg.sample_rate();
    let mode = mode_of(cfg);

    // Bring stimulus, sidecar and source into the session directory.
    let stimulus_name = sidecar.stimulus_file.clone();
    session.import(stimulus, &stimulus_name)?;
    session.import(&sidecar_path, &file_name(&sidecar_path)?)?;
    let source_path = sidecar
        .source_file
        .as_ref()
        .map(|name| sidecar_path.with_file_name(name))
        .filter(|p| p.is_file());
    if let (Some(path), Some(name)) = (&source_path, &sidecar.source_file) {
        session.import(path, name)?;
        session.artifact("source", name)?;
    }
    session.artifact("stimulus", &stimulus_name)?;
    session.artifact("sidecar", &file_name(&sidecar_path)?)?;

    let channel = channel_model(cfg, rate)?;
    if let Some(path) = &cfg.channel.ir_path {
        let name = format!("channel-{}", file_name(path)?);
        session.import(path, &name)?;
        session.artifact("channel", &name)?;
    }
    let channel = match &channel {
        Some(ch) => Some(ch.with_resolved_sigma(clean_output_rms(ch, &sg.stimulus, sg.pad_len, mode)?)),
        None => None,
    };

    let (recording, frames) = match (&cfg.measurement.response_path, &channel) {
        (Some(path), _) => {
            let name = "response.wav".to_string();
            session.import(path, &name)?;
            session.artifact("recording", &name)?;
            (ingest_response(path, sg.frame_len(), rate, mode)?, vec![name])
        }
        (None, Some(ch)) => {
            let rec = simulate(ch, &sg.stimulus, sg.pad_len, mode)?;
            let mut names = Vec::new();
            for (i, frame) in rec.frames.iter().enumerate() {
                let name = format!("frame_{i:03}.wav");
                audio::write_wav(frame, &session.dir().join(&name), SampleFormat::Float32)?;
                session.artifact("recording", &name)?;
                names.push(name);
            }
            (rec, names)
        }
        (None, None) => {
            return Err(Error::Parameter(
                "measure needs a channel (--channel or --taps) or a recorded --response".into(),
            ))
        }
    };

    let mut result = estimator::estimate_from_recording(&recording, &sg)?;
    let mut metrics = None;
    if let Some(ch) = &channel {
        result = result.with_ground_truth(&ch.ir)?;
        metrics = Some(ir_metrics(&result.h_est, &ch.ir)?);
    }

    let raw_comparison = if cfg.measurement.compare_raw {
        let (ch, m) = match (&channel, &metrics) {
            (Some(ch), Some(m)) => (ch, m),
            _ => {
                return Err(Error::Parameter(
                    "--compare-raw needs a simulated channel".into(),
                ))
            }
        };
        let path = source_path.as_ref().ok_or_else(|| {
            Error::IncompleteSession {
                missing: vec![sidecar.source_file.clone().unwrap_or_else(|| "source audio".into())],
            }
        })?;
        Some(raw_comparison(path, &sidecar, ch, mode, m.error_db)?)
    } else {
        None
    };

    let record = MeasurementRecord {
        schema_version: MEASUREMENT_SCHEMA_VERSION,
        result,
        channel,
        metrics,
        raw_comparison,
        frames,
    };
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    write_atomic(&session.dir().join(RESULT_FILE), text.as_bytes())?;
    session.artifact("result", RESULT_FILE)?;

    println!("session: {}", session.dir().display());
    println!("averaged frames: {}", record.result.averaged_frames);
    if let Some(m) = &record.metrics {
        println!("error_db: {:.3}", m.error_db);
    }
    if let Some(raw) = &record.raw_comparison {
        match (raw.raw_error_db, &raw.raw_failure) {
            (Some(db), _) => println!("raw error_db: {db:.3}"),
            (None, Some(why)) => println!("raw measurement failed: {why}"),
            (None, None) => {}
        }
    }
    Ok(())
}

/// Repeat the simulated measurement with the unsafeguarded source and the
/// same noise vectors.
fn raw_comparison(
    source_path: &Path,
    sidecar: &MetadataSidecar,
    channel: &ChannelModel,
    mode: RecordingMode,
    safeguarded_error_db: f64,
) -> Result<RawComparison> {
    let source = audio::read_wav(source_path, sidecar.source_channel)?;
    let raw = source.zero_padded(sidecar.pad_len);
    if raw.len() != sidecar.frame_len {
        return Err(Error::Dimension {
            expected: sidecar.frame_len,
            found: raw.len(),
        });
    }
    let rec = simulate(channel, &raw, sidecar.pad_len, mode)?;
    let averaged = estimator::average_frames(&rec)?;
    let outcome = estimator::deconvolve(&averaged, &raw, 0.0)
        .and_then(|h| ir_metrics(&h, &channel.ir));
    Ok(match outcome {
        Ok(m) => RawComparison {
            safeguarded_error_db,
            raw_error_db: Some(m.error_db),
            raw_failure: None,
        },
        Err(e) => RawComparison {
            safeguarded_error_db,
            raw_error_db: None,
            raw_failure: Some(e.to_string()),
        },
    })
}

fn required<'a>(log: &'a SessionLog, kinds: &[&str]) -> Result<Vec<&'a str>> {
    let mut found = Vec::new();
    let mut missing = Vec::new();
    for kind in kinds {
        match log.latest_artifact(kind).and_then(|e| e.artifact.as_deref()) {
            Some(name) => found.push(name),
            None => missing.push(format!("{kind} artifact")),
        }
    }
    if missing.is_empty() {
        Ok(found)
    } else {
        Err(Error::IncompleteSession { missing })
    }
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let dir = &args.session_dir;
    let log_path = dir.join(LOG_FILE);
    if !log_path.is_file() {
        return Err(Error::IncompleteSession {
            missing: vec![LOG_FILE.to_string()],
        });
    }
    let mut session = Session::open(dir, &serde_json::Value::Null, args.timestamp)?;
    session.log().verify_artifacts(dir, &[REPORT_LOG_KIND])?;
    let names = required(session.log(), &["result", "stimulus", "sidecar", "source"])?;
    let (result_name, stimulus_name, sidecar_name, source_name) = (names[0], names[1], names[2], names[3]);

    let text = std::fs::read_to_string(dir.join(result_name)).map_err(|e| Error::io(dir.join(result_name), e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let version = raw.get("schema_version").and_then(serde_json::Value::as_u64).unwrap_or(0);
    if version != MEASUREMENT_SCHEMA_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: MEASUREMENT_SCHEMA_VERSION,
        });
    }
    let record: MeasurementRecord = serde_json::from_value(raw)?;
    let loaded = load_stimulus(&dir.join(stimulus_name), Some(&dir.join(sidecar_name)))?;
    if record.result.stimulus_digest != loaded.sg.digest() {
        return Err(Error::Integrity(format!(
            "{result_name} was measured with a different stimulus than {stimulus_name}"
        )));
    }
    let original = audio::read_wav(&dir.join(source_name), loaded.sidecar.source_channel)?;
    let plot = make_plot_data(&original, &loaded.sg)?;
    let formats = ReportFormats {
        json: !args.no_json,
        csv: !args.no_csv,
    };
    let ctx = ReportContext {
        result: &record.result,
        plot: &plot,
        log: session.log(),
        stimulus: Some(StimulusSummary::from(&loaded.sg)),
        metrics: record.metrics.clone(),
        raw_comparison: record.raw_comparison.clone(),
    };
    let written = emit_report(dir, &ctx, formats)?;
    for path in written.iter().filter(|p| !p.ends_with(LOG_FILE)) {
        session.artifact(REPORT_LOG_KIND, &file_name(path)?)?;
        println!("{}", path.display());
    }
    session.save()
}

pub fn verify(stimulus: &Path, sidecar: Option<&Path>) -> Result<()> {
    let loaded = load_stimulus(stimulus, sidecar)?;
    let format = audio::wav_info(stimulus)?.format;
    let tolerance = format.quantization_bound(&loaded.sg.stimulus);
    let check = safeguard::check_floor(&loaded.sg.stimulus, &loaded.sg.profile, tolerance)?;
    let params = match loaded.sg.profile.params() {
        ProfileParams::Constant { level_db } => format!("flat floor at {level_db} dB re peak"),
        ProfileParams::Smoothed {
            window_bins,
            rel_floor_db,
            abs_floor_db,
        } => format!("smoothed floor ({window_bins} bins, {rel_floor_db} dB rel, {abs_floor_db} dB abs)"),
    };
    println!("profile: {params}");
    println!("bins checked: {}", check.bins);
    println!("tolerance: {:e}", check.tolerance);
    println!("min margin: {:e} at bin {}", check.min_margin, check.worst_bin);
    if check.passed() {
        println!("floor: ok");
        Ok(())
    } else {
        println!("floor: {} violation(s)", check.violations);
        Err(Error::FloorViolation {
            violations: check.violations,
            worst_bin: check.worst_bin,
            margin: -check.min_margin,
        })
    }
}
