use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic_with;
use crate::spectral::Signal;

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_IEEE_FLOAT: u16 = 0x0003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFormat {
    Pcm16,
    Pcm24,
    #[default]
    Float32,
}

impl SampleFormat {
    pub fn bits(self) -> u16 {
        match self {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Pcm24 => 24,
            SampleFormat::Float32 => 32,
        }
    }

    /// Upper bound on how far any unitary DFT bin can move when `signal`
    /// is stored in this format (the L2 norm of the rounding error).
    pub fn quantization_bound(self, signal: &Signal) -> f64 {
        match self {
            SampleFormat::Float32 => 2f64.powi(-24) * signal.energy().sqrt() + 1e-38,
            SampleFormat::Pcm16 | SampleFormat::Pcm24 => {
                2f64.powi(-i32::from(self.bits())) * (signal.len() as f64).sqrt()
            }
        }
    }
}

impl std::str::FromStr for SampleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(SampleFormat::Pcm16),
            "pcm24" => Ok(SampleFormat::Pcm24),
            "float32" | "f32" => Ok(SampleFormat::Float32),
            other => Err(Error::Parameter(format!(
                "unknown sample format {other:?} (expected pcm16, pcm24 or float32)"
            ))),
        }
    }
}

/// Header facts of a WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub channels: u16,
    pub sample_rate: u32,
    pub format: SampleFormat,
    pub frames: u32,
}

fn wav_error(path: &Path, err: hound::Error) -> Error {
    if let hound::Error::IoError(e) = err {
        return Error::io(path, e);
    }
    let tag = std::fs::read(path).ok().and_then(|b| probe_format_tag(&b));
    match tag {
        Some(tag) if tag != FORMAT_PCM && tag != FORMAT_IEEE_FLOAT => Error::UnsupportedFormat {
            tag,
            detail: format!("{}: codec is not PCM or IEEE float", path.display()),
        },
        _ if matches!(err, hound::Error::Unsupported) => Error::UnsupportedFormat {
            tag: tag.unwrap_or(0),
            detail: format!("{}: {err}", path.display()),
        },
        _ => Error::Wav {
            path: path.to_path_buf(),
            message: err.to_string(),
        },
    }
}

/// Format tag from the `fmt ` chunk of a RIFF/WAVE byte stream. For
/// WAVE_FORMAT_EXTENSIBLE the sub-format tag is returned.
pub fn probe_format_tag(bytes: &[u8]) -> Option<u16> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return None;
    }
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().ok()?) as usize;
        let body = pos + 8;
        if id == b"fmt " && body + 2 <= bytes.len() {
            let tag = u16::from_le_bytes([bytes[body], bytes[body + 1]]);
            if tag == 0xFFFE && body + 26 <= bytes.len() {
                return Some(u16::from_le_bytes([bytes[body + 24], bytes[body + 25]]));
            }
            return Some(tag);
        }
        pos = body + size + (size & 1);
    }
    None
}

fn classify(path: &Path, spec: hound::WavSpec) -> Result<SampleFormat> {
    match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => Ok(SampleFormat::Pcm16),
        (hound::SampleFormat::Int, 24) => Ok(SampleFormat::Pcm24),
        (hound::SampleFormat::Float, 32) => Ok(SampleFormat::Float32),
        (hound::SampleFormat::Int, bits) => Err(Error::UnsupportedFormat {
            tag: FORMAT_PCM,
            detail: format!("{}: {bits}-bit PCM", path.display()),
        }),
        (hound::SampleFormat::Float, bits) => Err(Error::UnsupportedFormat {
            tag: FORMAT_IEEE_FLOAT,
            detail: format!("{}: {bits}-bit float", path.display()),
        }),
    }
}

pub fn wav_info(path: &Path) -> Result<WavInfo> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    Ok(WavInfo {
        channels: spec.channels,
        sample_rate: spec.sample_rate,
        format: classify(path, spec)?,
        frames: reader.duration(),
    })
}

/// Read one channel of a WAV file. Integer samples are scaled by
/// `2^-(bits-1)`; multichannel files need `channel`.
pub fn read_wav(path: &Path, channel: Option<u16>) -> Result<Signal> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let format = classify(path, spec)?;
    let channels = spec.channels;
    let selected = match channel {
        None if channels == 1 => 0,
        None => return Err(Error::Multichannel { channels }),
        Some(c) if c < channels => c,
        Some(c) => {
            return Err(Error::Parameter(format!(
                "channel {c} requested from a {channels}-channel file"
            )))
        }
    };
    let keep = |i: usize| i % channels as usize == selected as usize;
    let samples: Vec<f64> = match format {
        SampleFormat::Float32 => reader
            .samples::<f32>()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, s)| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        SampleFormat::Pcm16 | SampleFormat::Pcm24 => {
            let scale = 2f64.powi(i32::from(spec.bits_per_sample) - 1);
            reader
                .samples::<i32>()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, s)| s.map(|v| f64::from(v) / scale))
                .collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(|e| wav_error(path, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Signal::new(samples, spec.sample_rate)?.with_tag(name))
}

/// Quantize for an integer target, refusing any sample that does not fit.
fn quantize(signal: &Signal, bits: u16) -> Result<Vec<i32>> {
    let scale = 2f64.powi(i32::from(bits) - 1);
    let (min, max) = (-scale, scale - 1.0);
    let mut out = Vec::with_capacity(signal.len());
    let mut overload: Option<(usize, f64)> = None;
    for (i, &s) in signal.samples().iter().enumerate() {
        let q = (s * scale).round();
        if q < min || q > max {
            if overload.is_none_or(|(_, peak)| s.abs() > peak.abs()) {
                overload = Some((i, s));
            }
        }
        out.push(q as i32);
    }
    match overload {
        Some((index, peak)) => Err(Error::Overload { peak, index, bits }),
        None => Ok(out),
    }
}

/// Write a mono WAV atomically. Integer targets are rounded without dither.
pub fn write_wav(signal: &Signal, path: &Path, format: SampleFormat) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: format.bits(),
        sample_format: match format {
            SampleFormat::Float32 => hound::SampleFormat::Float,
            _ => hound::SampleFormat::Int,
        },
    };
    let quantized = match format {
        SampleFormat::Float32 => None,
        _ => Some(quantize(signal, format.bits())?),
    };
    write_atomic_with(path, |file| {
        let mut writer = hound::WavWriter::new(file, spec).map_err(|e| wav_error(path, e))?;
        match &quantized {
            None => {
                for &s in signal.samples() {
                    writer.write_sample(s as f32).map_err(|e| wav_error(path, e))?;
                }
            }
            Some(values) => {
                for &v in values {
                    writer.write_sample(v).map_err(|e| wav_error(path, e))?;
                }
            }
        }
        writer.finalize().map_err(|e| wav_error(path, e))
    })
}
