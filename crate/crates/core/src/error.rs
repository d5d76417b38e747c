use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("spectrum is not hermitian: bin {bin} deviates from its mirror by {deviation:e}")]
    Symmetry { bin: usize, deviation: f64 },

    #[error("inverse transform is not real: imaginary residue {residue:e} exceeds tolerance {tolerance:e}")]
    NotReal { residue: f64, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRate { left: u32, right: u32 },

    #[error("unsafeguarded denominator at bin {bin}: |X| = {magnitude:e} is below {min_mag:e}")]
    UnsafeguardedDenominator {
        bin: usize,
        magnitude: f64,
        min_mag: f64,
    },

    #[error("floor violated at {violations} bin(s); worst bin {worst_bin} is {margin:e} below its floor")]
    FloorViolation {
        violations: usize,
        worst_bin: usize,
        margin: f64,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("impulse response of {ir_len} taps does not fit a frame of {frame_len} samples")]
    ChannelTooLong { ir_len: usize, frame_len: usize },

    #[error("impulse response of {ir_len} taps needs at least {} samples of padding, stimulus has {pad_len}", ir_len - 1)]
    InsufficientPadding { ir_len: usize, pad_len: usize },

    #[error("recording contains no frames")]
    EmptyRecording,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Wav { path: PathBuf, message: String },

    #[error("unsupported audio format (format tag {tag:#06x}, {detail})")]
    UnsupportedFormat { tag: u16, detail: String },

    #[error("{channels}-channel audio requires an explicit channel selection")]
    Multichannel { channels: u16 },

    #[error("sample overload: peak {peak} at index {index} does not fit the {bits}-bit target")]
    Overload { peak: f64, index: usize, bits: u16 },

    #[error("digest mismatch for {}: expected {expected}, found {found}", path.display())]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("unsupported schema version {found} (supported: {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error("incomplete session, missing: {}", missing.join(", "))]
    IncompleteSession { missing: Vec<String> },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnsafeguardedDenominator { .. } | Error::FloorViolation { .. } => 3,
            Error::Io { .. } | Error::Wav { .. } | Error::Csv(_) => 4,
            Error::DigestMismatch { .. }
            | Error::Integrity(_)
            | Error::UnsupportedVersion { .. }
            | Error::IncompleteSession { .. } => 5,
            _ => 2,
        }
    }
}
