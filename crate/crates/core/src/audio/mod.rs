//! WAV input/output and the stimulus metadata sidecar.

pub mod sidecar;
pub mod wav;

pub use sidecar::{read_sidecar, sidecar_path, write_sidecar, MetadataSidecar, SIDECAR_SCHEMA_VERSION};
pub use wav::{read_wav, wav_info, write_wav, SampleFormat, WavInfo};
