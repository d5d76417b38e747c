//! Impulse response estimation by spectral division.
//!
//! With the unitary transform, circular convolution reads
//! `Y = sqrt(L) * H ⊙ X`, so the estimate is
//! `h_est = inverse(S ⊘ X) / sqrt(L)`. Observation noise `r` enters as the
//! separate term `inverse(R ⊘ X) / sqrt(L)`, which is why every bin of the
//! stimulus spectrum has to stay away from zero.

use serde::{Deserialize, Serialize};

use crate::channel::{Recording, RecordingMode};
use crate::error::{Error, Result};
use crate::safeguard::SafeguardedSignal;
use crate::spectral::{self, Signal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub h_est: Signal,
    pub averaged_frames: usize,
    pub mode: RecordingMode,
    pub stimulus_digest: String,
    /// `h_est - h` when the ground truth is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<Signal>,
}

impl MeasurementResult {
    /// Attach the residual against a ground-truth response, zero-extended to
    /// the frame length (the circular model's reference).
    pub fn with_ground_truth(mut self, h_true: &[f64]) -> Result<Self> {
        let len = self.h_est.len();
        if h_true.len() > len {
            return Err(Error::ChannelTooLong {
                ir_len: h_true.len(),
                frame_len: len,
            });
        }
        let reference = spectral::zero_extend(h_true, len);
        let residual = self
            .h_est
            .samples()
            .iter()
            .zip(&reference)
            .map(|(e, t)| e - t)
            .collect();
        self.residual = Some(Signal::new(residual, self.h_est.sample_rate())?);
        Ok(self)
    }
}

/// Denominator guard used for safeguarded stimuli: half the smallest floor.
pub fn default_min_mag(stimulus: &SafeguardedSignal) -> f64 {
    0.5 * stimulus.profile.min_floor()
}

/// Elementwise mean of all frames (synchronous average).
pub fn average_frames(recording: &Recording) -> Result<Signal> {
    let first = recording.frames.first().ok_or(Error::EmptyRecording)?;
    let mut sum = vec![0.0; first.len()];
    for frame in &recording.frames {
        if frame.len() != sum.len() {
            return Err(Error::Dimension {
                expected: sum.len(),
                found: frame.len(),
            });
        }
        for (acc, v) in sum.iter_mut().zip(frame.samples()) {
            *acc += v;
        }
    }
    let count = recording.frames.len() as f64;
    sum.iter_mut().for_each(|v| *v /= count);
    Signal::new(sum, first.sample_rate())
}

/// `inverse(forward(observed) ⊘ forward(stimulus)) / sqrt(L)`, refusing
/// any stimulus bin below `min_mag`.
pub fn deconvolve(observed: &Signal, stimulus: &Signal, min_mag: f64) -> Result<Signal> {
    if observed.len() != stimulus.len() {
        return Err(Error::Dimension {
            expected: stimulus.len(),
            found: observed.len(),
        });
    }
    let quotient = spectral::hadamard_div(
        &spectral::forward(observed),
        &spectral::forward(stimulus),
        min_mag,
    )?;
    spectral::inverse(&quotient.scaled(1.0 / (stimulus.len() as f64).sqrt()))
}

/// Estimate from a single observed frame of the stimulus length.
pub fn estimate_ir(observed: &Signal, stimulus: &SafeguardedSignal) -> Result<MeasurementResult> {
    let h_est = deconvolve(observed, &stimulus.stimulus, default_min_mag(stimulus))?
        .with_tag("h_est");
    Ok(MeasurementResult {
        h_est,
        averaged_frames: 1,
        mode: RecordingMode::SingleShot,
        stimulus_digest: stimulus.digest(),
        residual: None,
    })
}

/// Average the recording's frames, then estimate.
pub fn estimate_from_recording(
    recording: &Recording,
    stimulus: &SafeguardedSignal,
) -> Result<MeasurementResult> {
    let averaged = average_frames(recording)?;
    let mut result = estimate_ir(&averaged, stimulus)?;
    result.averaged_frames = recording.frames.len();
    result.mode = recording.mode;
    Ok(result)
}

/// Noise contribution `inverse(R ⊘ X) / sqrt(L)` of an observation.
pub fn error_term(noise: &Signal, stimulus: &SafeguardedSignal) -> Result<Signal> {
    deconvolve(noise, &stimulus.stimulus, default_min_mag(stimulus))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimmedIr {
    pub taps: Vec<f64>,
    /// `||h_est[n_keep..]||^2 / ||h_est||^2`, zero for an all-zero estimate.
    pub tail_energy_ratio: f64,
}

pub fn trim_ir(result: &MeasurementResult, n_keep: usize) -> Result<TrimmedIr> {
    let h = result.h_est.samples();
    if n_keep > h.len() {
        return Err(Error::Parameter(format!(
            "cannot keep {n_keep} taps of a {}-tap estimate",
            h.len()
        )));
    }
    let total = spectral::energy(h);
    let tail = spectral::energy(&h[n_keep..]);
    Ok(TrimmedIr {
        taps: h[..n_keep].to_vec(),
        tail_energy_ratio: if total > 0.0 { tail / total } else { 0.0 },
    })
}
