//! Simulated LTI channel with additive white Gaussian noise.
//!
//! Two presentation modes are modelled. Periodic stimulation repeats the
//! stimulus and keeps the steady-state periods, which are exactly the
//! circular convolution of one period with the impulse response. Single-shot
//! presentation plays the zero-padded stimulus once; the linear convolution
//! is truncated to the frame length.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{Error, Result};
use crate::safeguard::SafeguardedSignal;
use crate::spectral::{self, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    /// Per-sample standard deviation.
    Sigma(f64),
    /// Relative to the RMS of the noiseless output frame.
    SnrDb(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Noise {
    #[default]
    None,
    WhiteGaussian { level: NoiseLevel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub ir: Vec<f64>,
    pub sample_rate: u32,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub seed: u64,
}

impl ChannelModel {
    /// Noiseless channel with the given impulse response.
    pub fn new(ir: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let model = Self {
            ir,
            sample_rate,
            noise: Noise::None,
            seed: 0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn identity(sample_rate: u32) -> Self {
        Self {
            ir: vec![1.0],
            sample_rate,
            noise: Noise::None,
            seed: 0,
        }
    }

    pub fn with_noise(mut self, level: NoiseLevel) -> Result<Self> {
        self.noise = Noise::WhiteGaussian { level };
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ir.is_empty() {
            return Err(Error::Parameter("impulse response needs at least one tap".into()));
        }
        if let Some(i) = self.ir.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("impulse response tap {i} is not finite")));
        }
        if self.sample_rate == 0 {
            return Err(Error::Parameter("channel sample rate must be positive".into()));
        }
        match self.noise {
            Noise::WhiteGaussian {
                level: NoiseLevel::Sigma(s),
            } if !(s.is_finite() && s >= 0.0) => {
                Err(Error::Parameter(format!("noise sigma {s} must be finite and nonnegative")))
            }
            Noise::WhiteGaussian {
                level: NoiseLevel::SnrDb(snr),
            } if !snr.is_finite() => Err(Error::Parameter(format!("snr {snr} dB is not finite"))),
            _ => Ok(()),
        }
    }

    pub fn ir_len(&self) -> usize {
        self.ir.len()
    }

    /// Noise standard deviation for an output frame with the given RMS.
    pub fn noise_sigma(&self, output_rms: f64) -> f64 {
        match self.noise {
            Noise::None => 0.0,
            Noise::WhiteGaussian {
                level: NoiseLevel::Sigma(s),
            } => s,
            Noise::WhiteGaussian {
                level: NoiseLevel::SnrDb(snr),
            } => output_rms * 10f64.powf(-snr / 20.0),
        }
    }

    /// Same channel with an SNR level resolved to an absolute sigma, so a
    /// second stimulus sees exactly the same noise vectors.
    pub fn with_resolved_sigma(&self, output_rms: f64) -> ChannelModel {
        let mut out = self.clone();
        if let Noise::WhiteGaussian { .. } = out.noise {
            out.noise = Noise::WhiteGaussian {
                level: NoiseLevel::Sigma(self.noise_sigma(output_rms)),
            };
        }
        out
    }

    pub fn digest(&self) -> String {
        digest::sha256_hex(&serde_json::to_vec(self).expect("channel model serializes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RecordingMode {
    Periodic { periods: usize },
    SingleShot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub frames: Vec<Signal>,
    pub mode: RecordingMode,
    pub channel_digest: String,
    /// Noise added to each frame, kept only when requested.
    pub noise: Option<Vec<Signal>>,
}

impl Recording {
    /// Wrap externally captured frames (no simulated channel).
    pub fn from_frames(frames: Vec<Signal>, mode: RecordingMode) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyRecording)?;
        if let Some(bad) = frames.iter().find(|f| f.len() != first.len()) {
            return Err(Error::Dimension {
                expected: first.len(),
                found: bad.len(),
            });
        }
        Ok(Self {
            frames,
            mode,
            channel_digest: String::new(),
            noise: None,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frames.first().map_or(0, Signal::len)
    }
}

/// Deterministic white Gaussian noise for `(channel.seed, frame_index)`.
/// `output_rms` is only consulted for SNR-specified levels.
pub fn noise_realization(
    len: usize,
    channel: &ChannelModel,
    frame_index: u64,
    output_rms: f64,
) -> Result<Signal> {
    let sigma = channel.noise_sigma(output_rms);
    if sigma == 0.0 {
        return Signal::zeros(len, channel.sample_rate);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(channel.seed);
    rng.set_stream(frame_index);
    let samples = (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect();
    Signal::new(samples, channel.sample_rate)
}

/// Circular convolution of a frame with `ir` (zero-extended), computed as
/// `sqrt(L) * H ⊙ X` in the unitary domain.
pub fn circular_convolve(frame: &Signal, ir: &[f64]) -> Result<Signal> {
    let len = frame.len();
    if ir.len() > len {
        return Err(Error::ChannelTooLong {
            ir_len: ir.len(),
            frame_len: len,
        });
    }
    let h = Signal::new(spectral::zero_extend(ir, len), frame.sample_rate())?;
    let transfer = spectral::forward(&h).scaled((len as f64).sqrt());
    let product = spectral::hadamard_mul(&transfer, &spectral::forward(frame))?;
    spectral::inverse(&product)
}

/// Full linear convolution, length `x.len() + h.len() - 1`.
pub fn linear_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let to_complex = |v: &[f64]| -> Vec<rustfft::num_complex::Complex64> {
        let mut buf = vec![rustfft::num_complex::Complex64::new(0.0, 0.0); out_len];
        for (b, &s) in buf.iter_mut().zip(v) {
            b.re = s;
        }
        buf
    };
    let mut xs = to_complex(x);
    let mut hs = to_complex(h);
    spectral::raw_fft(&mut xs, false);
    spectral::raw_fft(&mut hs, false);
    for (a, b) in xs.iter_mut().zip(&hs) {
        *a *= b;
    }
    spectral::raw_fft(&mut xs, true);
    xs.iter().map(|c| c.re / out_len as f64).collect()
}

fn check_rate(stimulus: &Signal, channel: &ChannelModel) -> Result<()> {
    if stimulus.sample_rate() != channel.sample_rate {
        return Err(Error::SampleRate {
            left: stimulus.sample_rate(),
            right: channel.sample_rate,
        });
    }
    Ok(())
}

pub struct Simulator<'a> {
    channel: &'a ChannelModel,
    retain_noise: bool,
}

impl<'a> Simulator<'a> {
    pub fn new(channel: &'a ChannelModel) -> Self {
        Self {
            channel,
            retain_noise: false,
        }
    }

    /// Keep each frame's noise vector in the recording.
    pub fn retain_noise(mut self, retain: bool) -> Self {
        self.retain_noise = retain;
        self
    }

    pub fn periodic(&self, stimulus: &SafeguardedSignal, periods: usize) -> Result<Recording> {
        self.periodic_frame(&stimulus.stimulus, periods)
    }

    /// Periodic presentation of an arbitrary frame; the first period is
    /// the transient and is discarded, leaving `periods - 1` frames.
    pub fn periodic_frame(&self, stimulus: &Signal, periods: usize) -> Result<Recording> {
        self.channel.validate()?;
        check_rate(stimulus, self.channel)?;
        if periods < 2 {
            return Err(Error::Parameter(format!(
                "periodic stimulation needs at least 2 periods, got {periods}"
            )));
        }
        let clean = circular_convolve(stimulus, &self.channel.ir)?;
        let rms = clean.rms();
        let (frames, noise) = (1..periods as u64)
            .map(|index| self.noisy(&clean, index, rms))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(self.recording(frames, noise, RecordingMode::Periodic { periods }))
    }

    pub fn single_shot(&self, stimulus: &SafeguardedSignal) -> Result<Recording> {
        self.single_shot_frame(&stimulus.stimulus, stimulus.pad_len)
    }

    /// One presentation: truncated linear convolution plus one noise frame.
    pub fn single_shot_frame(&self, stimulus: &Signal, pad_len: usize) -> Result<Recording> {
        self.channel.validate()?;
        check_rate(stimulus, self.channel)?;
        if self.channel.ir_len() > pad_len + 1 {
            return Err(Error::InsufficientPadding {
                ir_len: self.channel.ir_len(),
                pad_len,
            });
        }
        let mut full = linear_convolve(stimulus.samples(), &self.channel.ir);
        full.truncate(stimulus.len());
        let clean = Signal::new(full, stimulus.sample_rate())?;
        let rms = clean.rms();
        let (frame, noise) = self.noisy(&clean, 0, rms)?;
        Ok(self.recording(vec![frame], vec![noise], RecordingMode::SingleShot))
    }

    fn noisy(&self, clean: &Signal, index: u64, rms: f64) -> Result<(Signal, Signal)> {
        let noise = noise_realization(clean.len(), self.channel, index, rms)?;
        let samples = clean
            .samples()
            .iter()
            .zip(noise.samples())
            .map(|(y, r)| y + r)
            .collect();
        Ok((Signal::new(samples, clean.sample_rate())?, noise))
    }

    fn recording(&self, frames: Vec<Signal>, noise: Vec<Signal>, mode: RecordingMode) -> Recording {
        Recording {
            frames,
            mode,
            channel_digest: self.channel.digest(),
            noise: self.retain_noise.then_some(noise),
        }
    }
}

pub fn simulate_periodic(
    stimulus: &SafeguardedSignal,
    channel: &ChannelModel,
    periods: usize,
) -> Result<Recording> {
    Simulator::new(channel).periodic(stimulus, periods)
}

pub fn simulate_single_shot(stimulus: &SafeguardedSignal, channel: &ChannelModel) -> Result<Recording> {
    Simulator::new(channel).single_shot(stimulus)
}
