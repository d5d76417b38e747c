//! Threshold profiles and the safeguarding transform.
//!
//! A safeguarded stimulus is the original sound, zero-padded, with every DFT
//! bin whose magnitude falls below the per-bin floor lifted onto the floor
//! while keeping its phase. Bins already at or above the floor are left
//! untouched, so the perturbation is confined to the quiet parts of the
//! spectrum and the deconvolution denominator is bounded away from zero.

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::spectral::{self, Signal, Spectrum};

pub const DEFAULT_WINDOW_BINS: usize = 65;
pub const DEFAULT_REL_FLOOR_DB: f64 = -20.0;
pub const DEFAULT_ABS_FLOOR_DB: f64 = -60.0;
pub const DEFAULT_PAD_LEN: usize = 0;

/// How a profile was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileParams {
    /// Flat floor `peak * 10^(level_db/20)`.
    Constant { level_db: f64 },
    /// Floor following the smoothed power spectrum.
    Smoothed {
        window_bins: usize,
        rel_floor_db: f64,
        abs_floor_db: f64,
    },
}

impl Default for ProfileParams {
    fn default() -> Self {
        ProfileParams::Smoothed {
            window_bins: DEFAULT_WINDOW_BINS,
            rel_floor_db: DEFAULT_REL_FLOOR_DB,
            abs_floor_db: DEFAULT_ABS_FLOOR_DB,
        }
    }
}

/// Per-bin nonnegative floor in unitary-spectrum magnitude units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProfile {
    floor: Vec<f64>,
    params: ProfileParams,
}

impl ThresholdProfile {
    /// Validates that the floor is finite, nonnegative and symmetric
    /// (`floor[m] == floor[L-m]`).
    pub fn new(floor: Vec<f64>, params: ProfileParams) -> Result<Self> {
        if floor.is_empty() {
            return Err(Error::Parameter("threshold profile is empty".into()));
        }
        if let Some(i) = floor.iter().position(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::Parameter(format!(
                "floor[{i}] = {} is not a finite nonnegative value",
                floor[i]
            )));
        }
        let len = floor.len();
        for m in 1..len {
            let (a, b) = (floor[m], floor[len - m]);
            if (a - b).abs() > 1e-12 * a.max(b).max(1.0) {
                return Err(Error::Parameter(format!(
                    "floor is not symmetric: floor[{m}] = {a}, floor[{}] = {b}",
                    len - m
                )));
            }
        }
        Ok(Self { floor, params })
    }

    /// Rebuild a full-length profile from its first `len/2 + 1` entries.
    pub fn from_half(half: &[f64], len: usize, params: ProfileParams) -> Result<Self> {
        if len < 2 || half.len() != len / 2 + 1 {
            return Err(Error::Dimension {
                expected: len / 2 + 1,
                found: half.len(),
            });
        }
        let floor = (0..len).map(|m| half[m.min(len - m)]).collect();
        Self::new(floor, params)
    }

    pub fn floor(&self) -> &[f64] {
        &self.floor
    }

    /// Non-redundant half, bins `0..=L/2`.
    pub fn half(&self) -> &[f64] {
        &self.floor[..self.floor.len() / 2 + 1]
    }

    pub fn params(&self) -> &ProfileParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.floor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.floor.is_empty()
    }

    pub fn min_floor(&self) -> f64 {
        self.floor.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Flat floor relative to the spectral peak.
pub fn constant_profile(level_db_rel_peak: f64, spectrum: &Spectrum) -> Result<ThresholdProfile> {
    if !level_db_rel_peak.is_finite() {
        return Err(Error::Parameter(format!("level {level_db_rel_peak} dB is not finite")));
    }
    let peak = spectrum.peak_magnitude();
    if peak == 0.0 {
        return Err(Error::DegenerateInput(
            "all-zero spectrum has no peak to reference".into(),
        ));
    }
    let level = peak * db_to_amplitude(level_db_rel_peak);
    ThresholdProfile::new(
        vec![level; spectrum.len()],
        ProfileParams::Constant {
            level_db: level_db_rel_peak,
        },
    )
}

/// Circular moving average of `|X[m]|^2` over `window_bins` (odd) bins.
pub fn smoothed_power(spectrum: &Spectrum, window_bins: usize) -> Result<Vec<f64>> {
    let len = spectrum.len();
    if window_bins % 2 == 0 {
        return Err(Error::Parameter(format!(
            "smoothing window must be an odd number of bins, got {window_bins}"
        )));
    }
    if window_bins > len {
        return Err(Error::Parameter(format!(
            "smoothing window of {window_bins} bins exceeds the {len}-bin spectrum"
        )));
    }
    let power: Vec<f64> = spectrum.bins().iter().map(|b| b.norm_sqr()).collect();
    let half = (window_bins / 2) as isize;
    let len_i = len as isize;
    // Direct sums: prefix-sum differences lose the quiet bins next to a loud peak.
    Ok((0..len_i)
        .map(|m| {
            let sum: f64 = (-half..=half)
                .map(|k| power[(m + k).rem_euclid(len_i) as usize])
                .sum();
            sum / window_bins as f64
        })
        .collect())
}

/// Frequency-dependent floor following the smoothed spectrum:
/// `max(sqrt(P[m]) * rel, max(sqrt(P)) * abs)`.
///
/// For an all-zero spectrum the absolute term is referenced to unit
/// magnitude (0 dB in unitary-spectrum dBFS) so silence still receives a
/// floor.
pub fn smoothed_profile(
    spectrum: &Spectrum,
    window_bins: usize,
    rel_floor_db: f64,
    abs_floor_db: f64,
) -> Result<ThresholdProfile> {
    if !(rel_floor_db.is_finite() && abs_floor_db.is_finite()) {
        return Err(Error::Parameter("floor levels must be finite".into()));
    }
    let smoothed: Vec<f64> = smoothed_power(spectrum, window_bins)?
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let peak = smoothed.iter().copied().fold(0.0, f64::max);
    let reference = if peak > 0.0 { peak } else { 1.0 };
    let rel = db_to_amplitude(rel_floor_db);
    let abs_level = reference * db_to_amplitude(abs_floor_db);
    let len = smoothed.len();
    let raw: Vec<f64> = smoothed.iter().map(|s| (s * rel).max(abs_level)).collect();
    let floor = (0..len).map(|m| raw[m].max(raw[(len - m) % len])).collect();
    ThresholdProfile::new(
        floor,
        ProfileParams::Smoothed {
            window_bins,
            rel_floor_db,
            abs_floor_db,
        },
    )
}

/// Signal-to-deviation ratio of a safeguarded stimulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sdr {
    /// No bin was modified (+infinity).
    NoDeviation,
    /// The original had zero energy (-infinity).
    AllDeviation,
    Db(f64),
}

impl Sdr {
    pub fn as_db(&self) -> f64 {
        match self {
            Sdr::NoDeviation => f64::INFINITY,
            Sdr::AllDeviation => f64::NEG_INFINITY,
            Sdr::Db(v) => *v,
        }
    }
}

impl std::fmt::Display for Sdr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sdr::NoDeviation => write!(f, "no-deviation"),
            Sdr::AllDeviation => write!(f, "all-deviation"),
            Sdr::Db(v) => write!(f, "{v:.2} dB"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SdrRepr {
    Db(f64),
    Label(String),
}

impl Serialize for Sdr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sdr::Db(v) => SdrRepr::Db(*v),
            other => SdrRepr::Label(other.to_string()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Sdr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        match SdrRepr::deserialize(deserializer)? {
            SdrRepr::Db(v) => Ok(Sdr::Db(v)),
            SdrRepr::Label(s) if s == "no-deviation" => Ok(Sdr::NoDeviation),
            SdrRepr::Label(s) if s == "all-deviation" => Ok(Sdr::AllDeviation),
            SdrRepr::Label(s) => Err(serde::de::Error::custom(format!("unknown sdr label {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZeroBinPhase {
    /// Zero-magnitude bins become `floor + 0i`.
    #[default]
    Zero,
    /// Zero-magnitude bins get a seeded random phase (random sign at DC and Nyquist).
    Random { seed: u64 },
}

#[derive(Debug, Clone, Default)]
pub struct SafeguardOptions {
    pub zero_bin_phase: ZeroBinPhase,
    /// Bins within this distance below the floor are left alone. Used when
    /// re-safeguarding a stimulus that went through sample quantization.
    pub tolerance: f64,
    /// Timestamp recorded on the result; the current time when `None`.
    pub created_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeguardedSignal {
    pub stimulus: Signal,
    pub source_digest: String,
    pub profile: ThresholdProfile,
    pub pad_len: usize,
    pub original_len: usize,
    pub modified_bins: usize,
    pub sdr_db: Sdr,
    pub created_at: DateTime<Utc>,
}

impl SafeguardedSignal {
    /// Length of the padded frame, the grid the floor guarantee holds on.
    pub fn frame_len(&self) -> usize {
        self.stimulus.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.stimulus.sample_rate()
    }

    pub fn digest(&self) -> String {
        self.stimulus.digest()
    }

    pub fn spectrum(&self) -> Spectrum {
        spectral::forward(&self.stimulus)
    }
}

pub fn apply_safeguard(
    signal: &Signal,
    profile: &ThresholdProfile,
    pad_len: usize,
) -> Result<SafeguardedSignal> {
    apply_safeguard_with(signal, profile, pad_len, &SafeguardOptions::default())
}

pub fn apply_safeguard_with(
    signal: &Signal,
    profile: &ThresholdProfile,
    pad_len: usize,
    options: &SafeguardOptions,
) -> Result<SafeguardedSignal> {
    let padded = signal.zero_padded(pad_len);
    let len = padded.len();
    if profile.len() != len {
        return Err(Error::Dimension {
            expected: len,
            found: profile.len(),
        });
    }
    if !(options.tolerance >= 0.0) {
        return Err(Error::Parameter("tolerance must be nonnegative".into()));
    }
    let spectrum = spectral::forward(&padded);
    let mut rng = match options.zero_bin_phase {
        ZeroBinPhase::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        ZeroBinPhase::Zero => None,
    };

    let mut bins = spectrum.bins().to_vec();
    let mut modified = 0;
    for (m, (bin, &floor)) in bins.iter_mut().zip(profile.floor()).enumerate() {
        let magnitude = bin.norm();
        if magnitude >= floor - options.tolerance {
            continue;
        }
        modified += 1;
        *bin = if magnitude > 0.0 {
            *bin * (floor / magnitude)
        } else {
            match rng.as_mut() {
                None => Complex64::new(floor, 0.0),
                Some(rng) if m == 0 || 2 * m == len => {
                    Complex64::new(if rng.random_bool(0.5) { floor } else { -floor }, 0.0)
                }
                Some(rng) => Complex64::from_polar(
                    floor,
                    rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                ),
            }
        };
    }

    let stimulus = if modified == 0 {
        padded.clone()
    } else {
        let lifted = Spectrum::new(bins, spectrum.sample_rate())?;
        spectral::inverse(&spectral::enforce_hermitian(&lifted))?
            .with_tag(format!("safeguarded:{}", signal.origin_tag()))
    };

    let sdr_db = deviation_ratio(padded.samples(), stimulus.samples());
    Ok(SafeguardedSignal {
        stimulus,
        source_digest: signal.digest(),
        profile: profile.clone(),
        pad_len,
        original_len: signal.len(),
        modified_bins: modified,
        sdr_db,
        created_at: options.created_at.unwrap_or_else(Utc::now),
    })
}

fn deviation_ratio(padded: &[f64], stimulus: &[f64]) -> Sdr {
    let signal_energy = spectral::energy(padded);
    let deviation: f64 = padded
        .iter()
        .zip(stimulus)
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    if deviation == 0.0 {
        Sdr::NoDeviation
    } else if signal_energy == 0.0 {
        Sdr::AllDeviation
    } else {
        Sdr::Db(10.0 * (signal_energy / deviation).log10())
    }
}

/// `10 log10(||x_pad||^2 / ||x_sg - x_pad||^2)` for the original signal.
pub fn safeguard_report(original: &Signal, sg: &SafeguardedSignal) -> Result<Sdr> {
    let padded = original.zero_padded(sg.pad_len);
    if padded.len() != sg.frame_len() {
        return Err(Error::Dimension {
            expected: sg.frame_len(),
            found: padded.len(),
        });
    }
    Ok(deviation_ratio(padded.samples(), sg.stimulus.samples()))
}

/// Outcome of re-checking a stimulus against a floor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FloorCheck {
    pub bins: usize,
    pub violations: usize,
    /// Smallest `|X[m]| - floor[m]` over all bins.
    pub min_margin: f64,
    pub worst_bin: usize,
    pub tolerance: f64,
}

impl FloorCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Check `|forward(signal)[m]| >= floor[m] - tolerance` on every bin.
pub fn check_floor(signal: &Signal, profile: &ThresholdProfile, tolerance: f64) -> Result<FloorCheck> {
    if signal.len() != profile.len() {
        return Err(Error::Dimension {
            expected: profile.len(),
            found: signal.len(),
        });
    }
    let spectrum = spectral::forward(signal);
    let mut check = FloorCheck {
        bins: signal.len(),
        violations: 0,
        min_margin: f64::INFINITY,
        worst_bin: 0,
        tolerance,
    };
    for (m, (bin, floor)) in spectrum.bins().iter().zip(profile.floor()).enumerate() {
        let margin = bin.norm() - floor;
        if margin < check.min_margin {
            check.min_margin = margin;
            check.worst_bin = m;
        }
        if margin < -tolerance {
            check.violations += 1;
        }
    }
    Ok(check)
}
