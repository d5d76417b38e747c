use serde::{Deserialize, Serialize};

use super::metrics::amplitude_db;
use crate::error::{Error, Result};
use crate::safeguard::{self, ProfileParams, SafeguardedSignal, DEFAULT_WINDOW_BINS};
use crate::spectral::{self, Spectrum};

/// Half-spectrum power curves (dB, unitary-spectrum dBFS) of the original
/// and safeguarded signals, their smoothed versions and the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPlotData {
    pub freq_hz: Vec<f64>,
    pub original_db: Vec<f64>,
    pub safeguarded_db: Vec<f64>,
    pub smoothed_original_db: Vec<f64>,
    pub smoothed_safeguarded_db: Vec<f64>,
    pub threshold_db: Vec<f64>,
}

impl SpectrumPlotData {
    pub fn len(&self) -> usize {
        self.freq_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq_hz.is_empty()
    }
}

fn smoothing_window(sg: &SafeguardedSignal) -> usize {
    let requested = match sg.profile.params() {
        ProfileParams::Smoothed { window_bins, .. } => *window_bins,
        ProfileParams::Constant { .. } => DEFAULT_WINDOW_BINS,
    };
    let len = sg.frame_len();
    let cap = if len % 2 == 1 { len } else { len - 1 };
    requested.min(cap)
}

fn half_db(values: impl Iterator<Item = f64>, bins: usize) -> Vec<f64> {
    values.take(bins).map(amplitude_db).collect()
}

fn smoothed_db(spectrum: &Spectrum, window: usize, bins: usize) -> Result<Vec<f64>> {
    Ok(half_db(
        safeguard::smoothed_power(spectrum, window)?.into_iter().map(f64::sqrt),
        bins,
    ))
}

pub fn make_plot_data(
    original: &spectral::Signal,
    sg: &SafeguardedSignal,
) -> Result<SpectrumPlotData> {
    let padded = original.zero_padded(sg.pad_len);
    if padded.len() != sg.frame_len() {
        return Err(Error::Dimension {
            expected: sg.frame_len(),
            found: padded.len(),
        });
    }
    if original.sample_rate() != sg.sample_rate() {
        return Err(Error::SampleRate {
            left: original.sample_rate(),
            right: sg.sample_rate(),
        });
    }
    let len = sg.frame_len();
    let bins = len / 2 + 1;
    let rate = sg.sample_rate() as f64;
    let original_spec = spectral::forward(&padded);
    let sg_spec = sg.spectrum();
    let window = smoothing_window(sg);

    Ok(SpectrumPlotData {
        freq_hz: (0..bins).map(|m| m as f64 * rate / len as f64).collect(),
        original_db: half_db(original_spec.bins().iter().map(|b| b.norm()), bins),
        safeguarded_db: half_db(sg_spec.bins().iter().map(|b| b.norm()), bins),
        smoothed_original_db: smoothed_db(&original_spec, window, bins)?,
        smoothed_safeguarded_db: smoothed_db(&sg_spec, window, bins)?,
        threshold_db: half_db(sg.profile.floor().iter().copied(), bins),
    })
}
