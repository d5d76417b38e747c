use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, Signal};

/// Rendered value for magnitudes below [`MAG_FLOOR`] and for exact zeros.
pub const DB_FLOOR: f64 = -300.0;
pub const MAG_FLOOR: f64 = 1e-15;
/// Bins of the true transfer function more than this far below its peak
/// are left out of the spectral log distance.
pub const LOG_DISTANCE_RANGE_DB: f64 = -60.0;

/// `20 log10(magnitude)`, with [`DB_FLOOR`] below [`MAG_FLOOR`].
pub fn amplitude_db(magnitude: f64) -> f64 {
    if magnitude < MAG_FLOOR {
        DB_FLOOR
    } else {
        20.0 * magnitude.log10()
    }
}

/// `10 log10(num / den)`, clamped at [`DB_FLOOR`].
pub fn power_ratio_db(num: f64, den: f64) -> f64 {
    let ratio = num / den;
    if ratio < 1e-30 {
        DB_FLOOR
    } else {
        10.0 * ratio.log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrMetrics {
    pub rmse: f64,
    /// `10 log10(||h_est - h||^2 / ||h||^2)`.
    pub error_db: f64,
    /// RMS difference of the log magnitude responses, in dB.
    pub spectral_log_distance_db: f64,
    pub bins_compared: usize,
}

pub fn ir_metrics(h_est: &Signal, h_true: &[f64]) -> Result<IrMetrics> {
    let len = h_est.len();
    if h_true.len() > len {
        return Err(Error::Dimension {
            expected: len,
            found: h_true.len(),
        });
    }
    let truth = spectral::zero_extend(h_true, len);
    let true_energy = spectral::energy(&truth);
    if true_energy == 0.0 {
        return Err(Error::DegenerateInput("ground-truth response is all zero".into()));
    }
    let err_energy: f64 = h_est
        .samples()
        .iter()
        .zip(&truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum();

    let true_mag = spectral::forward(&Signal::new(truth, h_est.sample_rate())?).magnitudes();
    let est_mag = spectral::forward(h_est).magnitudes();
    let peak = true_mag.iter().copied().fold(0.0, f64::max);
    let cutoff = peak * 10f64.powf(LOG_DISTANCE_RANGE_DB / 20.0);
    let (sum_sq, count) = true_mag
        .iter()
        .zip(&est_mag)
        .filter(|(t, _)| **t >= cutoff)
        .fold((0.0, 0usize), |(acc, n), (t, e)| {
            let d = amplitude_db(*e) - amplitude_db(*t);
            (acc + d * d, n + 1)
        });

    Ok(IrMetrics {
        rmse: (err_energy / len as f64).sqrt(),
        error_db: power_ratio_db(err_energy, true_energy),
        spectral_log_distance_db: (sum_sq / count as f64).sqrt(),
        bins_compared: count,
    })
}
