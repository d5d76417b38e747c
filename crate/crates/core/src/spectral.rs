//! Unitary DFT contract and elementwise spectral arithmetic.
//!
//! Every [`Spectrum`] holds bins in the unitary convention
//! `X[m] = (1/sqrt(L)) * sum_n x[n] exp(-2*pi*i*m*n/L)`, so that the forward
//! transform preserves the Euclidean norm and thresholds can be stated
//! directly in spectrum units. Internally the transform is delegated to
//! `rustfft` (any length, Bluestein for awkward sizes) and rescaled at the
//! boundary.

use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{Error, Result};

/// Absolute tolerance for the hermitian-symmetry check of flagged spectra.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Relative tolerance (to the real-part RMS) for discarding the imaginary
/// residue of an inverse transform.
pub const REAL_RESIDUE_TOL: f64 = 1e-10;

/// Real-valued discrete-time frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
    #[serde(default)]
    origin_tag: String,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidSignal(format!(
                "length {} is below the minimum of 2",
                samples.len()
            )));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidSignal(format!(
                "non-finite sample {} at index {i}",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            origin_tag: String::new(),
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.origin_tag = tag.into();
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn origin_tag(&self) -> &str {
        &self.origin_tag
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        energy(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        (self.energy() / self.len() as f64).sqrt()
    }

    /// Copy with `pad_len` trailing zeros appended.
    pub fn zero_padded(&self, pad_len: usize) -> Signal {
        let mut samples = Vec::with_capacity(self.len() + pad_len);
        samples.extend_from_slice(&self.samples);
        samples.resize(self.len() + pad_len, 0.0);
        Signal {
            samples,
            sample_rate: self.sample_rate,
            origin_tag: self.origin_tag.clone(),
        }
    }

    /// SHA-256 over the sample rate and the little-endian sample bits.
    pub fn digest(&self) -> String {
        let mut bytes = Vec::with_capacity(4 + 8 * self.len());
        bytes.extend_from_slice(&self.sample_rate.to_le_bytes());
        for s in &self.samples {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        digest::sha256_hex(&bytes)
    }
}

/// Complex per-bin vector in the unitary-DFT convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Vec<Complex64>,
    sample_rate: u32,
    hermitian: bool,
}

impl Spectrum {
    /// Unflagged spectrum; bins must be finite.
    pub fn new(bins: Vec<Complex64>, sample_rate: u32) -> Result<Self> {
        check_bins(&bins)?;
        Ok(Self {
            bins,
            sample_rate,
            hermitian: false,
        })
    }

    /// Spectrum flagged as the transform of a real signal. Fails if the
    /// symmetry `bin[m] = conj(bin[L-m])` is off by more than [`HERMITIAN_TOL`].
    pub fn hermitian(bins: Vec<Complex64>, sample_rate: u32) -> Result<Self> {
        check_bins(&bins)?;
        check_hermitian(&bins)?;
        Ok(Self {
            bins,
            sample_rate,
            hermitian: true,
        })
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.norm()).collect()
    }

    pub fn peak_magnitude(&self) -> f64 {
        self.bins.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }

    pub fn energy(&self) -> f64 {
        self.bins.iter().map(|b| b.norm_sqr()).sum()
    }

    /// Multiply every bin by a real factor; the hermitian flag is kept.
    pub fn scaled(&self, factor: f64) -> Spectrum {
        Spectrum {
            bins: self.bins.iter().map(|b| b * factor).collect(),
            sample_rate: self.sample_rate,
            hermitian: self.hermitian,
        }
    }
}

fn check_bins(bins: &[Complex64]) -> Result<()> {
    if bins.is_empty() {
        return Err(Error::InvalidSignal("spectrum has no bins".into()));
    }
    if let Some(i) = bins.iter().position(|b| !(b.re.is_finite() && b.im.is_finite())) {
        return Err(Error::InvalidSignal(format!("non-finite bin {} at {i}", bins[i])));
    }
    Ok(())
}

fn check_hermitian(bins: &[Complex64]) -> Result<()> {
    let len = bins.len();
    for m in 0..len {
        let deviation = (bins[m] - bins[(len - m) % len].conj()).norm();
        if deviation > HERMITIAN_TOL {
            return Err(Error::Symmetry { bin: m, deviation });
        }
    }
    Ok(())
}

pub(crate) fn energy(samples: &[f64]) -> f64 {
    samples.iter().map(|s| s * s).sum()
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = planner().lock().unwrap_or_else(|e| e.into_inner());
    if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    }
}

/// Unscaled in-place transform (`exp(-i...)` forward, `exp(+i...)` inverse).
pub(crate) fn raw_fft(buffer: &mut [Complex64], inverse: bool) {
    if buffer.is_empty() {
        return;
    }
    plan(buffer.len(), inverse).process(buffer);
}

/// Unitary forward transform of a real frame. The returned spectrum is
/// flagged hermitian; conjugate pairs are made exactly symmetric by
/// averaging away the rounding asymmetry of the fast transform.
pub fn forward(signal: &Signal) -> Spectrum {
    let len = signal.len();
    let mut buffer: Vec<Complex64> = signal
        .samples()
        .iter()
        .map(|&s| Complex64::new(s, 0.0))
        .collect();
    raw_fft(&mut buffer, false);
    let scale = 1.0 / (len as f64).sqrt();
    for b in buffer.iter_mut() {
        *b *= scale;
    }
    symmetrize(&mut buffer);
    Spectrum {
        bins: buffer,
        sample_rate: signal.sample_rate(),
        hermitian: true,
    }
}

fn symmetrize(bins: &mut [Complex64]) {
    let len = bins.len();
    bins[0].im = 0.0;
    for m in 1..len.div_ceil(2) {
        let avg = (bins[m] + bins[len - m].conj()) * 0.5;
        bins[m] = avg;
        bins[len - m] = avg.conj();
    }
    if len % 2 == 0 {
        bins[len / 2].im = 0.0;
    }
}

/// Unitary inverse transform without any realness check.
pub fn inverse_complex(spectrum: &Spectrum) -> Vec<Complex64> {
    let mut buffer = spectrum.bins.clone();
    raw_fft(&mut buffer, true);
    let scale = 1.0 / (buffer.len() as f64).sqrt();
    for b in buffer.iter_mut() {
        *b *= scale;
    }
    buffer
}

/// Unitary inverse transform to a real frame.
///
/// A hermitian-flagged spectrum is re-checked for symmetry first. The
/// imaginary residue of the result must stay within [`REAL_RESIDUE_TOL`] of
/// the real-part RMS before it is discarded.
pub fn inverse(spectrum: &Spectrum) -> Result<Signal> {
    if spectrum.hermitian {
        check_hermitian(&spectrum.bins)?;
    }
    let complex = inverse_complex(spectrum);
    let len = complex.len() as f64;
    let real_rms = (complex.iter().map(|c| c.re * c.re).sum::<f64>() / len).sqrt();
    let residue = (complex.iter().map(|c| c.im * c.im).sum::<f64>() / len).sqrt();
    let tolerance = REAL_RESIDUE_TOL * real_rms;
    if residue > tolerance {
        return Err(Error::NotReal { residue, tolerance });
    }
    Signal::new(complex.into_iter().map(|c| c.re).collect(), spectrum.sample_rate)
}

fn check_compatible(a: &Spectrum, b: &Spectrum) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.sample_rate != b.sample_rate {
        return Err(Error::SampleRate {
            left: a.sample_rate,
            right: b.sample_rate,
        });
    }
    Ok(())
}

/// Elementwise complex product.
pub fn hadamard_mul(a: &Spectrum, b: &Spectrum) -> Result<Spectrum> {
    check_compatible(a, b)?;
    Ok(Spectrum {
        bins: a.bins.iter().zip(&b.bins).map(|(x, y)| x * y).collect(),
        sample_rate: a.sample_rate,
        hermitian: a.hermitian && b.hermitian,
    })
}

/// Elementwise complex division that refuses any denominator with
/// magnitude below `min_mag`, and any quotient that is not finite.
pub fn hadamard_div(num: &Spectrum, den: &Spectrum, min_mag: f64) -> Result<Spectrum> {
    check_compatible(num, den)?;
    if !(min_mag >= 0.0) {
        return Err(Error::Parameter(format!(
            "min_mag must be a nonnegative number, got {min_mag}"
        )));
    }
    let mut bins = Vec::with_capacity(num.len());
    for (bin, (n, d)) in num.bins.iter().zip(&den.bins).enumerate() {
        let magnitude = d.norm();
        let q = n / d;
        if magnitude < min_mag || !(q.re.is_finite() && q.im.is_finite()) {
            return Err(Error::UnsafeguardedDenominator {
                bin,
                magnitude,
                min_mag,
            });
        }
        bins.push(q);
    }
    Ok(Spectrum {
        bins,
        sample_rate: num.sample_rate,
        hermitian: num.hermitian && den.hermitian,
    })
}

/// Force conjugate symmetry. Bins `1..ceil(L/2)` are authoritative and
/// mirrored into the upper half; DC and (for even L) Nyquist keep only
/// their real part.
pub fn enforce_hermitian(spectrum: &Spectrum) -> Spectrum {
    let mut bins = spectrum.bins.clone();
    let len = bins.len();
    bins[0].im = 0.0;
    for m in 1..len.div_ceil(2) {
        bins[len - m] = bins[m].conj();
    }
    if len % 2 == 0 {
        bins[len / 2].im = 0.0;
    }
    Spectrum {
        bins,
        sample_rate: spectrum.sample_rate,
        hermitian: true,
    }
}

/// Zero-extend `ir` to `len` samples.
pub(crate) fn zero_extend(ir: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    out[..ir.len()].copy_from_slice(ir);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_signal(rng: &mut ChaCha8Rng, len: usize) -> Signal {
        Signal::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), 8000).unwrap()
    }

    /// Explicit product with the unitary DFT matrix.
    fn naive_dft(x: &[f64]) -> Vec<Complex64> {
        let len = x.len();
        let scale = 1.0 / (len as f64).sqrt();
        (0..len)
            .map(|p| {
                x.iter()
                    .enumerate()
                    .map(|(q, &v)| {
                        let angle = -2.0 * PI * (p * q % len) as f64 / len as f64;
                        c(angle.cos(), angle.sin()) * v * scale
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let s = Signal::new(vec![1.0, 0.0, 0.0, 0.0], 4).unwrap();
        for b in forward(&s).bins() {
            assert!((b - c(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn ones_map_to_dc() {
        let s = Signal::new(vec![1.0; 4], 4).unwrap();
        let spec = forward(&s);
        let expected = [2.0, 0.0, 0.0, 0.0];
        for (b, e) in spec.bins().iter().zip(expected) {
            assert!((b - c(e, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn forward_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for len in [8, 2, 3, 5, 17, 32] {
            let s = random_signal(&mut rng, len);
            let fast = forward(&s);
            for (a, b) in fast.bins().iter().zip(naive_dft(s.samples())) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn inverse_of_dc_and_constant() {
        let dc = Spectrum::new(vec![c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], 4).unwrap();
        let s = inverse(&dc).unwrap();
        for v in s.samples() {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let flat = Spectrum::new(vec![c(0.1, 0.0); 4], 4).unwrap();
        let s = inverse(&flat).unwrap();
        let expected = [0.2, 0.0, 0.0, 0.0];
        for (v, e) in s.samples().iter().zip(expected) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_signal(&mut rng, 16);
        let back = inverse(&forward(&s)).unwrap();
        for (a, b) in s.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() < 1e-10 * s.rms());
        }
    }

    #[test]
    fn non_finite_samples_are_rejected() {
        assert!(matches!(
            Signal::new(vec![0.0, f64::NAN], 4),
            Err(Error::InvalidSignal(_))
        ));
        assert!(matches!(Signal::new(vec![0.0], 4), Err(Error::InvalidSignal(_))));
    }

    #[test]
    fn asymmetric_spectrum_cannot_be_flagged_hermitian() {
        let bins = vec![c(1.0, 0.0), c(1.0, 1.0), c(0.0, 0.0), c(1.0, 1.0)];
        assert!(matches!(
            Spectrum::hermitian(bins.clone(), 4),
            Err(Error::Symmetry { bin: 1, .. })
        ));
        // Unflagged, the same bins have a complex inverse and are refused as a real frame.
        let spec = Spectrum::new(bins, 4).unwrap();
        assert!(matches!(inverse(&spec), Err(Error::NotReal { .. })));
    }

    #[test]
    fn hadamard_mul_small_cases() {
        let a = Spectrum::new(vec![c(1.0, 0.0), c(2.0, 0.0)], 2).unwrap();
        let b = Spectrum::new(vec![c(3.0, 0.0), c(4.0, 0.0)], 2).unwrap();
        assert_eq!(hadamard_mul(&a, &b).unwrap().bins(), &[c(3.0, 0.0), c(8.0, 0.0)]);
        let ones = Spectrum::new(vec![c(1.0, 0.0); 2], 2).unwrap();
        assert_eq!(hadamard_mul(&a, &ones).unwrap().bins(), a.bins());
        let short = Spectrum::new(vec![c(1.0, 0.0)], 2).unwrap();
        assert!(matches!(hadamard_mul(&a, &short), Err(Error::Dimension { .. })));
    }

    #[test]
    fn hadamard_ops_match_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut random_bins = |min: f64| -> Vec<Complex64> {
            (0..8)
                .map(|_| {
                    let r = rng.random_range(min..2.0);
                    let phi = rng.random_range(-PI..PI);
                    Complex64::from_polar(r, phi)
                })
                .collect()
        };
        let a = random_bins(0.0);
        let b = random_bins(0.1);
        let sa = Spectrum::new(a.clone(), 8).unwrap();
        let sb = Spectrum::new(b.clone(), 8).unwrap();
        let prod = hadamard_mul(&sa, &sb).unwrap();
        let quot = hadamard_div(&sa, &sb, 0.1).unwrap();
        for m in 0..8 {
            let (ar, ai, br, bi) = (a[m].re, a[m].im, b[m].re, b[m].im);
            let p = c(ar * br - ai * bi, ar * bi + ai * br);
            let d = br * br + bi * bi;
            let q = c((ar * br + ai * bi) / d, (ai * br - ar * bi) / d);
            assert!((prod.bins()[m] - p).norm() < 1e-12);
            assert!((quot.bins()[m] - q).norm() < 1e-12);
        }
    }

    #[test]
    fn hadamard_div_small_case_and_refusal() {
        let num = Spectrum::new(vec![c(4.0, 0.0), c(9.0, 0.0)], 2).unwrap();
        let den = Spectrum::new(vec![c(2.0, 0.0), c(3.0, 0.0)], 2).unwrap();
        assert_eq!(hadamard_div(&num, &den, 1.0).unwrap().bins(), &[c(2.0, 0.0), c(3.0, 0.0)]);

        let den = Spectrum::new(vec![c(2.0, 0.0), c(0.0, 0.0)], 2).unwrap();
        match hadamard_div(&num, &den, 1e-12) {
            Err(Error::UnsafeguardedDenominator { bin, .. }) => assert_eq!(bin, 1),
            other => panic!("expected refusal, got {other:?}"),
        }
        // min_mag = 0 still refuses a division that cannot produce a finite bin.
        assert!(matches!(
            hadamard_div(&num, &den, 0.0),
            Err(Error::UnsafeguardedDenominator { bin: 1, .. })
        ));
        assert!(matches!(hadamard_div(&num, &den, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn enforce_hermitian_mirrors_lower_half() {
        let spec = Spectrum::new(vec![c(1.0, 1.0), c(2.0, 2.0), c(3.0, 3.0), c(9.0, 9.0)], 4).unwrap();
        let h = enforce_hermitian(&spec);
        assert_eq!(h.bins(), &[c(1.0, 0.0), c(2.0, 2.0), c(3.0, 0.0), c(2.0, -2.0)]);
        assert!(h.is_hermitian());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let already = forward(&random_signal(&mut rng, 7));
        assert_eq!(enforce_hermitian(&already).bins(), already.bins());
    }

    #[test]
    fn enforced_spectrum_inverts_to_real() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bins: Vec<Complex64> = (0..8)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let h = enforce_hermitian(&Spectrum::new(bins, 8).unwrap());
        let residue = inverse_complex(&h).iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        assert!(residue < 1e-12);
    }

    #[test]
    fn odd_length_mirroring() {
        let bins: Vec<Complex64> = (0..5).map(|m| c(m as f64, m as f64 + 0.5)).collect();
        let h = enforce_hermitian(&Spectrum::new(bins, 5).unwrap());
        assert_eq!(h.bins()[0], c(0.0, 0.0));
        assert_eq!(h.bins()[4], c(1.0, -1.5));
        assert_eq!(h.bins()[3], c(2.0, -2.5));
    }
}
