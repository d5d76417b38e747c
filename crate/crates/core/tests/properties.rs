mod common;

use common::*;
use proptest::prelude::*;
use rustfft::num_complex::Complex64;
use sound_safeguard::audio::{read_wav, write_wav, SampleFormat};
use sound_safeguard::channel::{self, ChannelModel, NoiseLevel, Simulator};
use sound_safeguard::estimator;
use sound_safeguard::safeguard::{
    self, apply_safeguard, constant_profile, smoothed_profile, SafeguardedSignal, ThresholdProfile,
};
use sound_safeguard::spectral::{self, Signal, Spectrum};

const RATE: u32 = 8000;

fn signal(samples: Vec<f64>) -> Signal {
    Signal::new(samples, RATE).unwrap()
}

fn samples(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, len)
}

#[derive(Debug, Clone)]
enum ProfileSpec {
    Constant(f64),
    Smoothed { window: usize, rel: f64, abs: f64 },
}

fn profile_spec() -> impl Strategy<Value = ProfileSpec> {
    prop_oneof![
        (-90.0..-5.0f64).prop_map(ProfileSpec::Constant),
        (0usize..8, -40.0..-3.0f64, -90.0..-30.0f64)
            .prop_map(|(w, rel, abs)| ProfileSpec::Smoothed { window: 2 * w + 1, rel, abs }),
    ]
}

fn build(spec: &ProfileSpec, padded: &Signal) -> ThresholdProfile {
    let spectrum = spectral::forward(padded);
    match *spec {
        ProfileSpec::Constant(level) => constant_profile(level, &spectrum).unwrap(),
        ProfileSpec::Smoothed { window, rel, abs } => {
            smoothed_profile(&spectrum, window.min(odd_cap(padded.len())), rel, abs).unwrap()
        }
    }
}

fn odd_cap(len: usize) -> usize {
    if len % 2 == 1 {
        len
    } else {
        len - 1
    }
}

/// A signal that is not all zero, so every profile kind is defined.
fn nonzero(mut x: Vec<f64>) -> Vec<f64> {
    if x.iter().all(|v| *v == 0.0) {
        x[0] = 0.5;
    }
    x
}

fn safeguarded(x: Vec<f64>, spec: &ProfileSpec, pad: usize) -> (Signal, ThresholdProfile, SafeguardedSignal) {
    let x = signal(nonzero(x));
    let profile = build(spec, &x.zero_padded(pad));
    let sg = apply_safeguard(&x, &profile, pad).unwrap();
    (x, profile, sg)
}

fn wrap(angle: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    (angle + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval_and_round_trip(x in samples(2..600)) {
        let s = signal(x);
        let spectrum = spectral::forward(&s);
        let e = s.energy();
        prop_assert!((spectrum.energy() - e).abs() <= 1e-10 * e.max(f64::MIN_POSITIVE));
        let back = spectral::inverse(&spectrum).unwrap();
        let err = energy(&back.samples().iter().zip(s.samples()).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt();
        prop_assert!(err <= 1e-10 * e.sqrt().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn forward_matches_matrix_oracle(x in samples(2..33)) {
        let fast = spectral::forward(&signal(x.clone()));
        for (a, (re, im)) in fast.bins().iter().zip(naive_dft(&x)) {
            prop_assert!((a.re - re).abs() < 1e-9 && (a.im - im).abs() < 1e-9);
        }
    }

    #[test]
    fn division_undoes_multiplication(x in samples(4..200), h in samples(4..200)) {
        // Lift the divisor to 1% of its peak so the quotient is well conditioned.
        let x = signal(nonzero(x));
        let profile = constant_profile(-40.0, &spectral::forward(&x)).unwrap();
        let den = apply_safeguard(&x, &profile, 0).unwrap().spectrum();
        let peak = den.peak_magnitude();
        prop_assert!(den.magnitudes().iter().all(|m| *m >= 0.01 * peak - 1e-12));
        let len = x.len();
        let hs = spectral::forward(&signal((0..len).map(|i| h[i % h.len()]).collect()));
        let product = spectral::hadamard_mul(&hs, &den).unwrap();
        let back = spectral::hadamard_div(&product, &den, 0.0).unwrap();
        for (a, b) in back.bins().iter().zip(hs.bins()) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn floor_guarantee(x in samples(2..160), spec in profile_spec(), pad in 0usize..48) {
        let (_, profile, sg) = safeguarded(x, &spec, pad);
        let mags = naive_magnitudes(sg.stimulus.samples());
        for (m, (mag, floor)) in mags.iter().zip(profile.floor()).enumerate() {
            prop_assert!(*mag >= floor - 1e-9, "bin {m}: {mag} < {floor}");
        }
    }

    #[test]
    fn safeguarding_is_idempotent(x in samples(2..160), spec in profile_spec(), pad in 0usize..48) {
        let (_, profile, sg) = safeguarded(x, &spec, pad);
        let again = apply_safeguard(&sg.stimulus, &profile, 0).unwrap();
        prop_assert!(rms_diff(again.stimulus.samples(), sg.stimulus.samples()) <= 1e-9);
    }

    #[test]
    fn phase_is_preserved(x in samples(2..160), spec in profile_spec(), pad in 0usize..48) {
        let (x, _, sg) = safeguarded(x, &spec, pad);
        let before = naive_dft(x.zero_padded(pad).samples());
        let after = naive_dft(sg.stimulus.samples());
        for ((re0, im0), (re1, im1)) in before.into_iter().zip(after) {
            if re0.hypot(im0) >= 1e-12 {
                prop_assert!(wrap(im1.atan2(re1) - im0.atan2(re0)).abs() <= 1e-9);
            }
        }
    }

    /// Lift by hand, invert, and compare: the complex inverse must be real
    /// and equal to the library's stimulus.
    #[test]
    fn output_is_real(x in samples(2..160), spec in profile_spec(), pad in 0usize..48) {
        let (x, profile, sg) = safeguarded(x, &spec, pad);
        let padded = x.zero_padded(pad);
        let lifted: Vec<Complex64> = spectral::forward(&padded)
            .bins()
            .iter()
            .zip(profile.floor())
            .map(|(b, &f)| {
                let mag = b.norm();
                if mag >= f { *b } else if mag > 0.0 { b * (f / mag) } else { Complex64::new(f, 0.0) }
            })
            .collect();
        let time = spectral::inverse_complex(&Spectrum::new(lifted, RATE).unwrap());
        let re: Vec<f64> = time.iter().map(|c| c.re).collect();
        let im: Vec<f64> = time.iter().map(|c| c.im).collect();
        prop_assert!(rms(&im) < 1e-10 * rms(&re).max(1e-300) + 1e-300);
        prop_assert!(rms_diff(&re, sg.stimulus.samples()) < 1e-9);
    }

    #[test]
    fn deviation_grows_with_the_relative_floor(
        x in samples(8..160),
        w in 0usize..4,
        rel_low in -40.0..-5.0f64,
        step in 0.0..20.0f64,
        abs in -90.0..-40.0f64,
    ) {
        let x = signal(nonzero(x));
        let spectrum = spectral::forward(&x);
        let window = (2 * w + 1).min(odd_cap(x.len()));
        let deviation = |rel: f64| {
            let profile = smoothed_profile(&spectrum, window, rel, abs).unwrap();
            let sg = apply_safeguard(&x, &profile, 0).unwrap();
            energy(&sg.stimulus.samples().iter().zip(x.samples()).map(|(a, b)| a - b).collect::<Vec<_>>())
        };
        let low = deviation(rel_low);
        let high = deviation(rel_low + step);
        prop_assert!(high >= low - 1e-12 * (1.0 + low));
    }

    #[test]
    fn circular_convolution_matches_brute_force(x in samples(2..65), h in samples(1..65)) {
        let len = x.len();
        let h: Vec<f64> = h.into_iter().take(len).collect();
        let fast = channel::circular_convolve(&signal(x.clone()), &h).unwrap();
        for (a, b) in fast.samples().iter().zip(brute_circular(&x, &h)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_periods_repeat(x in samples(4..128), h in samples(1..4), periods in 2usize..6) {
        let ch = ChannelModel::new(h, RATE).unwrap();
        let rec = Simulator::new(&ch).periodic_frame(&signal(x), periods).unwrap();
        prop_assert_eq!(rec.frames.len(), periods - 1);
        for frame in &rec.frames[1..] {
            prop_assert!(rms_diff(frame.samples(), rec.frames[0].samples()) < 1e-15);
        }
    }

    /// `h_est = h + inverse(R ⊘ X) / sqrt(L)` using the retained noise.
    #[test]
    fn error_decomposes_exactly(
        x in samples(8..200),
        h in samples(1..6),
        seed in any::<u64>(),
        sigma in 1e-4..1e-1f64,
        periods in 2usize..5,
    ) {
        let x = signal(nonzero(x));
        let profile = constant_profile(-30.0, &spectral::forward(&x)).unwrap();
        let sg = apply_safeguard(&x, &profile, 0).unwrap();
        let ch = ChannelModel::new(h.clone(), RATE).unwrap()
            .with_noise(NoiseLevel::Sigma(sigma)).unwrap()
            .with_seed(seed);
        let rec = Simulator::new(&ch).retain_noise(true).periodic(&sg, periods).unwrap();
        let est = estimator::estimate_from_recording(&rec, &sg).unwrap();
        let noise = rec.noise.as_ref().unwrap();
        let mut mean_noise = vec![0.0; sg.frame_len()];
        for frame in noise {
            for (m, v) in mean_noise.iter_mut().zip(frame.samples()) {
                *m += v / noise.len() as f64;
            }
        }
        let err = estimator::error_term(&signal(mean_noise), &sg).unwrap();
        let mut predicted = err.into_samples();
        for (p, t) in predicted.iter_mut().zip(&h) {
            *p += t;
        }
        prop_assert!(rms_diff(est.h_est.samples(), &predicted) < 1e-9);
    }

    #[test]
    fn noise_is_a_function_of_seed_and_index(seed in any::<u64>(), index in 0u64..1000) {
        let ch = ChannelModel::identity(RATE).with_noise(NoiseLevel::Sigma(0.1)).unwrap().with_seed(seed);
        let a = channel::noise_realization(64, &ch, index, 1.0).unwrap();
        let b = channel::noise_realization(64, &ch, index, 1.0).unwrap();
        let c = channel::noise_realization(64, &ch, index + 1, 1.0).unwrap();
        prop_assert_eq!(a.samples(), b.samples());
        prop_assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn float_wav_round_trip_is_lossless(x in prop::collection::vec(-1.0..1.0f32, 2..300)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let s = signal(x.iter().map(|v| f64::from(*v)).collect());
        write_wav(&s, &path, SampleFormat::Float32).unwrap();
        let back = read_wav(&path, None).unwrap();
        prop_assert_eq!(back.samples(), s.samples());
    }

    #[test]
    fn integer_wav_round_trip_is_exact_on_the_grid(
        codes in prop::collection::vec(-32768i32..32768, 2..300),
        wide in any::<bool>(),
    ) {
        let (format, scale) = if wide { (SampleFormat::Pcm24, 256.0) } else { (SampleFormat::Pcm16, 1.0) };
        let full = if wide { 8_388_608.0 } else { 32_768.0 };
        let s = signal(codes.iter().map(|c| f64::from(*c) * scale / full).collect());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.wav");
        write_wav(&s, &path, format).unwrap();
        let back = read_wav(&path, None).unwrap();
        prop_assert_eq!(back.samples(), s.samples());
    }
}

#[test]
fn snr_is_calibrated_over_100_frames() {
    let mut r = rng(11);
    let x = signal(random_vec(&mut r, 512, 0.5));
    let h = vec![1.0, -0.4, 0.2];
    for snr in [0.0, 20.0, 40.0] {
        let ch = ChannelModel::new(h.clone(), RATE)
            .unwrap()
            .with_noise(NoiseLevel::SnrDb(snr))
            .unwrap()
            .with_seed(5);
        let rec = Simulator::new(&ch).retain_noise(true).periodic_frame(&x, 101).unwrap();
        let clean = brute_circular(x.samples(), &h);
        let noise_power: f64 = rec.noise.unwrap().iter().map(|n| energy(n.samples())).sum::<f64>() / 100.0;
        let measured = 10.0 * (energy(&clean) / noise_power).log10();
        assert!((measured - snr).abs() < 0.5, "requested {snr} dB, measured {measured} dB");
    }
}

#[test]
fn silence_gets_a_flat_absolute_floor() {
    let x = signal(vec![0.0; 64]);
    let profile = smoothed_profile(&spectral::forward(&x), 9, -20.0, -60.0).unwrap();
    let sg = apply_safeguard(&x, &profile, 0).unwrap();
    for mag in naive_magnitudes(sg.stimulus.samples()) {
        assert!((mag - 1e-3).abs() < 1e-12);
    }
    assert_eq!(safeguard::safeguard_report(&x, &sg).unwrap(), safeguard::Sdr::AllDeviation);
}
