//! Regenerates `tests/data/speechlike_16k.wav`: one second of voiced,
//! band-limited, syllabic sound at 16 kHz / 16 bit. Energy sits on the
//! harmonics between 200 Hz and 3.4 kHz, leaving deep gaps elsewhere.

use std::f64::consts::PI;
use std::path::PathBuf;

use sound_safeguard::audio::{write_wav, SampleFormat};
use sound_safeguard::Signal;

const RATE: u32 = 16_000;
// (F1, F2, F3) per syllable.
const VOWELS: [(f64, f64, f64); 4] = [
    (730.0, 1090.0, 2440.0),
    (270.0, 2290.0, 3010.0),
    (570.0, 840.0, 2410.0),
    (530.0, 1840.0, 2480.0),
];

fn formant_gain(f: f64, (f1, f2, f3): (f64, f64, f64)) -> f64 {
    let peak = |centre: f64, width: f64| (-((f - centre) / width).powi(2)).exp();
    peak(f1, 120.0) + 0.6 * peak(f2, 150.0) + 0.3 * peak(f3, 200.0)
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/speechlike_16k.wav"));
    let n = RATE as usize;
    let syllable = 0.18;
    let gap = 0.06;
    let mut samples = vec![0.0; n];
    let mut phase = 0.0;
    for (i, s) in samples.iter_mut().enumerate() {
        let t = i as f64 / f64::from(RATE);
        let f0 = 120.0 + 30.0 * (2.0 * PI * 1.3 * t).sin();
        phase += 2.0 * PI * f0 / f64::from(RATE);
        let slot = (t / (syllable + gap)) as usize;
        let local = t - slot as f64 * (syllable + gap);
        if local >= syllable {
            continue;
        }
        let envelope = (PI * local / syllable).sin().powi(2);
        let vowel = VOWELS[slot % VOWELS.len()];
        let mut v = 0.0;
        let mut k = 1;
        while k as f64 * f0 < 3400.0 {
            let f = k as f64 * f0;
            if f > 200.0 {
                v += formant_gain(f, vowel) * (k as f64 * phase).sin();
            }
            k += 1;
        }
        *s = envelope * v;
    }
    let peak = samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for s in &mut samples {
        *s *= 0.5 / peak;
    }
    let signal = Signal::new(samples, RATE).expect("valid signal");
    write_wav(&signal, &out, SampleFormat::Pcm16).expect("write test wav");
    println!("{}", out.display());
}
