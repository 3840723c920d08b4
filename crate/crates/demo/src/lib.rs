//! Three interactive operations for the static page in `www/`, on a
//! synthetic voiced signal so nothing has to be uploaded.
//!
//! The plain Rust functions are what the tests call; the `#[wasm_bindgen]`
//! wrappers only narrow the types for JavaScript.

use std::f64::consts::PI;

use clc_core::clc::{ls_optimal, ls_residual, regression_rows};
use clc_core::metrics::{align_and_eval, si_sdr};
use clc_core::{AnalysisState, AudioChunk, ClcConfig, CoefficientSet, Complex, ComplexSpectrum, Enhancer, StftConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

const RATE: f64 = 16_000.0;
pub const N_BINS: usize = 161;

/// Harmonic "vowel" with a wobbling pitch and a syllable-rate envelope.
pub fn voiced(len: usize, f0: f64) -> Vec<f64> {
    let mut phase = 0.0;
    (0..len)
        .map(|n| {
            let t = n as f64 / RATE;
            phase += 2.0 * PI * f0 * (1.0 + 0.03 * (2.0 * PI * 5.0 * t).sin()) / RATE;
            let env = 0.55 - 0.45 * (2.0 * PI * 2.5 * t).cos();
            let tone: f64 = (1..=8).map(|h| (h as f64 * phase).sin() / h as f64).sum();
            0.2 * env * tone
        })
        .collect()
}

/// White noise plus a steady tone, scaled to `snr_db` against `clean`.
pub fn interference(clean: &[f64], snr_db: f64, tone_hz: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..clean.len())
        .map(|n| rng.gen_range(-0.3..0.3) + 0.5 * (2.0 * PI * tone_hz * n as f64 / RATE).sin())
        .collect();
    let power = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let g = (power(clean) / power(&raw) / 10f64.powf(snr_db / 10.0)).sqrt();
    raw.iter().map(|v| v * g).collect()
}

fn frames(x: &[f64]) -> Vec<ComplexSpectrum> {
    AnalysisState::new(&StftConfig::default())
        .analyze(&AudioChunk::mono16k(x.to_vec()))
        .expect("synthetic audio is finite")
}

/// Log-magnitude spectrogram of speech plus interference, frame-major,
/// `N_BINS` values per frame, in dB.
pub fn mixture_spectrogram(seconds: f64, snr_db: f64, seed: u64) -> Vec<f32> {
    let len = (seconds.clamp(0.1, 10.0) * RATE) as usize;
    let clean = voiced(len, 140.0);
    let noise = interference(&clean, snr_db, 1030.0, seed);
    let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(s, n)| s + n).collect();
    frames(&noisy)
        .iter()
        .flat_map(|f| f.bins.iter().map(|c| (20.0 * (c.norm() + 1e-9).log10()) as f32))
        .collect()
}

/// Least-squares residual, in dB relative to the target energy, for CLC
/// orders 1..=`max_order` in a single bin. The interferer sits
/// `offset_bins` away from the harmonic, inside the same 50 Hz band when
/// the offset is below one.
pub fn residual_by_order(offset_bins: f64, interferer_gain: f64, max_order: usize) -> Vec<f64> {
    let cfg = StftConfig::default();
    let bin = 20;
    let f_speech = (bin as f64 + 0.1) * cfg.bin_hz(RATE as u32);
    let f_noise = f_speech + offset_bins * cfg.bin_hz(RATE as u32);
    let len = 8000;
    let clean: Vec<f64> = (0..len)
        .map(|n| 0.4 * (2.0 * PI * f_speech * n as f64 / RATE).sin())
        .collect();
    let noisy: Vec<f64> = clean
        .iter()
        .enumerate()
        .map(|(n, s)| s + 0.4 * interferer_gain * (2.0 * PI * f_noise * n as f64 / RATE + 1.0).sin())
        .collect();
    let column = |x: &[f64]| -> Vec<Complex> { frames(x).iter().map(|f| f.bins[bin]).collect() };
    let (x, s) = (column(&noisy), column(&clean));
    let max_order = max_order.clamp(1, 8);
    let skip = max_order - 1;
    let energy: f64 = s[skip..].iter().map(|c| c.norm_sqr()).sum();
    (1..=max_order)
        .map(|order| {
            let rows = regression_rows(&x, order, 0)[skip..].to_vec();
            let a = ls_optimal(&rows, &s[skip..]);
            10.0 * (ls_residual(&rows, &s[skip..], &a) / energy).max(1e-30).log10()
        })
        .collect()
}

/// SI-SDR of the noisy mixture and of the streaming engine driven by
/// per-bin coefficients fitted on the whole clip against the clean signal.
pub fn oracle_enhancement(snr_db: f64, order: usize, seed: u64) -> [f64; 2] {
    let order = order.clamp(1, 8);
    let clean = voiced(32_000, 120.0);
    let noise = interference(&clean, snr_db, 1030.0, seed);
    let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(s, n)| s + n).collect();

    // Same framing as the engine, which primes its buffer with zeros.
    let prime = |x: &[f64]| [vec![0.0; 240], x.to_vec()].concat();
    let (xf, sf) = (frames(&prime(&noisy)), frames(&prime(&clean)));
    let mut coeffs = CoefficientSet::zeros(order, N_BINS);
    for f in 0..N_BINS {
        let x: Vec<Complex> = xf.iter().map(|s| s.bins[f]).collect();
        let s: Vec<Complex> = sf.iter().map(|s| s.bins[f]).collect();
        for (tap, a) in ls_optimal(&regression_rows(&x, order, 0), &s).into_iter().enumerate() {
            coeffs.set(tap, f, a);
        }
    }

    let clc = ClcConfig::new(order, 0).expect("order clamped to a valid range");
    let mut enhancer = Enhancer::with_injector(
        clc,
        move |_: &ComplexSpectrum, _: &ComplexSpectrum, out: &mut CoefficientSet| out.clone_from(&coeffs),
    )
    .expect("default pipeline");
    let enhanced = enhancer
        .process(&AudioChunk::mono16k(noisy.clone()))
        .expect("finite input")
        .samples;
    let before = si_sdr(&noisy, &clean).unwrap_or(f64::NAN);
    let after = align_and_eval(&enhanced, &clean, enhancer.latency_samples())
        .map(|r| r.si_sdr_db)
        .unwrap_or(f64::NAN);
    [before, after]
}

#[wasm_bindgen]
pub fn spectrogram(seconds: f64, snr_db: f64, seed: u32) -> Vec<f32> {
    mixture_spectrogram(seconds, snr_db, seed as u64)
}

#[wasm_bindgen]
pub fn n_bins() -> usize {
    N_BINS
}

#[wasm_bindgen]
pub fn residuals(offset_bins: f64, interferer_gain: f64, max_order: usize) -> Vec<f64> {
    residual_by_order(offset_bins, interferer_gain, max_order)
}

#[wasm_bindgen]
pub fn enhance_si_sdr(snr_db: f64, order: usize, seed: u32) -> Vec<f64> {
    oracle_enhancement(snr_db, order, seed as u64).to_vec()
}
