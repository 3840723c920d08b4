//! Streaming STFT analysis, WOLA synthesis and online unit-norm normalization.
//!
//! Frames are 20 ms periodic-Hamming windows with 75 % overlap at 16 kHz,
//! transformed with a 320-point FFT into 161 one-sided bins (50 Hz apart).

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::{Complex, Error, Result, SAMPLE_RATE};

/// Normalized PCM audio in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AudioChunk {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioChunk {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    /// A chunk at the pipeline rate.
    pub fn mono16k(samples: Vec<f64>) -> Self {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub(crate) fn check_rate(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::Config(format!(
                "sample rate {} Hz, pipeline requires {SAMPLE_RATE} Hz",
                self.sample_rate
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_finite(samples: &[f64]) -> Result<()> {
    match samples.iter().position(|s| !s.is_finite()) {
        Some(i) => Err(Error::Data(format!("non-finite sample at index {i}"))),
        None => Ok(()),
    }
}

/// Framing parameters. Only the 320/80 configuration is used by the
/// pipeline, but the type checks its own invariants for any size.
#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: Vec<f64>,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::new(320, 80).expect("default framing is valid")
    }
}

impl StftConfig {
    pub fn new(window_len: usize, hop: usize) -> Result<Self> {
        if window_len < 4 || !window_len.is_multiple_of(4) || hop * 4 != window_len {
            return Err(Error::Config(format!(
                "window length {window_len} with hop {hop}: hop must be a quarter of the window"
            )));
        }
        Ok(Self {
            window_len,
            hop,
            fft_size: window_len,
            window: periodic_hamming(window_len),
        })
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frequency resolution in Hz for a given sample rate.
    pub fn bin_hz(&self, sample_rate: u32) -> f64 {
        sample_rate as f64 / self.fft_size as f64
    }
}

/// DFT-even Hamming window, `0.54 - 0.46 cos(2 pi n / len)`.
pub fn periodic_hamming(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// One STFT frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub bins: Vec<Complex>,
    pub frame_index: u64,
}

impl ComplexSpectrum {
    pub fn zeros(n_bins: usize) -> Self {
        Self {
            bins: vec![Complex::new(0.0, 0.0); n_bins],
            frame_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.bins.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn clear(&mut self) {
        self.bins.fill(Complex::new(0.0, 0.0));
    }
}

/// Streaming analysis. Holds fewer than `window_len` samples between calls
/// and emits one frame per completed hop.
pub struct AnalysisState {
    window: Vec<f64>,
    hop: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<f64>,
    filled: usize,
    fft_buf: Vec<Complex>,
    scratch: Vec<Complex>,
    frame: ComplexSpectrum,
    next_index: u64,
}

impl AnalysisState {
    pub fn new(config: &StftConfig) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(config.fft_size);
        let scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        Self {
            window: config.window.clone(),
            hop: config.hop,
            buf: vec![0.0; config.window_len],
            filled: 0,
            fft_buf: vec![Complex::new(0.0, 0.0); config.fft_size],
            scratch,
            frame: ComplexSpectrum::zeros(config.n_bins()),
            next_index: 0,
            fft,
        }
    }

    /// Samples currently buffered, always `< window_len`.
    pub fn buffered(&self) -> usize {
        self.filled
    }

    pub fn reset(&mut self) {
        self.buf.fill(0.0);
        self.filled = 0;
        self.next_index = 0;
        self.frame.clear();
    }

    /// Feeds a chunk and returns every frame it completes.
    pub fn analyze(&mut self, chunk: &AudioChunk) -> Result<Vec<ComplexSpectrum>> {
        chunk.check_rate()?;
        let mut frames = Vec::with_capacity((self.filled + chunk.len()) / self.hop);
        self.push(&chunk.samples, |f| frames.push(f.clone()))?;
        Ok(frames)
    }

    /// Allocation-free variant of [`analyze`](Self::analyze): `on_frame` sees
    /// each completed frame in order. Samples are assumed to be at 16 kHz.
    pub fn push(&mut self, samples: &[f64], mut on_frame: impl FnMut(&ComplexSpectrum)) -> Result<()> {
        check_finite(samples)?;
        let len = self.buf.len();
        let mut rest = samples;
        while !rest.is_empty() {
            let take = (len - self.filled).min(rest.len());
            self.buf[self.filled..self.filled + take].copy_from_slice(&rest[..take]);
            self.filled += take;
            rest = &rest[take..];
            if self.filled == len {
                self.transform();
                on_frame(&self.frame);
                self.buf.copy_within(self.hop.., 0);
                self.filled = len - self.hop;
            }
        }
        Ok(())
    }

    fn transform(&mut self) {
        for ((dst, &x), &w) in self.fft_buf.iter_mut().zip(&self.buf).zip(&self.window) {
            *dst = Complex::new(x * w, 0.0);
        }
        self.fft_buf[self.buf.len()..].fill(Complex::new(0.0, 0.0));
        self.fft.process_with_scratch(&mut self.fft_buf, &mut self.scratch);
        let n_bins = self.frame.bins.len();
        self.frame.bins.copy_from_slice(&self.fft_buf[..n_bins]);
        self.frame.frame_index = self.next_index;
        self.next_index += 1;
    }
}

/// Weighted overlap-add synthesis, normalized by the steady-state sum of
/// squared windows.
pub struct SynthesisState {
    window: Vec<f64>,
    hop: usize,
    ifft: Arc<dyn Fft<f64>>,
    acc: Vec<f64>,
    inv_envelope: Vec<f64>,
    fft_buf: Vec<Complex>,
    scratch: Vec<Complex>,
}

impl SynthesisState {
    pub fn new(config: &StftConfig) -> Self {
        let ifft = FftPlanner::new().plan_fft_inverse(config.fft_size);
        let scratch = vec![Complex::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
        let inv_envelope = (0..config.hop)
            .map(|n| {
                let energy: f64 = config.window[n..].iter().step_by(config.hop).map(|w| w * w).sum();
                1.0 / energy
            })
            .collect();
        Self {
            window: config.window.clone(),
            hop: config.hop,
            acc: vec![0.0; config.window_len],
            inv_envelope,
            fft_buf: vec![Complex::new(0.0, 0.0); config.fft_size],
            scratch,
            ifft,
        }
    }

    pub fn reset(&mut self) {
        self.acc.fill(0.0);
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn synthesize(&mut self, spectrum: &ComplexSpectrum) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.hop];
        self.synthesize_into(spectrum, &mut out)?;
        Ok(out)
    }

    /// Overlap-adds one frame and writes the `hop` samples that no later
    /// frame can touch any more.
    pub fn synthesize_into(&mut self, spectrum: &ComplexSpectrum, out: &mut [f64]) -> Result<()> {
        let n = self.fft_buf.len();
        let n_bins = n / 2 + 1;
        if spectrum.len() != n_bins || out.len() != self.hop {
            return Err(Error::Shape(format!(
                "synthesis expects {n_bins} bins and {} output samples, got {} and {}",
                self.hop,
                spectrum.len(),
                out.len()
            )));
        }
        let bins = &spectrum.bins;
        self.fft_buf[0] = Complex::new(bins[0].re, 0.0);
        self.fft_buf[1..n_bins].copy_from_slice(&bins[1..n_bins]);
        if n.is_multiple_of(2) {
            self.fft_buf[n / 2] = Complex::new(bins[n / 2].re, 0.0);
        }
        for (k, b) in bins.iter().enumerate().take(n.div_ceil(2)).skip(1) {
            self.fft_buf[n - k] = b.conj();
        }
        self.ifft.process_with_scratch(&mut self.fft_buf, &mut self.scratch);

        let scale = 1.0 / n as f64;
        for ((a, c), &w) in self.acc.iter_mut().zip(&self.fft_buf).zip(&self.window) {
            *a += c.re * scale * w;
        }
        for ((o, &a), &inv) in out.iter_mut().zip(&self.acc).zip(&self.inv_envelope) {
            *o = a * inv;
        }
        self.acc.copy_within(self.hop.., 0);
        let len = self.acc.len();
        self.acc[len - self.hop..].fill(0.0);
        Ok(())
    }
}

/// Floor on the running magnitude estimate.
pub const MU_FLOOR: f64 = 1e-10;

/// Online per-bin unit-norm normalization.
///
/// The running mean magnitude is seeded with the first frame and then
/// updated before each division, so frame `t` is divided by an estimate that
/// already contains `|X[t]|`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormState {
    pub mu_hat: Vec<f64>,
    pub alpha: f64,
    pub initialized: bool,
}

impl NormState {
    pub fn new(n_bins: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
        }
        Ok(Self {
            mu_hat: vec![MU_FLOOR; n_bins],
            alpha,
            initialized: false,
        })
    }

    pub fn reset(&mut self) {
        self.mu_hat.fill(MU_FLOOR);
        self.initialized = false;
    }

    pub fn normalize(&mut self, spectrum: &ComplexSpectrum) -> ComplexSpectrum {
        let mut out = ComplexSpectrum::zeros(spectrum.len());
        self.normalize_into(spectrum, &mut out);
        out
    }

    pub fn normalize_into(&mut self, spectrum: &ComplexSpectrum, out: &mut ComplexSpectrum) {
        assert_eq!(spectrum.len(), self.mu_hat.len(), "bin count mismatch");
        assert_eq!(out.len(), self.mu_hat.len(), "bin count mismatch");
        let a = self.alpha;
        for ((mu, x), y) in self.mu_hat.iter_mut().zip(&spectrum.bins).zip(&mut out.bins) {
            let mag = x.norm();
            *mu = if self.initialized {
                (a * *mu + (1.0 - a) * mag).max(MU_FLOOR)
            } else {
                mag.max(MU_FLOOR)
            };
            *y = x / *mu;
        }
        self.initialized = true;
        out.frame_index = spectrum.frame_index;
    }
}
