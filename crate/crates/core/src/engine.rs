//! The causal streaming pipeline:
//! `analyze -> normalize -> coefficients -> CLC -> synthesize`.
//!
//! The analysis buffer starts primed with `window_len - hop` zeros so every
//! input hop yields one frame, and each synthesized hop is released one hop
//! later. Output sample `n` is therefore the enhanced version of input sample
//! `n - window_len` (plus `l` hops with lookahead).

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clc::{self, ClcConfig, CoefficientSet, SpectrumHistory};
use crate::dsp::{check_finite, AnalysisState, AudioChunk, ComplexSpectrum, NormState, StftConfig, SynthesisState};
use crate::nn::{ModelWeights, Network};
use crate::{Error, Result, SAMPLE_RATE};

/// Default smoothing of the running magnitude estimate.
pub const DEFAULT_ALPHA: f64 = 0.99;

/// Supplies CLC coefficients in place of the network. `noisy` is the raw
/// newest frame, `normalized` its unit-norm version.
pub trait CoefficientInjector: Send {
    fn coefficients(&mut self, noisy: &ComplexSpectrum, normalized: &ComplexSpectrum, out: &mut CoefficientSet);

    fn reset(&mut self) {}
}

impl<F> CoefficientInjector for F
where
    F: FnMut(&ComplexSpectrum, &ComplexSpectrum, &mut CoefficientSet) + Send,
{
    fn coefficients(&mut self, noisy: &ComplexSpectrum, normalized: &ComplexSpectrum, out: &mut CoefficientSet) {
        self(noisy, normalized, out)
    }
}

/// Always emits a single unit tap, i.e. a passthrough.
#[derive(Debug, Clone, Copy)]
pub struct IdentityTap {
    pub tap: usize,
}

impl CoefficientInjector for IdentityTap {
    fn coefficients(&mut self, _: &ComplexSpectrum, _: &ComplexSpectrum, out: &mut CoefficientSet) {
        out.fill_zero();
        out.tap_mut(self.tap).fill(crate::Complex::new(1.0, 0.0));
    }
}

enum Source {
    Network {
        weights: Arc<ModelWeights>,
        net: Box<Network>,
    },
    Injected(Box<dyn CoefficientInjector>),
}

/// Per-hop timing of [`Enhancer::benchmark`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub frames: usize,
    pub mean_us: f64,
    pub p95_us: f64,
    pub max_us: f64,
    /// Mean processing time per hop divided by the hop duration.
    pub rtf: f64,
    pub hop_ms: f64,
    pub clipped_samples: u64,
}

/// One enhancement stream.
pub struct Enhancer {
    stft: StftConfig,
    clc: ClcConfig,
    source: Source,
    analysis: AnalysisState,
    norm: NormState,
    history: SpectrumHistory,
    synthesis: SynthesisState,
    pending: Vec<f64>,
    pending_len: usize,
    frame: ComplexSpectrum,
    normalized: ComplexSpectrum,
    coeffs: CoefficientSet,
    enhanced: ComplexSpectrum,
    segment: Vec<f64>,
    delayed: Vec<f64>,
    clipped: u64,
}

impl Enhancer {
    /// Network-driven enhancer. The model metadata must describe the
    /// 16 kHz / 320 / 80 framing.
    pub fn new(weights: Arc<ModelWeights>) -> Result<Self> {
        let stft = StftConfig::default();
        let m = weights.meta;
        if m.sample_rate != SAMPLE_RATE || m.fft_size != stft.fft_size || m.hop != stft.hop || m.n_bins != stft.n_bins()
        {
            return Err(Error::Config(format!(
                "model expects {} Hz, fft {}, hop {}, {} bins; pipeline runs {SAMPLE_RATE} Hz, fft {}, hop {}, {} bins",
                m.sample_rate,
                m.fft_size,
                m.hop,
                m.n_bins,
                stft.fft_size,
                stft.hop,
                stft.n_bins()
            )));
        }
        let clc = ClcConfig::new(m.clc_order, m.lookahead)?;
        let net = Box::new(Network::new(&weights));
        Self::build(stft, clc, m.alpha, Source::Network { weights, net })
    }

    /// Enhancer whose coefficients come from `injector` instead of a model.
    pub fn with_injector(clc: ClcConfig, injector: impl CoefficientInjector + 'static) -> Result<Self> {
        Self::build(
            StftConfig::default(),
            clc,
            DEFAULT_ALPHA,
            Source::Injected(Box::new(injector)),
        )
    }

    /// Passthrough enhancer: identity tap on the frame being output.
    pub fn identity(clc: ClcConfig) -> Result<Self> {
        if clc.lookahead < 0 {
            return Err(Error::Config("identity passthrough needs lookahead >= 0".into()));
        }
        Self::with_injector(
            clc,
            IdentityTap {
                tap: clc.lookahead as usize,
            },
        )
    }

    fn build(stft: StftConfig, clc: ClcConfig, alpha: f64, source: Source) -> Result<Self> {
        let latency = stft.window_len as i64 + clc.lookahead as i64 * stft.hop as i64;
        if latency < 0 {
            return Err(Error::Config(format!(
                "lookahead {} reaches before the stream start",
                clc.lookahead
            )));
        }
        let f = stft.n_bins();
        let mut e = Self {
            analysis: AnalysisState::new(&stft),
            norm: NormState::new(f, alpha)?,
            history: SpectrumHistory::new(clc.order, f),
            synthesis: SynthesisState::new(&stft),
            pending: vec![0.0; stft.hop],
            pending_len: 0,
            frame: ComplexSpectrum::zeros(f),
            normalized: ComplexSpectrum::zeros(f),
            coeffs: CoefficientSet::zeros(clc.order, f),
            enhanced: ComplexSpectrum::zeros(f),
            segment: vec![0.0; stft.hop],
            delayed: vec![0.0; stft.hop],
            clipped: 0,
            stft,
            clc,
            source,
        };
        e.reset();
        Ok(e)
    }

    pub fn stft(&self) -> &StftConfig {
        &self.stft
    }

    pub fn clc(&self) -> ClcConfig {
        self.clc
    }

    /// Samples between an input sample and its enhanced counterpart.
    pub fn latency_samples(&self) -> usize {
        (self.stft.window_len as i64 + self.clc.lookahead as i64 * self.stft.hop as i64) as usize
    }

    /// Output samples hard-clamped to `[-1, 1]` since the last reset.
    pub fn clipped_samples(&self) -> u64 {
        self.clipped
    }

    /// Clears every piece of stream state.
    pub fn reset(&mut self) {
        self.analysis.reset();
        let prime = self.stft.window_len - self.stft.hop;
        self.analysis
            .push(&vec![0.0; prime], |_| unreachable!("priming never completes a frame"))
            .expect("zeros are finite");
        self.norm.reset();
        self.history.reset();
        self.synthesis.reset();
        match &mut self.source {
            Source::Network { net, .. } => net.reset(),
            Source::Injected(inj) => inj.reset(),
        }
        self.pending_len = 0;
        self.delayed.fill(0.0);
        self.clipped = 0;
    }

    /// Enhances a chunk of any length and returns every sample completed so far.
    pub fn process(&mut self, chunk: &AudioChunk) -> Result<AudioChunk> {
        chunk.check_rate()?;
        let mut out = Vec::with_capacity((self.pending_len + chunk.len()) / self.stft.hop * self.stft.hop);
        self.process_into(&chunk.samples, &mut out)?;
        Ok(AudioChunk::mono16k(out))
    }

    /// Appends enhanced samples to `out`. Does not allocate when `out` has
    /// room for the produced hops.
    pub fn process_into(&mut self, input: &[f64], out: &mut Vec<f64>) -> Result<()> {
        check_finite(input)?;
        let hop = self.stft.hop;
        let mut rest = input;
        while !rest.is_empty() {
            let take = (hop - self.pending_len).min(rest.len());
            self.pending[self.pending_len..self.pending_len + take].copy_from_slice(&rest[..take]);
            self.pending_len += take;
            rest = &rest[take..];
            if self.pending_len == hop {
                let start = out.len();
                out.resize(start + hop, 0.0);
                self.run_hop(&mut out[start..]);
                self.pending_len = 0;
            }
        }
        Ok(())
    }

    fn run_hop(&mut self, out: &mut [f64]) {
        let frame = &mut self.frame;
        let mut emitted = 0;
        self.analysis
            .push(&self.pending, |f| {
                frame.bins.copy_from_slice(&f.bins);
                frame.frame_index = f.frame_index;
                emitted += 1;
            })
            .expect("input checked for finiteness");
        debug_assert_eq!(emitted, 1);

        self.norm.normalize_into(&self.frame, &mut self.normalized);
        match &mut self.source {
            Source::Network { weights, net } => net.forward(weights, &self.normalized, &mut self.coeffs),
            Source::Injected(inj) => inj.coefficients(&self.frame, &self.normalized, &mut self.coeffs),
        }
        self.history.push(&self.frame);
        clc::apply_into(&self.coeffs, &self.history, &mut self.enhanced);
        self.synthesis
            .synthesize_into(&self.enhanced, &mut self.segment)
            .expect("engine buffers are sized from one config");

        for (o, d) in out.iter_mut().zip(&self.delayed) {
            *o = if d.abs() > 1.0 {
                self.clipped += 1;
                d.clamp(-1.0, 1.0)
            } else {
                *d
            };
        }
        std::mem::swap(&mut self.delayed, &mut self.segment);
    }

    /// Times every hop while streaming `seconds` of seeded white noise, then
    /// resets the stream.
    pub fn benchmark(&mut self, seconds: f64) -> Result<LatencyReport> {
        if seconds.is_nan() || seconds < 1.0 {
            return Err(Error::Config(format!("benchmark needs at least 1 s, got {seconds}")));
        }
        let hop = self.stft.hop;
        let frames = (seconds * SAMPLE_RATE as f64 / hop as f64).ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let input: Vec<f64> = (0..frames * hop).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let mut out = Vec::with_capacity(input.len());
        let mut timings = Vec::with_capacity(frames);

        self.reset();
        for block in input.chunks_exact(hop) {
            let t0 = Instant::now();
            self.process_into(block, &mut out)?;
            timings.push(t0.elapsed().as_secs_f64() * 1e6);
        }
        let clipped = self.clipped;
        self.reset();

        let mean = timings.iter().sum::<f64>() / frames as f64;
        let mut sorted = timings;
        sorted.sort_by(f64::total_cmp);
        let p95 = sorted[((0.95 * frames as f64).ceil() as usize).clamp(1, frames) - 1];
        let max = sorted[frames - 1];
        let hop_us = hop as f64 / SAMPLE_RATE as f64 * 1e6;
        Ok(LatencyReport {
            frames,
            mean_us: mean,
            p95_us: p95,
            max_us: max,
            rtf: mean / hop_us,
            hop_ms: hop_us / 1e3,
            clipped_samples: clipped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    #[test]
    fn zero_model_silence_in_silence_out() {
        let w = Arc::new(ModelWeights::zeros(ModelConfig::default()));
        let mut e = Enhancer::new(w).unwrap();
        let y = e.process(&AudioChunk::mono16k(vec![0.0; 4000])).unwrap();
        assert_eq!(y.len(), 4000);
        assert!(y.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn identity_reproduces_delayed_input() {
        let x = noise(8000, 1);
        let mut e = Enhancer::identity(ClcConfig::default()).unwrap();
        let y = e.process(&AudioChunk::mono16k(x.clone())).unwrap().samples;
        assert_eq!(e.latency_samples(), 320);
        assert!(y[..320].iter().all(|&s| s.abs() < 1e-12));
        for n in 320..y.len() {
            assert!((y[n] - x[n - 320]).abs() <= 1e-6);
        }
    }

    #[test]
    fn lookahead_adds_hops_of_latency() {
        let x = noise(8000, 2);
        let clc = ClcConfig::new(5, 2).unwrap();
        let mut e = Enhancer::identity(clc).unwrap();
        let y = e.process(&AudioChunk::mono16k(x.clone())).unwrap().samples;
        assert_eq!(e.latency_samples(), 480);
        for n in 480..y.len() {
            assert!((y[n] - x[n - 480]).abs() <= 1e-6);
        }
    }

    #[test]
    fn reset_restores_fresh_state() {
        let w = Arc::new(ModelWeights::random(ModelConfig::default(), 4));
        let x = AudioChunk::mono16k(noise(3000, 3));
        let mut e = Enhancer::new(w.clone()).unwrap();
        e.reset();
        let a = e.process(&x).unwrap();
        e.reset();
        let b = e.process(&x).unwrap();
        assert_eq!(a, b);
        let mut fresh = Enhancer::new(w).unwrap();
        assert_eq!(fresh.process(&x).unwrap(), a);
    }

    #[test]
    fn clamps_and_counts() {
        let gain = |_: &ComplexSpectrum, _: &ComplexSpectrum, out: &mut CoefficientSet| {
            out.fill_zero();
            out.tap_mut(0).fill(crate::Complex::new(8.0, 0.0));
        };
        let mut e = Enhancer::with_injector(ClcConfig::default(), gain).unwrap();
        let x: Vec<f64> = (0..4000).map(|n| 0.5 * (n as f64 * 0.05).sin()).collect();
        let y = e.process(&AudioChunk::mono16k(x)).unwrap();
        assert!(y.samples.iter().all(|s| s.abs() <= 1.0));
        assert!(e.clipped_samples() > 0);
    }

    #[test]
    fn rejects_bad_input() {
        let mut e = Enhancer::identity(ClcConfig::default()).unwrap();
        assert!(matches!(
            e.process(&AudioChunk::new(vec![0.0; 10], 8000)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            e.process(&AudioChunk::mono16k(vec![f64::INFINITY])),
            Err(Error::Data(_))
        ));
        assert!(e.benchmark(0.5).is_err());
    }

    #[test]
    fn rejects_mismatched_model() {
        let w = ModelWeights::zeros(ModelConfig {
            n_bins: 8,
            clc_order: 2,
            hidden: 4,
            gru_layers: 1,
        });
        assert!(matches!(Enhancer::new(Arc::new(w)), Err(Error::Config(_))));
    }

    #[test]
    fn benchmark_report_is_ordered() {
        let mut e = Enhancer::identity(ClcConfig::default()).unwrap();
        let r = e.benchmark(1.0).unwrap();
        assert_eq!(r.frames, 200);
        assert!(r.mean_us >= 0.0 && r.p95_us >= 0.0);
        assert!(r.max_us >= r.p95_us);
        assert!(r.rtf > 0.0);
        assert_eq!(r.hop_ms, 5.0);
    }
}
