//! Streaming speech enhancement with complex linear coding (CLC).
//!
//! A small recurrent network looks at one unit-norm STFT frame at a time and
//! predicts, for every frequency bin, `N` complex coefficients. The enhanced
//! frame is the per-bin linear combination of those coefficients with the
//! current and `N - 1` previous noisy frames. With `N = 1` this reduces to a
//! plain complex mask.
//!
//! The crate is split along the processing chain:
//!
//! - [`dsp`]: streaming STFT analysis, WOLA synthesis, unit-norm normalization
//! - [`clc`]: the linear combination itself and a least-squares oracle
//! - [`nn`]: the coefficient network forward pass and the CLCW weight format
//! - [`engine`]: the causal end-to-end pipeline and its benchmark
//! - [`metrics`]: SI-SDR and RMSE
//! - [`mixer`]: reproducible noisy/clean mixture generation
//! - [`wav`]: WAV reading and PCM16 writing

pub mod clc;
pub mod dsp;
pub mod engine;
mod error;
pub mod metrics;
pub mod mixer;
pub mod nn;
pub mod wav;

pub use error::{Error, LoadError, Result};

pub use clc::{ClcConfig, CoefficientSet, SpectrumHistory};
pub use dsp::{AnalysisState, AudioChunk, ComplexSpectrum, NormState, StftConfig, SynthesisState};
pub use engine::{Enhancer, LatencyReport};
pub use metrics::EvalResult;
pub use mixer::{MixResult, MixSpec};
pub use nn::{GruState, ModelConfig, ModelWeights};

/// The only sample rate the pipeline accepts.
pub const SAMPLE_RATE: u32 = 16_000;

pub type Complex = rustfft::num_complex::Complex<f64>;
