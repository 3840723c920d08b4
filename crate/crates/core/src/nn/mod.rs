//! Coefficient network: `FC -> BatchNorm -> ReLU -> GRU x L -> FC -> tanh`.
//!
//! Input is the unit-norm spectrum flattened as `[re(F), im(F)]`; output is
//! `N * F * 2` values in tap-major order, reshaped into a
//! [`CoefficientSet`].

mod format;
mod gru;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clc::CoefficientSet;
use crate::dsp::ComplexSpectrum;
use crate::{Error, Result};

pub use gru::{gru_cell, GruLayer, GruState};

/// BatchNorm epsilon used when folding running statistics.
pub const BN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub n_bins: usize,
    pub clc_order: usize,
    pub hidden: usize,
    pub gru_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_bins: 161,
            clc_order: 5,
            hidden: 256,
            gru_layers: 2,
        }
    }
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        2 * self.n_bins
    }

    pub fn output_dim(&self) -> usize {
        self.clc_order * self.n_bins * 2
    }

    pub fn param_count(&self) -> usize {
        let (i, h, o) = (self.input_dim(), self.hidden, self.output_dim());
        let fc_in = i * h + h;
        let bn = 2 * h;
        let gru = self.gru_layers * (3 * h * h + 3 * h * h + 6 * h);
        let fc_out = h * o + o;
        fc_in + bn + gru + fc_out
    }
}

/// Scalar settings stored next to the tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metadata {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub n_bins: usize,
    pub clc_order: usize,
    pub lookahead: i32,
    pub alpha: f64,
}

impl Metadata {
    pub fn for_config(config: &ModelConfig) -> Self {
        Self {
            sample_rate: crate::SAMPLE_RATE,
            fft_size: 2 * (config.n_bins - 1),
            hop: (2 * (config.n_bins - 1)) / 4,
            n_bins: config.n_bins,
            clc_order: config.clc_order,
            lookahead: 0,
            alpha: 0.99,
        }
    }
}

/// Fully connected layer, weight stored row-major as `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

impl Dense {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f32], out: &mut [f32]) {
        gru::matvec_cols(&self.w, &self.b, x, out);
    }
}

/// Running statistics as trained. Kept so that a file is written back the
/// way it was read.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

/// Inference-mode BatchNorm as a per-feature affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Vec<f32>,
    pub bias: Vec<f32>,
    pub stats: Option<BatchNormStats>,
}

impl BatchNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            scale: vec![1.0; dim],
            bias: vec![0.0; dim],
            stats: None,
        }
    }

    /// `scale = gamma / sqrt(var + eps)`, `bias = beta - gamma * mean / sqrt(var + eps)`.
    pub fn fold(stats: BatchNormStats) -> Self {
        let mut scale = Vec::with_capacity(stats.gamma.len());
        let mut bias = Vec::with_capacity(stats.gamma.len());
        for i in 0..stats.gamma.len() {
            let inv_std = 1.0 / (stats.running_var[i] as f64 + BN_EPS as f64).sqrt();
            let g = stats.gamma[i] as f64;
            scale.push((g * inv_std) as f32);
            bias.push((stats.beta[i] as f64 - g * stats.running_mean[i] as f64 * inv_std) as f32);
        }
        Self {
            scale,
            bias,
            stats: Some(stats),
        }
    }
}

/// All network tensors plus metadata. Immutable after loading; share it
/// between streams behind an `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub meta: Metadata,
    pub fc_in: Dense,
    pub bn: BatchNorm,
    pub grus: Vec<GruLayer<f32>>,
    pub fc_out: Dense,
}

impl ModelWeights {
    pub fn zeros(config: ModelConfig) -> Self {
        let h = config.hidden;
        Self {
            meta: Metadata::for_config(&config),
            fc_in: Dense::zeros(config.input_dim(), h),
            bn: BatchNorm::identity(h),
            grus: (0..config.gru_layers).map(|_| GruLayer::zeros(h, h)).collect(),
            fc_out: Dense::zeros(h, config.output_dim()),
            config,
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` initialization, the usual default for
    /// untrained linear and recurrent layers.
    pub fn random(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros(config);
        let mut fill = |v: &mut [f32], fan_in: usize| {
            let bound = 1.0 / (fan_in as f32).sqrt();
            v.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
        };
        let h = config.hidden;
        fill(&mut w.fc_in.w, config.input_dim());
        fill(&mut w.fc_in.b, config.input_dim());
        for g in &mut w.grus {
            fill(&mut g.w_ih, h);
            fill(&mut g.w_hh, h);
            fill(&mut g.b_ih, h);
            fill(&mut g.b_hh, h);
        }
        fill(&mut w.fc_out.w, h);
        fill(&mut w.fc_out.b, h);
        w
    }

    pub fn param_count(&self) -> usize {
        self.fc_in.w.len()
            + self.fc_in.b.len()
            + self.bn.scale.len()
            + self.bn.bias.len()
            + self.grus.iter().map(GruLayer::param_count).sum::<usize>()
            + self.fc_out.w.len()
            + self.fc_out.b.len()
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, crate::LoadError> {
        format::decode(bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::encode(self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// One stateful forward step, allocating its own buffers.
    pub fn forward(&self, state: &mut GruState, spectrum: &ComplexSpectrum) -> CoefficientSet {
        let mut net = Network::with_state(self, std::mem::replace(state, GruState::new(0, 0)));
        let mut out = CoefficientSet::zeros(self.config.clc_order, self.config.n_bins);
        net.forward(self, spectrum, &mut out);
        *state = net.state;
        out
    }
}

/// Per-stream recurrent state and scratch buffers. Forward steps do not
/// allocate.
#[derive(Debug, Clone)]
pub struct Network {
    pub state: GruState,
    features: Vec<f32>,
    fc_in: Vec<f32>,
    bn: Vec<f32>,
    relu: Vec<f32>,
    gi: Vec<f32>,
    gh: Vec<f32>,
    pre_tanh: Vec<f32>,
    out: Vec<f32>,
}

/// Intermediate values of the last forward step.
#[derive(Debug, Clone, Copy)]
pub struct Activations<'a> {
    pub features: &'a [f32],
    pub fc_in: &'a [f32],
    pub bn: &'a [f32],
    pub relu: &'a [f32],
    pub gru: &'a [Vec<f32>],
    pub pre_tanh: &'a [f32],
    pub coeffs: &'a [f32],
}

impl Network {
    pub fn new(weights: &ModelWeights) -> Self {
        let c = &weights.config;
        Self::with_state(weights, GruState::new(c.gru_layers, c.hidden))
    }

    fn with_state(weights: &ModelWeights, state: GruState) -> Self {
        let c = &weights.config;
        let h = c.hidden;
        Self {
            state,
            features: vec![0.0; c.input_dim()],
            fc_in: vec![0.0; h],
            bn: vec![0.0; h],
            relu: vec![0.0; h],
            gi: vec![0.0; 3 * h],
            gh: vec![0.0; 3 * h],
            pre_tanh: vec![0.0; c.output_dim()],
            out: vec![0.0; c.output_dim()],
        }
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }

    pub fn activations(&self) -> Activations<'_> {
        Activations {
            features: &self.features,
            fc_in: &self.fc_in,
            bn: &self.bn,
            relu: &self.relu,
            gru: &self.state.layers,
            pre_tanh: &self.pre_tanh,
            coeffs: &self.out,
        }
    }

    pub fn forward(&mut self, weights: &ModelWeights, spectrum: &ComplexSpectrum, out: &mut CoefficientSet) {
        let f = weights.config.n_bins;
        assert_eq!(spectrum.len(), f, "bin count mismatch");
        for (k, c) in spectrum.bins.iter().enumerate() {
            self.features[k] = c.re as f32;
            self.features[f + k] = c.im as f32;
        }
        self.forward_features(weights);
        out.copy_from_interleaved(&self.out);
    }

    /// Runs the network on an already flattened `[re(F), im(F)]` feature vector.
    pub fn forward_features_from(&mut self, weights: &ModelWeights, features: &[f32]) -> &[f32] {
        self.features.copy_from_slice(features);
        self.forward_features(weights);
        &self.out
    }

    fn forward_features(&mut self, w: &ModelWeights) {
        w.fc_in.forward(&self.features, &mut self.fc_in);
        for i in 0..self.bn.len() {
            self.bn[i] = self.fc_in[i] * w.bn.scale[i] + w.bn.bias[i];
            self.relu[i] = self.bn[i].max(0.0);
        }
        let (layers, _) = self.state.layers.split_at_mut(w.grus.len());
        let mut input: &[f32] = &self.relu;
        for (layer, h) in w.grus.iter().zip(layers.iter_mut()) {
            layer.step(input, h, &mut self.gi, &mut self.gh);
            input = h;
        }
        w.fc_out.forward(input, &mut self.pre_tanh);
        for (o, &p) in self.out.iter_mut().zip(&self.pre_tanh) {
            *o = p.tanh();
        }
    }
}
