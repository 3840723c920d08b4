//! Reproducible noisy/clean pairs: speech plus up to four looped noises at a
//! target SNR, with a random gain change applied to both signals.
//!
//! SNR is measured on full-clip mean power. If the mixture would leave
//! `[-1, 1]`, noisy and clean are scaled down together, which keeps the SNR
//! and the alignment between the two.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::AudioChunk;
use crate::{wav, Error, Result};

pub const SNR_SET_DB: [f64; 6] = [-5.0, 0.0, 5.0, 10.0, 20.0, 40.0];
pub const GAIN_SET_DB: [f64; 3] = [-6.0, 0.0, 6.0];
pub const MAX_NOISES: usize = 4;

/// Recipe for one mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    /// Output file stem.
    pub id: String,
    pub speech_id: String,
    pub noise_ids: Vec<String>,
    pub snr_db: f64,
    pub gain_db: f64,
    /// Drives the start offset inside each looped noise.
    pub seed: u64,
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if self.noise_ids.is_empty() || self.noise_ids.len() > MAX_NOISES {
            return Err(Error::Config(format!(
                "{}: {} noises, expected 1 to {MAX_NOISES}",
                self.id,
                self.noise_ids.len()
            )));
        }
        if !SNR_SET_DB.contains(&self.snr_db) {
            return Err(Error::Config(format!(
                "{}: SNR {} dB not in {SNR_SET_DB:?}",
                self.id, self.snr_db
            )));
        }
        if !GAIN_SET_DB.contains(&self.gain_db) {
            return Err(Error::Config(format!(
                "{}: gain {} dB not in {GAIN_SET_DB:?}",
                self.id, self.gain_db
            )));
        }
        Ok(())
    }

    /// Draws a random recipe: one speech file, one to four noises (with
    /// replacement), SNR and gain from the fixed sets.
    pub fn sample(
        rng: &mut impl Rng,
        id: impl Into<String>,
        speech_ids: &[String],
        noise_ids: &[String],
    ) -> Result<Self> {
        if speech_ids.is_empty() || noise_ids.is_empty() {
            return Err(Error::Config("need at least one speech and one noise file".into()));
        }
        let count = rng.gen_range(1..=MAX_NOISES);
        Ok(Self {
            id: id.into(),
            speech_id: speech_ids.choose(rng).unwrap().clone(),
            noise_ids: (0..count).map(|_| noise_ids.choose(rng).unwrap().clone()).collect(),
            snr_db: *SNR_SET_DB.choose(rng).unwrap(),
            gain_db: *GAIN_SET_DB.choose(rng).unwrap(),
            seed: rng.gen(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixResult {
    pub noisy: AudioChunk,
    pub clean: AudioChunk,
    pub achieved_snr_db: f64,
    /// Common factor applied to keep both signals inside `[-1, 1]`; 1 when unused.
    pub peak_scale: f64,
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// `10 log10(sum clean^2 / sum noise^2)`.
pub fn measure_snr(clean: &[f64], noise: &[f64]) -> Result<f64> {
    if clean.len() != noise.len() {
        return Err(Error::Shape(format!(
            "length mismatch: {} vs {}",
            clean.len(),
            noise.len()
        )));
    }
    let c: f64 = clean.iter().map(|v| v * v).sum();
    let n: f64 = noise.iter().map(|v| v * v).sum();
    Ok(10.0 * (c / n).log10())
}

pub fn mix(spec: &MixSpec, speech: &AudioChunk, noises: &[AudioChunk]) -> Result<MixResult> {
    spec.validate()?;
    if noises.len() != spec.noise_ids.len() {
        return Err(Error::Shape(format!(
            "{}: {} noise clips for {} noise ids",
            spec.id,
            noises.len(),
            spec.noise_ids.len()
        )));
    }
    speech.check_rate()?;
    for n in noises {
        n.check_rate()?;
    }
    let len = speech.len();
    if len == 0 || power(&speech.samples).sqrt() <= 1e-6 {
        return Err(Error::Domain(format!("{}: speech is silent, SNR undefined", spec.id)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise = vec![0.0; len];
    for (n, id) in noises.iter().zip(&spec.noise_ids) {
        if n.is_empty() {
            return Err(Error::Domain(format!("{}: noise {id} is empty", spec.id)));
        }
        let offset = rng.gen_range(0..n.len());
        for (i, v) in noise.iter_mut().enumerate() {
            *v += n.samples[(offset + i) % n.len()];
        }
    }
    let p_noise = power(&noise);
    if p_noise == 0.0 {
        return Err(Error::Domain(format!(
            "{}: noise sum is silent, SNR undefined",
            spec.id
        )));
    }

    let noise_gain = (power(&speech.samples) / (p_noise * 10f64.powf(spec.snr_db / 10.0))).sqrt();
    let gain = 10f64.powf(spec.gain_db / 20.0);
    let mut clean: Vec<f64> = speech.samples.iter().map(|s| gain * s).collect();
    let mut noisy: Vec<f64> = speech
        .samples
        .iter()
        .zip(&noise)
        .map(|(s, n)| gain * (s + noise_gain * n))
        .collect();

    let peak = noisy.iter().chain(&clean).fold(0.0f64, |m, v| m.max(v.abs()));
    let peak_scale = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    if peak_scale != 1.0 {
        noisy.iter_mut().for_each(|v| *v *= peak_scale);
        clean.iter_mut().for_each(|v| *v *= peak_scale);
    }

    let residual: Vec<f64> = noisy.iter().zip(&clean).map(|(n, c)| n - c).collect();
    let achieved_snr_db = measure_snr(&clean, &residual)?;
    Ok(MixResult {
        noisy: AudioChunk::mono16k(noisy),
        clean: AudioChunk::mono16k(clean),
        achieved_snr_db,
        peak_scale,
    })
}

/// One manifest line: the recipe plus what the mixer measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    #[serde(flatten)]
    pub spec: MixSpec,
    /// Measured on the PCM16 files as written.
    pub achieved_snr_db: f64,
    pub peak_scale: f64,
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Deserialize)]
struct SpecLine {
    id: String,
    speech_id: String,
    noise_ids: Vec<String>,
    snr_db: f64,
    gain_db: f64,
    seed: Option<u64>,
}

/// Reads a JSON-lines list of [`MixSpec`]s. Lines without a `seed` get one
/// derived from `base_seed` and the line position.
pub fn read_manifest(path: impl AsRef<Path>, base_seed: u64) -> Result<Vec<MixSpec>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, base_seed)
}

pub fn parse_manifest(text: &str, base_seed: u64) -> Result<Vec<MixSpec>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .enumerate()
        .map(|(index, (lineno, line))| {
            let l: SpecLine =
                serde_json::from_str(line).map_err(|e| Error::Data(format!("manifest line {}: {e}", lineno + 1)))?;
            Ok(MixSpec {
                id: l.id,
                speech_id: l.speech_id,
                noise_ids: l.noise_ids,
                snr_db: l.snr_db,
                gain_db: l.gain_db,
                seed: l.seed.unwrap_or_else(|| derive_seed(base_seed, index as u64)),
            })
        })
        .collect()
}

fn derive_seed(base: u64, index: u64) -> u64 {
    ChaCha8Rng::seed_from_u64(base ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15)).gen()
}

/// `dir/id`, with `.wav` appended when the id has no extension.
fn resolve(dir: &Path, id: &str) -> PathBuf {
    let p = dir.join(id);
    if p.extension().is_some() {
        p
    } else {
        p.with_extension("wav")
    }
}

/// Writes `noisy/<id>.wav`, `clean/<id>.wav` and `manifest.jsonl` under
/// `out_dir`. Every missing input is reported before anything is written.
pub fn build_testset(
    specs: &[MixSpec],
    speech_dir: &Path,
    noise_dir: &Path,
    out_dir: &Path,
) -> Result<Vec<ManifestRow>> {
    let mut ids = BTreeSet::new();
    for s in specs {
        s.validate()?;
        if !ids.insert(s.id.as_str()) {
            return Err(Error::Config(format!("duplicate mixture id {}", s.id)));
        }
    }
    let missing: BTreeSet<PathBuf> = specs
        .iter()
        .flat_map(|s| {
            std::iter::once(resolve(speech_dir, &s.speech_id)).chain(s.noise_ids.iter().map(|n| resolve(noise_dir, n)))
        })
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing.into_iter().collect()));
    }

    let noisy_dir = out_dir.join("noisy");
    let clean_dir = out_dir.join("clean");
    for d in [&noisy_dir, &clean_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let rows = specs
        .par_iter()
        .map(|spec| {
            let speech = wav::read_wav(resolve(speech_dir, &spec.speech_id))?;
            let noises = spec
                .noise_ids
                .iter()
                .map(|n| wav::read_wav(resolve(noise_dir, n)))
                .collect::<Result<Vec<_>>>()?;
            let m = mix(spec, &speech, &noises)?;
            let q = |x: &[f64]| -> Vec<f64> { x.iter().map(|&v| wav::to_pcm16(v) as f64 / 32768.0).collect() };
            let (qn, qc) = (q(&m.noisy.samples), q(&m.clean.samples));
            let residual: Vec<f64> = qn.iter().zip(&qc).map(|(n, c)| n - c).collect();
            let achieved_snr_db = measure_snr(&qc, &residual)?;
            wav::write_pcm16(noisy_dir.join(format!("{}.wav", spec.id)), &m.noisy)?;
            wav::write_pcm16(clean_dir.join(format!("{}.wav", spec.id)), &m.clean)?;
            Ok(ManifestRow {
                spec: spec.clone(),
                achieved_snr_db,
                peak_scale: m.peak_scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = out_dir.join(MANIFEST_NAME);
    let mut text = Vec::new();
    for row in &rows {
        serde_json::to_writer(&mut text, row).expect("manifest rows serialize");
        text.push(b'\n');
    }
    fs::File::create(&manifest)
        .and_then(|mut f| f.write_all(&text))
        .map_err(|e| Error::io(&manifest, e))?;
    Ok(rows)
}
