use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::Args;
use clc_core::{wav, AudioChunk, Enhancer, ModelWeights, SAMPLE_RATE};
use rayon::prelude::*;

use crate::{wav_files, CliError, CliResult};

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// A WAV file, or a directory whose WAV files are all enhanced.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file, or output directory when the input is a directory.
    #[arg(long)]
    pub output: PathBuf,
    /// Streaming chunk length in milliseconds.
    #[arg(long, default_value_t = 10)]
    pub chunk_ms: u32,
    /// Drop the pipeline latency so the output lines up with the input.
    #[arg(long)]
    pub compensate_delay: bool,
}

pub fn run(args: &EnhanceArgs) -> CliResult<()> {
    if args.chunk_ms == 0 {
        return Err(CliError::usage("--chunk-ms must be at least 1"));
    }
    let weights = Arc::new(ModelWeights::load(&args.model)?);
    // Fail on an incompatible model before touching any audio.
    Enhancer::new(weights.clone())?;

    let jobs: Vec<(PathBuf, PathBuf)> = if args.input.is_dir() {
        std::fs::create_dir_all(&args.output).map_err(|e| CliError::io(&args.output, e))?;
        wav_files(&args.input)?
            .into_iter()
            .map(|p| {
                let out = args.output.join(p.file_name().expect("listed files have names"));
                (p, out)
            })
            .collect()
    } else {
        vec![(args.input.clone(), args.output.clone())]
    };
    if jobs.is_empty() {
        return Err(CliError::data(format!("{}: no .wav files", args.input.display())));
    }

    let lines = jobs
        .par_iter()
        .map(|(input, output)| enhance_file(&weights, input, output, args))
        .collect::<CliResult<Vec<_>>>()?;
    for line in lines {
        println!("{line}");
    }
    Ok(())
}

fn enhance_file(weights: &Arc<ModelWeights>, input: &Path, output: &Path, args: &EnhanceArgs) -> CliResult<String> {
    let clip = wav::read_wav(input)?;
    let mut enhancer = Enhancer::new(weights.clone())?;
    let chunk = args.chunk_ms as usize * SAMPLE_RATE as usize / 1000;

    let start = Instant::now();
    let enhanced = stream(&mut enhancer, &clip.samples, chunk, args.compensate_delay)?;
    let elapsed = start.elapsed().as_secs_f64();

    wav::write_pcm16(output, &AudioChunk::mono16k(enhanced))?;
    let seconds = clip.len() as f64 / SAMPLE_RATE as f64;
    let rtf = if seconds > 0.0 { elapsed / seconds } else { 0.0 };
    Ok(format!(
        "{} -> {}: {seconds:.2} s, RTF {rtf:.4}, clipped {}",
        input.display(),
        output.display(),
        enhancer.clipped_samples()
    ))
}

/// Streams `x` through `enhancer` in `chunk`-sample pieces and returns
/// exactly `x.len()` samples. The stream is flushed with zeros; with
/// `compensate` the leading latency is dropped.
pub fn stream(enhancer: &mut Enhancer, x: &[f64], chunk: usize, compensate: bool) -> clc_core::Result<Vec<f64>> {
    let skip = if compensate { enhancer.latency_samples() } else { 0 };
    let hop = enhancer.stft().hop;
    let needed = x.len() + skip;
    let flush = needed.div_ceil(hop) * hop - x.len();

    let mut out = Vec::with_capacity(needed + hop);
    for piece in x.chunks(chunk) {
        enhancer.process_into(piece, &mut out)?;
    }
    enhancer.process_into(&vec![0.0; flush], &mut out)?;
    out.truncate(needed);
    out.drain(..skip);
    Ok(out)
}
