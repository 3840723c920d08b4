//! WAV input (16-bit PCM or 32-bit float, mono, 16 kHz) and PCM16 output.
//!
//! PCM16 samples map to floats by division by 32768; writing multiplies by
//! 32768, rounds half away from zero and saturates. No dither.

use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::dsp::AudioChunk;
use crate::{Error, Result, SAMPLE_RATE};

const PCM16_SPEC: WavSpec = WavSpec {
    channels: 1,
    sample_rate: SAMPLE_RATE,
    bits_per_sample: 16,
    sample_format: SampleFormat::Int,
};

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioChunk> {
    let path = path.as_ref();
    let wav = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = WavReader::open(path).map_err(wav)?;
    decode_reader(reader).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        Error::Wav { source, .. } => wav(source),
        other => other,
    })
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioChunk> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(|source| Error::Wav {
        path: "<memory>".into(),
        source,
    })?;
    decode_reader(reader)
}

fn decode_reader<R: Read>(mut reader: WavReader<R>) -> Result<AudioChunk> {
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Data(format!(
            "{} channels, only mono is supported",
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::Data(format!(
            "sample rate {} Hz, only {SAMPLE_RATE} Hz is supported",
            spec.sample_rate
        )));
    }
    let wav = |source| Error::Wav {
        path: "<stream>".into(),
        source,
    };
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(wav)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(wav)?,
        (fmt, bits) => {
            return Err(Error::Data(format!(
                "unsupported sample format {fmt:?} with {bits} bits"
            )))
        }
    };
    crate::dsp::check_finite(&samples)?;
    Ok(AudioChunk::new(samples, spec.sample_rate))
}

pub fn to_pcm16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn write_pcm16_to<W: Write + Seek>(writer: W, chunk: &AudioChunk) -> std::result::Result<(), hound::Error> {
    let mut w = WavWriter::new(writer, PCM16_SPEC)?;
    {
        let mut iw = w.get_i16_writer(chunk.len() as u32);
        for &s in &chunk.samples {
            iw.write_sample(to_pcm16(s));
        }
        iw.flush()?;
    }
    w.finalize()
}

/// Encodes a 16 kHz chunk as a mono PCM16 WAV file image.
pub fn encode_pcm16(chunk: &AudioChunk) -> Result<Vec<u8>> {
    chunk.check_rate()?;
    let mut buf = Cursor::new(Vec::new());
    write_pcm16_to(&mut buf, chunk).map_err(|source| Error::Wav {
        path: "<memory>".into(),
        source,
    })?;
    Ok(buf.into_inner())
}

pub fn write_pcm16(path: impl AsRef<Path>, chunk: &AudioChunk) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pcm16(chunk)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
