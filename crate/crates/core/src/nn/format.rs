//! CLCW weight files.
//!
//! Little-endian throughout:
//!
//! ```text
//! "CLCW" | u32 version = 1 | u32 tensor_count
//! per tensor: u32 name_len | name (UTF-8) | u32 ndim | u32 dims[ndim] | f32 data (row-major)
//! ```
//!
//! BatchNorm is stored either folded (`bn.scale`, `bn.bias`) or as raw
//! running statistics (`bn.gamma`, `bn.beta`, `bn.running_mean`,
//! `bn.running_var`), which are folded on load. Scalar settings live in
//! zero-dimensional `meta.*` tensors.

use std::collections::HashMap;

use super::{BatchNorm, BatchNormStats, Dense, GruLayer, Metadata, ModelConfig, ModelWeights};
use crate::LoadError;

const MAGIC: &[u8; 4] = b"CLCW";
const VERSION: u32 = 1;

struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, context: &str) -> Result<&'a [u8], LoadError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(LoadError::Truncated {
                context: context.to_string(),
                expected: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, context: &str) -> Result<u32, LoadError> {
        let b = self.take(4, context)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<ModelWeights, LoadError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(magic);
        return Err(LoadError::BadMagic { found });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(LoadError::UnsupportedVersion(version));
    }
    let count = r.u32("tensor count")?;

    let mut tensors: HashMap<String, Tensor> = HashMap::new();
    for index in 0..count {
        let name_len = r.u32(&format!("name length of tensor #{index}"))? as usize;
        let name = std::str::from_utf8(r.take(name_len, &format!("name of tensor #{index}"))?)
            .map_err(|_| LoadError::InvalidName)?
            .to_string();
        let ndim = r.u32(&format!("{name} ndim"))? as usize;
        let mut dims = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            dims.push(r.u32(&format!("{name} dims"))? as usize);
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| LoadError::Truncated {
                context: format!("{name} data"),
                expected: usize::MAX,
                available: bytes.len() - r.pos,
            })?
            / 4;
        let raw = r.take(numel * 4, &format!("{name} data"))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(LoadError::NonFinite { name, index: i });
        }
        if tensors.contains_key(&name) {
            return Err(LoadError::DuplicateTensor(name));
        }
        tensors.insert(name, Tensor { dims, data });
    }
    if r.pos != bytes.len() {
        return Err(LoadError::TrailingBytes(bytes.len() - r.pos));
    }
    assemble(tensors)
}

fn take_tensor(tensors: &mut HashMap<String, Tensor>, name: &str, shape: &[usize]) -> Result<Vec<f32>, LoadError> {
    let t = tensors
        .remove(name)
        .ok_or_else(|| LoadError::MissingTensor(name.to_string()))?;
    if t.dims != shape {
        return Err(LoadError::ShapeMismatch {
            name: name.to_string(),
            expected: shape.to_vec(),
            found: t.dims,
        });
    }
    Ok(t.data)
}

fn meta_value(tensors: &mut HashMap<String, Tensor>, name: &str) -> Result<f32, LoadError> {
    let t = tensors
        .remove(name)
        .ok_or_else(|| LoadError::MissingTensor(name.to_string()))?;
    if t.data.len() != 1 || t.dims.len() > 1 {
        return Err(LoadError::ShapeMismatch {
            name: name.to_string(),
            expected: vec![],
            found: t.dims,
        });
    }
    Ok(t.data[0])
}

fn meta_int(tensors: &mut HashMap<String, Tensor>, name: &str, min: i64) -> Result<i64, LoadError> {
    let v = meta_value(tensors, name)?;
    if v.fract() != 0.0 || (v as i64) < min {
        return Err(LoadError::InvalidMetadata {
            name: name.to_string(),
            value: v,
        });
    }
    Ok(v as i64)
}

fn assemble(mut t: HashMap<String, Tensor>) -> Result<ModelWeights, LoadError> {
    let invalid = |name: &str, value: f32| LoadError::InvalidMetadata {
        name: name.to_string(),
        value,
    };
    let sample_rate = meta_int(&mut t, "meta.sample_rate", 1)? as u32;
    let fft_size = meta_int(&mut t, "meta.fft_size", 2)? as usize;
    let hop = meta_int(&mut t, "meta.hop", 1)? as usize;
    let n_bins = meta_int(&mut t, "meta.n_bins", 1)? as usize;
    let clc_order = meta_int(&mut t, "meta.clc_order", 1)? as usize;
    let lookahead = meta_int(&mut t, "meta.lookahead", i32::MIN as i64)? as i32;
    let alpha_raw = meta_value(&mut t, "meta.alpha")?;
    if n_bins != fft_size / 2 + 1 {
        return Err(invalid("meta.n_bins", n_bins as f32));
    }
    if lookahead >= clc_order as i32 {
        return Err(invalid("meta.lookahead", lookahead as f32));
    }
    if !(alpha_raw > 0.0 && alpha_raw < 1.0) {
        return Err(invalid("meta.alpha", alpha_raw));
    }
    // Shortest decimal form of the stored f32, so 0.99 reads back as 0.99.
    let alpha: f64 = alpha_raw.to_string().parse().expect("float display parses");

    let input_dim = 2 * n_bins;
    let hidden = t
        .get("fc_in.w")
        .and_then(|w| (w.dims.len() == 2).then(|| w.dims[1]))
        .ok_or_else(|| match t.get("fc_in.w") {
            None => LoadError::MissingTensor("fc_in.w".into()),
            Some(w) => LoadError::ShapeMismatch {
                name: "fc_in.w".into(),
                expected: vec![input_dim, 0],
                found: w.dims.clone(),
            },
        })?;
    let output_dim = clc_order * n_bins * 2;

    let fc_in = Dense {
        in_dim: input_dim,
        out_dim: hidden,
        w: take_tensor(&mut t, "fc_in.w", &[input_dim, hidden])?,
        b: take_tensor(&mut t, "fc_in.b", &[hidden])?,
    };

    let bn = if t.contains_key("bn.scale") || !t.contains_key("bn.gamma") {
        BatchNorm {
            scale: take_tensor(&mut t, "bn.scale", &[hidden])?,
            bias: take_tensor(&mut t, "bn.bias", &[hidden])?,
            stats: None,
        }
    } else {
        BatchNorm::fold(BatchNormStats {
            gamma: take_tensor(&mut t, "bn.gamma", &[hidden])?,
            beta: take_tensor(&mut t, "bn.beta", &[hidden])?,
            running_mean: take_tensor(&mut t, "bn.running_mean", &[hidden])?,
            running_var: take_tensor(&mut t, "bn.running_var", &[hidden])?,
        })
    };

    let mut grus = Vec::new();
    while t.contains_key(&format!("gru{}.w_ih", grus.len() + 1)) {
        let p = format!("gru{}", grus.len() + 1);
        grus.push(GruLayer {
            input_dim: hidden,
            hidden,
            w_ih: take_tensor(&mut t, &format!("{p}.w_ih"), &[3 * hidden, hidden])?,
            w_hh: take_tensor(&mut t, &format!("{p}.w_hh"), &[3 * hidden, hidden])?,
            b_ih: take_tensor(&mut t, &format!("{p}.b_ih"), &[3 * hidden])?,
            b_hh: take_tensor(&mut t, &format!("{p}.b_hh"), &[3 * hidden])?,
        });
    }
    if grus.is_empty() {
        return Err(LoadError::MissingTensor("gru1.w_ih".into()));
    }

    let fc_out = Dense {
        in_dim: hidden,
        out_dim: output_dim,
        w: take_tensor(&mut t, "fc_out.w", &[hidden, output_dim])?,
        b: take_tensor(&mut t, "fc_out.b", &[output_dim])?,
    };

    if let Some(name) = t.keys().min() {
        return Err(LoadError::UnexpectedTensor(name.clone()));
    }

    Ok(ModelWeights {
        config: ModelConfig {
            n_bins,
            clc_order,
            hidden,
            gru_layers: grus.len(),
        },
        meta: Metadata {
            sample_rate,
            fft_size,
            hop,
            n_bins,
            clc_order,
            lookahead,
            alpha,
        },
        fc_in,
        bn,
        grus,
        fc_out,
    })
}

struct Writer {
    buf: Vec<u8>,
    count: u32,
}

impl Writer {
    fn tensor(&mut self, name: &str, dims: &[usize], data: &[f32]) {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        self.buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(name.as_bytes());
        self.buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            self.buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in data {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self.count += 1;
    }

    fn scalar(&mut self, name: &str, v: f32) {
        self.tensor(name, &[], &[v]);
    }
}

/// Canonical tensor order: weights in pipeline order, then metadata.
pub(super) fn encode(w: &ModelWeights) -> Vec<u8> {
    let mut out = Writer {
        buf: Vec::new(),
        count: 0,
    };
    let h = w.config.hidden;
    out.tensor("fc_in.w", &[w.fc_in.in_dim, w.fc_in.out_dim], &w.fc_in.w);
    out.tensor("fc_in.b", &[h], &w.fc_in.b);
    match &w.bn.stats {
        Some(s) => {
            out.tensor("bn.gamma", &[h], &s.gamma);
            out.tensor("bn.beta", &[h], &s.beta);
            out.tensor("bn.running_mean", &[h], &s.running_mean);
            out.tensor("bn.running_var", &[h], &s.running_var);
        }
        None => {
            out.tensor("bn.scale", &[h], &w.bn.scale);
            out.tensor("bn.bias", &[h], &w.bn.bias);
        }
    }
    for (i, g) in w.grus.iter().enumerate() {
        let p = format!("gru{}", i + 1);
        out.tensor(&format!("{p}.w_ih"), &[3 * g.hidden, g.input_dim], &g.w_ih);
        out.tensor(&format!("{p}.w_hh"), &[3 * g.hidden, g.hidden], &g.w_hh);
        out.tensor(&format!("{p}.b_ih"), &[3 * g.hidden], &g.b_ih);
        out.tensor(&format!("{p}.b_hh"), &[3 * g.hidden], &g.b_hh);
    }
    out.tensor("fc_out.w", &[w.fc_out.in_dim, w.fc_out.out_dim], &w.fc_out.w);
    out.tensor("fc_out.b", &[w.fc_out.out_dim], &w.fc_out.b);
    let m = &w.meta;
    out.scalar("meta.sample_rate", m.sample_rate as f32);
    out.scalar("meta.fft_size", m.fft_size as f32);
    out.scalar("meta.hop", m.hop as f32);
    out.scalar("meta.n_bins", m.n_bins as f32);
    out.scalar("meta.clc_order", m.clc_order as f32);
    out.scalar("meta.lookahead", m.lookahead as f32);
    out.scalar("meta.alpha", m.alpha as f32);

    let mut bytes = Vec::with_capacity(12 + out.buf.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&out.count.to_le_bytes());
    bytes.extend_from_slice(&out.buf);
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelWeights {
        ModelWeights::random(
            ModelConfig {
                n_bins: 8,
                clc_order: 2,
                hidden: 4,
                gru_layers: 2,
            },
            42,
        )
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let w = tiny();
        let bytes = encode(&w);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(encode(&back), bytes);
        assert_eq!(back.meta.alpha, 0.99);
    }

    #[test]
    fn truncation_reports_byte_counts() {
        let bytes = encode(&tiny());
        let err = decode(&bytes[..bytes.len() - 3]).unwrap_err();
        match err {
            LoadError::Truncated {
                expected, available, ..
            } => {
                assert_eq!(expected, 4);
                assert_eq!(available, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(decode(&bytes[..2]), Err(LoadError::Truncated { .. })));
    }

    #[test]
    fn header_errors() {
        let mut bytes = encode(&tiny());
        bytes[0] = b'X';
        assert_eq!(decode(&bytes).unwrap_err(), LoadError::BadMagic { found: *b"XLCW" });
        let mut bytes = encode(&tiny());
        bytes[4] = 2;
        assert_eq!(decode(&bytes).unwrap_err(), LoadError::UnsupportedVersion(2));
        let mut bytes = encode(&tiny());
        bytes.push(0);
        assert_eq!(decode(&bytes).unwrap_err(), LoadError::TrailingBytes(1));
    }

    #[test]
    fn shape_and_value_errors_name_the_tensor() {
        let mut w = tiny();
        w.meta.clc_order = 3;
        assert_eq!(
            decode(&encode(&w)).unwrap_err(),
            LoadError::ShapeMismatch {
                name: "fc_out.w".into(),
                expected: vec![4, 48],
                found: vec![4, 32]
            }
        );

        let mut w = tiny();
        w.grus[1].b_hh[3] = f32::NAN;
        assert_eq!(
            decode(&encode(&w)).unwrap_err(),
            LoadError::NonFinite {
                name: "gru2.b_hh".into(),
                index: 3
            }
        );

        let mut w = tiny();
        w.meta.alpha = 1.5;
        assert!(matches!(
            decode(&encode(&w)).unwrap_err(),
            LoadError::InvalidMetadata { name, .. } if name == "meta.alpha"
        ));
    }

    #[test]
    fn missing_and_unexpected_tensors() {
        let w = tiny();
        let bytes = encode(&w);
        // Drop the trailing meta.alpha tensor: 4 + 10 + 4 + 4 bytes.
        let mut cut = bytes[..bytes.len() - 22].to_vec();
        let count = u32::from_le_bytes(cut[8..12].try_into().unwrap()) - 1;
        cut[8..12].copy_from_slice(&count.to_le_bytes());
        assert_eq!(decode(&cut).unwrap_err(), LoadError::MissingTensor("meta.alpha".into()));

        let mut extra = bytes.clone();
        let mut out = Writer {
            buf: Vec::new(),
            count: 0,
        };
        out.scalar("zz.extra", 1.0);
        extra.extend_from_slice(&out.buf);
        let count = u32::from_le_bytes(extra[8..12].try_into().unwrap()) + 1;
        extra[8..12].copy_from_slice(&count.to_le_bytes());
        assert_eq!(
            decode(&extra).unwrap_err(),
            LoadError::UnexpectedTensor("zz.extra".into())
        );
    }

    #[test]
    fn raw_batchnorm_is_folded_and_preserved() {
        let mut w = tiny();
        w.bn = BatchNorm::fold(BatchNormStats {
            gamma: vec![1.0; 4],
            beta: vec![0.0; 4],
            running_mean: vec![0.0; 4],
            running_var: vec![1.0; 4],
        });
        let bytes = encode(&w);
        let back = decode(&bytes).unwrap();
        assert!((back.bn.scale[0] as f64 - 0.999_995_000_037_5).abs() < 1e-7);
        assert_eq!(back.bn.bias, vec![0.0; 4]);
        assert_eq!(encode(&back), bytes);
    }
}
