//! Objective scores between an enhanced clip and its clean reference.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// SI-SDR values are reported capped at this level.
pub const SI_SDR_CAP_DB: f64 = 100.0;

/// Shortest overlap [`align_and_eval`] will score (100 ms).
pub const MIN_EVAL_SAMPLES: usize = 1600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Capped at [`SI_SDR_CAP_DB`].
    pub si_sdr_db: f64,
    /// Residual vanished: the estimate is a scaled copy of the reference.
    pub exact_match: bool,
    pub rmse: f64,
    pub delay_applied: usize,
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Shape("empty signals".into()));
    }
    Ok(())
}

/// Scale-invariant signal-to-distortion ratio in dB, computed on
/// mean-removed signals. Returns `f64::INFINITY` when the residual is
/// negligible (at most `1e-12` of the target energy).
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(estimate, reference)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (me, mr) = (mean(estimate), mean(reference));

    let mut dot = 0.0;
    let mut ref_energy = 0.0;
    for (&e, &r) in estimate.iter().zip(reference) {
        dot += (e - me) * (r - mr);
        ref_energy += (r - mr) * (r - mr);
    }
    if ref_energy == 0.0 {
        return Err(Error::Domain("reference has no energy after mean removal".into()));
    }
    let alpha = dot / ref_energy;
    let mut target = 0.0;
    let mut residual = 0.0;
    for (&e, &r) in estimate.iter().zip(reference) {
        let t = alpha * (r - mr);
        target += t * t;
        residual += (e - me - t) * (e - me - t);
    }
    if residual <= 1e-12 * target {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (target / residual).log10())
}

pub fn rmse(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(estimate, reference)?;
    let sum: f64 = estimate.iter().zip(reference).map(|(e, r)| (e - r) * (e - r)).sum();
    Ok((sum / estimate.len() as f64).sqrt())
}

/// Drops the first `known_delay` samples of `enhanced`, trims both clips to
/// the common length and scores them.
pub fn align_and_eval(enhanced: &[f64], clean: &[f64], known_delay: usize) -> Result<EvalResult> {
    let available = enhanced.len().saturating_sub(known_delay).min(clean.len());
    if available < MIN_EVAL_SAMPLES {
        return Err(Error::InsufficientData {
            available,
            required: MIN_EVAL_SAMPLES,
        });
    }
    let est = &enhanced[known_delay..known_delay + available];
    let reference = &clean[..available];
    let raw = si_sdr(est, reference)?;
    Ok(EvalResult {
        si_sdr_db: raw.min(SI_SDR_CAP_DB),
        exact_match: raw.is_infinite(),
        rmse: rmse(est, reference)?,
        delay_applied: known_delay,
    })
}
