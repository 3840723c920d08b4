//! Complex linear coding: each output bin is a complex linear combination of
//! the same bin over the last `N` noisy frames,
//!
//! ```text
//! S(k, f) = sum_{i=0}^{N-1} A(k, i, f) * X(k - i + l, f)
//! ```
//!
//! `N = 1, l = 0` is an ordinary complex mask.

use crate::dsp::ComplexSpectrum;
use crate::{Complex, Error, Result};

const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

/// Tikhonov term added to the normal equations of [`ls_optimal`].
pub const LS_DAMPING: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClcConfig {
    /// Number of taps `N`.
    pub order: usize,
    /// Frame offset `l`. Positive values reach into future frames and cost
    /// `l` hops of extra latency; negative values turn the combination into
    /// a predictor.
    pub lookahead: i32,
}

impl Default for ClcConfig {
    fn default() -> Self {
        Self { order: 5, lookahead: 0 }
    }
}

impl ClcConfig {
    pub fn new(order: usize, lookahead: i32) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("CLC order must be at least 1".into()));
        }
        if lookahead >= order as i32 {
            return Err(Error::Config(format!(
                "lookahead {lookahead} must be smaller than the order {order}"
            )));
        }
        Ok(Self { order, lookahead })
    }
}

/// `N x F` complex coefficients, tap-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    order: usize,
    n_bins: usize,
    a: Vec<Complex>,
}

impl CoefficientSet {
    pub fn zeros(order: usize, n_bins: usize) -> Self {
        Self {
            order,
            n_bins,
            a: vec![ZERO; order * n_bins],
        }
    }

    /// Passes frame `tap` of the history through unchanged.
    pub fn identity(order: usize, n_bins: usize, tap: usize) -> Self {
        let mut c = Self::zeros(order, n_bins);
        c.tap_mut(tap).fill(Complex::new(1.0, 0.0));
        c
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn tap(&self, i: usize) -> &[Complex] {
        &self.a[i * self.n_bins..(i + 1) * self.n_bins]
    }

    pub fn tap_mut(&mut self, i: usize) -> &mut [Complex] {
        &mut self.a[i * self.n_bins..(i + 1) * self.n_bins]
    }

    pub fn get(&self, tap: usize, bin: usize) -> Complex {
        self.a[tap * self.n_bins + bin]
    }

    pub fn set(&mut self, tap: usize, bin: usize, value: Complex) {
        self.a[tap * self.n_bins + bin] = value;
    }

    pub fn as_slice(&self) -> &[Complex] {
        &self.a
    }

    pub fn fill_zero(&mut self) {
        self.a.fill(ZERO);
    }

    /// Reads the network output layout `i*F*2 + f*2 + {re, im}`.
    pub fn copy_from_interleaved(&mut self, values: &[f32]) {
        assert_eq!(values.len(), 2 * self.a.len(), "coefficient buffer size");
        for (c, pair) in self.a.iter_mut().zip(values.chunks_exact(2)) {
            *c = Complex::new(pair[0] as f64, pair[1] as f64);
        }
    }

    pub fn from_interleaved(order: usize, n_bins: usize, values: &[f32]) -> Result<Self> {
        if values.len() != 2 * order * n_bins {
            return Err(Error::Shape(format!(
                "{} values for {order} x {n_bins} complex coefficients",
                values.len()
            )));
        }
        let mut c = Self::zeros(order, n_bins);
        c.copy_from_interleaved(values);
        Ok(c)
    }

    pub fn to_interleaved(&self) -> Vec<f32> {
        self.a.iter().flat_map(|c| [c.re as f32, c.im as f32]).collect()
    }
}

/// The last `N` noisy frames, newest at index 0. Starts out as zeros.
#[derive(Debug, Clone)]
pub struct SpectrumHistory {
    frames: Vec<ComplexSpectrum>,
    newest: usize,
}

impl SpectrumHistory {
    pub fn new(order: usize, n_bins: usize) -> Self {
        assert!(order >= 1);
        Self {
            frames: vec![ComplexSpectrum::zeros(n_bins); order],
            newest: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_bins(&self) -> usize {
        self.frames[0].len()
    }

    /// Frame pushed `i` steps ago.
    pub fn get(&self, i: usize) -> &ComplexSpectrum {
        let n = self.frames.len();
        &self.frames[(self.newest + n - i % n) % n]
    }

    /// Drops the oldest frame and stores a copy of `spectrum` at index 0.
    pub fn push(&mut self, spectrum: &ComplexSpectrum) {
        assert_eq!(spectrum.len(), self.n_bins(), "bin count mismatch");
        let n = self.frames.len();
        self.newest = (self.newest + 1) % n;
        let slot = &mut self.frames[self.newest];
        slot.bins.copy_from_slice(&spectrum.bins);
        slot.frame_index = spectrum.frame_index;
    }

    pub fn reset(&mut self) {
        for f in &mut self.frames {
            f.clear();
            f.frame_index = 0;
        }
        self.newest = 0;
    }
}

/// Applies the combination to the current history.
pub fn apply(coeffs: &CoefficientSet, history: &SpectrumHistory) -> ComplexSpectrum {
    let mut out = ComplexSpectrum::zeros(history.n_bins());
    apply_into(coeffs, history, &mut out);
    out
}

pub fn apply_into(coeffs: &CoefficientSet, history: &SpectrumHistory, out: &mut ComplexSpectrum) {
    assert_eq!(coeffs.order(), history.len(), "CLC order mismatch");
    assert_eq!(coeffs.n_bins(), history.n_bins(), "bin count mismatch");
    assert_eq!(out.len(), history.n_bins(), "bin count mismatch");
    out.clear();
    for i in 0..coeffs.order() {
        let x = &history.get(i).bins;
        for ((y, a), x) in out.bins.iter_mut().zip(coeffs.tap(i)).zip(x) {
            *y += a * x;
        }
    }
    out.frame_index = history.get(0).frame_index;
}

/// Builds the per-frame regression rows for one bin: row `k` holds
/// `X(k - i + l)` for `i = 0..order`, with zeros outside the sequence.
pub fn regression_rows(noisy: &[Complex], order: usize, lookahead: i32) -> Vec<Vec<Complex>> {
    (0..noisy.len() as i64)
        .map(|k| {
            (0..order as i64)
                .map(|i| {
                    let t = k - i + lookahead as i64;
                    if t >= 0 && (t as usize) < noisy.len() {
                        noisy[t as usize]
                    } else {
                        ZERO
                    }
                })
                .collect()
        })
        .collect()
}

/// Complex least-squares coefficients for one bin,
/// `argmin_a sum_k |sum_i a_i rows[k][i] - targets[k]|^2`, solved through the
/// damped normal equations. Never fails; degenerate systems get the damped
/// solution.
pub fn ls_optimal(rows: &[Vec<Complex>], targets: &[Complex]) -> Vec<Complex> {
    assert_eq!(rows.len(), targets.len(), "one target per row");
    let n = rows.first().map_or(0, Vec::len);
    let mut gram = vec![ZERO; n * n];
    let mut rhs = vec![ZERO; n];
    for (row, &s) in rows.iter().zip(targets) {
        assert_eq!(row.len(), n, "ragged regression rows");
        for p in 0..n {
            let xp = row[p].conj();
            for q in 0..n {
                gram[p * n + q] += xp * row[q];
            }
            rhs[p] += xp * s;
        }
    }
    for p in 0..n {
        gram[p * n + p] += LS_DAMPING;
    }
    solve_dense(&mut gram, &mut rhs, n);
    rhs
}

/// Sum of squared errors of `coeffs` on the regression problem.
pub fn ls_residual(rows: &[Vec<Complex>], targets: &[Complex], coeffs: &[Complex]) -> f64 {
    rows.iter()
        .zip(targets)
        .map(|(row, &s)| {
            let est: Complex = row.iter().zip(coeffs).map(|(x, a)| a * x).sum();
            (est - s).norm_sqr()
        })
        .sum()
}

/// Gaussian elimination with partial pivoting; the solution replaces `b`.
fn solve_dense(a: &mut [Complex], b: &mut [Complex], n: usize) {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r * n + col].norm().total_cmp(&a[s * n + col].norm()))
            .unwrap();
        if a[pivot * n + col].norm() == 0.0 {
            continue;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / d;
            if factor == ZERO {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[r * n + k] -= factor * v;
            }
            let v = b[col];
            b[r] -= factor * v;
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * b[k];
        }
        let d = a[col * n + col];
        b[col] = if d.norm() == 0.0 { ZERO } else { acc / d };
    }
}
