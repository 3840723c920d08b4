use num_traits::Float;

/// One GRU layer. Gate rows are stacked as (reset, update, candidate), so
/// `w_ih` is `3H x input_dim` and `w_hh` is `3H x H`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer<T> {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_ih: Vec<T>,
    pub w_hh: Vec<T>,
    pub b_ih: Vec<T>,
    pub b_hh: Vec<T>,
}

impl<T: Float> GruLayer<T> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w_ih: vec![T::zero(); 3 * hidden * input_dim],
            w_hh: vec![T::zero(); 3 * hidden * hidden],
            b_ih: vec![T::zero(); 3 * hidden],
            b_hh: vec![T::zero(); 3 * hidden],
        }
    }

    pub fn param_count(&self) -> usize {
        self.w_ih.len() + self.w_hh.len() + self.b_ih.len() + self.b_hh.len()
    }

    /// Advances `h` by one step. `gi` and `gh` are `3H` scratch buffers.
    ///
    /// ```text
    /// r  = sigmoid(W_r x + b_r + U_r h + c_r)
    /// z  = sigmoid(W_z x + b_z + U_z h + c_z)
    /// n  = tanh(W_n x + b_n + r * (U_n h + c_n))
    /// h' = (1 - z) * n + z * h
    /// ```
    pub fn step(&self, x: &[T], h: &mut [T], gi: &mut [T], gh: &mut [T]) {
        let hd = self.hidden;
        assert_eq!(x.len(), self.input_dim, "GRU input size");
        assert_eq!(h.len(), hd, "GRU hidden size");
        assert!(gi.len() == 3 * hd && gh.len() == 3 * hd, "GRU scratch size");
        matvec_rows(&self.w_ih, &self.b_ih, x, gi);
        matvec_rows(&self.w_hh, &self.b_hh, h, gh);
        for u in 0..hd {
            let r = sigmoid(gi[u] + gh[u]);
            let z = sigmoid(gi[hd + u] + gh[hd + u]);
            let n = (gi[2 * hd + u] + r * gh[2 * hd + u]).tanh();
            h[u] = (T::one() - z) * n + z * h[u];
        }
    }
}

/// Single GRU step returning the new hidden vector.
pub fn gru_cell<T: Float>(x: &[T], h: &[T], layer: &GruLayer<T>) -> Vec<T> {
    let mut next = h.to_vec();
    let mut gi = vec![T::zero(); 3 * layer.hidden];
    let mut gh = vec![T::zero(); 3 * layer.hidden];
    layer.step(x, &mut next, &mut gi, &mut gh);
    next
}

/// Per-layer hidden vectors of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct GruState {
    pub layers: Vec<Vec<f32>>,
}

impl GruState {
    pub fn new(layers: usize, hidden: usize) -> Self {
        Self {
            layers: vec![vec![0.0; hidden]; layers],
        }
    }

    pub fn reset(&mut self) {
        for h in &mut self.layers {
            h.fill(0.0);
        }
    }
}

#[inline]
fn sigmoid<T: Float>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// `out[j] = bias[j] + <w[j, :], x>` for a row-major matrix.
pub(crate) fn matvec_rows<T: Float>(w: &[T], bias: &[T], x: &[T], out: &mut [T]) {
    let cols = x.len();
    for ((o, row), &b) in out.iter_mut().zip(w.chunks_exact(cols)).zip(bias) {
        *o = b + dot(row, x);
    }
}

/// `out = bias + x^T W` for a row-major `in x out` matrix.
pub(crate) fn matvec_cols<T: Float>(w: &[T], bias: &[T], x: &[T], out: &mut [T]) {
    out.copy_from_slice(bias);
    for (&xi, row) in x.iter().zip(w.chunks_exact(out.len())) {
        if xi == T::zero() {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(row) {
            *o = *o + xi * wv;
        }
    }
}

#[inline]
fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: T = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(T::zero(), |s, (&p, &q)| s + p * q);
    for (pa, pb) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + pa[k] * pb[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}
