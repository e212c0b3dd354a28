use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::patient_network::Adjacency;
use crate::scalar::{sigmoid, softmax_in_place, Scalar};

/// Gaussian kernel between two projected feature vectors:
/// `exp(-|W h_a - W h_b|^2 / (2 sigma^2)) / (sqrt(2 pi) sigma)`.
///
/// `w` is `in x out` and applied as `h W`.
pub fn gaussian_affinity<T: Scalar>(h_a: &[T], h_b: &[T], w: ArrayView2<T>, sigma: T) -> T {
    let (rows, cols) = w.dim();
    assert!(h_a.len() == rows && h_b.len() == rows, "feature / weight dimension mismatch");
    let mut d2 = T::zero();
    for j in 0..cols {
        let mut diff = T::zero();
        for i in 0..rows {
            diff += (h_a[i] - h_b[i]) * w[[i, j]];
        }
        d2 += diff * diff;
    }
    kernel(d2, sigma)
}

#[inline]
pub(crate) fn kernel<T: Scalar>(d2: T, sigma: T) -> T {
    let two_pi = T::lit(2.0 * std::f64::consts::PI);
    (-d2 / (T::lit(2.0) * sigma * sigma)).exp() / (two_pi.sqrt() * sigma)
}

/// Structure attention for one neighbourhood: softmax of the intervention scores.
pub fn structure_attention<T: Scalar>(c_row: &[T]) -> Vec<T> {
    let mut t = c_row.to_vec();
    softmax_in_place(&mut t);
    t
}

/// Gate weights `(r_o, r_t)` from the two gate logits.
#[inline]
pub(crate) fn gate<T: Scalar>(s_o: T, s_t: T) -> (T, T) {
    let r_o = sigmoid(s_o - s_t);
    (r_o, T::one() - r_o)
}

/// Blends normalized feature attention `o` and structure attention `t` with
/// `r_o = e^{s_o} / (e^{s_o} + e^{s_t})`, `r_t = 1 - r_o`.
pub fn conjoint_attention<T: Scalar>(o: &[T], t: &[T], s_o: T, s_t: T) -> Vec<T> {
    assert_eq!(o.len(), t.len());
    let (r_o, r_t) = gate(s_o, s_t);
    o.iter().zip(t).map(|(&o, &t)| r_o * o + r_t * t).collect()
}

/// Adjacency together with the frozen structural intervention scores `C` and
/// the structure attention `t` derived from them, both aligned with the
/// adjacency's stored entries.
#[derive(Debug, Clone)]
pub struct GraphContext<T> {
    adj: Adjacency,
    c: Vec<T>,
    t: Vec<T>,
    /// Storage index of `(b, a)` for each entry `(a, b)`.
    mirror: Vec<usize>,
}

impl<T: Scalar> GraphContext<T> {
    pub fn new(adj: Adjacency, c: Vec<T>) -> Result<Self> {
        if c.len() != adj.nnz() {
            return Err(Error::ShapeError(format!(
                "{} intervention scores for {} adjacency entries",
                c.len(),
                adj.nnz()
            )));
        }
        let mut t = Vec::with_capacity(c.len());
        for a in 0..adj.n() {
            let r = adj.row_ptr()[a]..adj.row_ptr()[a + 1];
            t.extend(structure_attention(&c[r]));
        }
        let mirror = adj
            .entries()
            .map(|(_, a, b)| adj.position(b, a).expect("adjacency is symmetric"))
            .collect();
        Ok(GraphContext { adj, c, t, mirror })
    }

    /// Context with all intervention scores zero (uniform structure attention).
    pub fn uniform(adj: Adjacency) -> Self {
        let c = vec![T::zero(); adj.nnz()];
        GraphContext::new(adj, c).expect("lengths agree")
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adj
    }

    pub fn n(&self) -> usize {
        self.adj.n()
    }

    pub fn intervention(&self) -> &[T] {
        &self.c
    }

    pub fn structure(&self) -> &[T] {
        &self.t
    }

    pub(crate) fn mirror(&self) -> &[usize] {
        &self.mirror
    }
}
