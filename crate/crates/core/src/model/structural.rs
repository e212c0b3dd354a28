//! Low-rank structural intervention fit.
//!
//! Finds `V` (`Z x k`) minimizing `sum over S_ab = 1 of (S_ab - (V V^T S)_ab)^2`
//! by gradient descent and reads off `C_ab = (V V^T)_ab` on the adjacency
//! pattern. With `U = S V` the reconstruction is `(V V^T S)_ab = V_a . U_b`,
//! so both objective and gradient cost `O(nnz k)`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patient_network::Adjacency;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructuralFitOptions {
    pub rank: usize,
    pub iters: usize,
    pub lr: f64,
    /// Half-width of the uniform initialization of `V`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for StructuralFitOptions {
    fn default() -> Self {
        StructuralFitOptions {
            rank: 8,
            iters: 200,
            lr: 1e-3,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StructuralFit<T: Scalar> {
    pub v: Array2<T>,
    /// `C_ab = V_a . V_b` for every stored adjacency entry, in storage order.
    pub c: Vec<T>,
    /// Objective before the first step and after every accepted step.
    pub objective: Vec<T>,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `U = S V`.
fn propagate<T: Scalar>(adj: &Adjacency, v: &[T], k: usize) -> Vec<T> {
    let mut u = vec![T::zero(); v.len()];
    for (_, b, c) in adj.entries() {
        for j in 0..k {
            u[b * k + j] += v[c * k + j];
        }
    }
    u
}

fn objective<T: Scalar>(adj: &Adjacency, v: &[T], k: usize) -> T {
    let u = propagate(adj, v, k);
    adj.entries()
        .map(|(_, a, b)| {
            let r = T::one() - dot(&v[a * k..(a + 1) * k], &u[b * k..(b + 1) * k]);
            r * r
        })
        .sum()
}

fn gradient<T: Scalar>(adj: &Adjacency, v: &[T], k: usize) -> Vec<T> {
    let u = propagate(adj, v, k);
    let two = T::lit(2.0);
    let mut gv = vec![T::zero(); v.len()];
    let mut gu = vec![T::zero(); v.len()];
    for (_, a, b) in adj.entries() {
        let va = &v[a * k..(a + 1) * k];
        let ub = &u[b * k..(b + 1) * k];
        let coef = -two * (T::one() - dot(va, ub));
        for j in 0..k {
            gv[a * k + j] += coef * ub[j];
            gu[b * k + j] += coef * va[j];
        }
    }
    // back through U = S V (S symmetric)
    for (_, c, b) in adj.entries() {
        for j in 0..k {
            gv[c * k + j] += gu[b * k + j];
        }
    }
    gv
}

/// Fits the structural factor by gradient descent starting at step `lr`. A
/// step that would increase the objective is retried at half the size and an
/// accepted step grows the next one by a quarter, so the recorded objective
/// never increases. Deterministic for a fixed seed.
pub fn fit_structural_intervention<T: Scalar>(
    adj: &Adjacency,
    opts: &StructuralFitOptions,
) -> Result<StructuralFit<T>> {
    if opts.rank == 0 {
        return Err(Error::Config("structural rank must be >= 1".into()));
    }
    if !(opts.lr > 0.0) {
        return Err(Error::Config("structural fit learning rate must be > 0".into()));
    }
    let n = adj.n();
    let k = opts.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<T> = (0..n * k)
        .map(|_| T::lit(rng.random_range(-opts.init_scale..=opts.init_scale)))
        .collect();
    let mut f = objective(adj, &v, k);
    if !f.is_finite() {
        return Err(Error::StructFitDiverged { iteration: 0 });
    }
    let mut history = vec![f];
    let mut step = T::lit(opts.lr);
    let min_step = T::lit(opts.lr) * T::lit(1e-12);
    for it in 0..opts.iters {
        let g = gradient(adj, &v, k);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::StructFitDiverged { iteration: it + 1 });
        }
        let mut accepted = false;
        while step >= min_step {
            let trial: Vec<T> = v.iter().zip(&g).map(|(&x, &d)| x - step * d).collect();
            let ft = objective(adj, &trial, k);
            if ft.is_finite() && ft <= f {
                v = trial;
                f = ft;
                accepted = true;
                step *= T::lit(1.25);
                break;
            }
            step /= T::lit(2.0);
        }
        if !accepted {
            break;
        }
        history.push(f);
    }
    let c = adj
        .entries()
        .map(|(_, a, b)| dot(&v[a * k..(a + 1) * k], &v[b * k..(b + 1) * k]))
        .collect();
    Ok(StructuralFit {
        v: Array2::from_shape_vec((n, k), v).expect("n * k entries"),
        c,
        objective: history,
    })
}
