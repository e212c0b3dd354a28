//! Weighted PageRank on undirected graphs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PageRankOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankOptions {
    fn default() -> Self {
        PageRankOptions {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// PageRank over `n` nodes and undirected weighted `edges`.
///
/// A node's rank flows to its neighbours in proportion to edge weight.
/// Nodes without incident weight spread their mass uniformly. Iteration stops
/// once the L1 change drops below `tol`; the result sums to one.
pub fn pagerank<T: Scalar>(
    n: usize,
    edges: &[(usize, usize, T)],
    opts: &PageRankOptions,
) -> Result<Vec<T>> {
    if n == 0 {
        return Err(Error::ShapeError("pagerank on an empty graph".into()));
    }
    if !(opts.damping > 0.0 && opts.damping < 1.0) || opts.tol <= 0.0 {
        return Err(Error::Config(
            "pagerank needs damping in (0, 1) and tol > 0".into(),
        ));
    }
    // adjacency lists with both directions
    let mut adj: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    let mut strength = vec![T::zero(); n];
    for &(a, b, w) in edges {
        if a >= n || b >= n {
            return Err(Error::ShapeError(format!("edge ({a}, {b}) outside {n} nodes")));
        }
        if !(w >= T::zero()) || !w.is_finite() {
            return Err(Error::ShapeError(format!("edge ({a}, {b}) has invalid weight {w}")));
        }
        adj[a].push((b, w));
        strength[a] += w;
        if a != b {
            adj[b].push((a, w));
            strength[b] += w;
        }
    }

    let d = T::lit(opts.damping);
    let tol = T::lit(opts.tol);
    let nf = T::count(n);
    let teleport = (T::one() - d) / nf;
    let mut rank = vec![T::one() / nf; n];
    let mut next = vec![T::zero(); n];
    let mut residual = T::infinity();
    for _ in 0..opts.max_iter {
        let dangling: T = (0..n)
            .filter(|&i| strength[i] <= T::zero())
            .map(|i| rank[i])
            .sum();
        let base = teleport + d * dangling / nf;
        next.iter_mut().for_each(|x| *x = base);
        for i in 0..n {
            if strength[i] <= T::zero() {
                continue;
            }
            let share = d * rank[i] / strength[i];
            for &(j, w) in &adj[i] {
                next[j] += share * w;
            }
        }
        residual = rank
            .iter()
            .zip(&next)
            .map(|(&a, &b)| (a - b).abs())
            .sum();
        std::mem::swap(&mut rank, &mut next);
        if residual < tol {
            let total: T = rank.iter().copied().sum();
            rank.iter_mut().for_each(|x| *x /= total);
            return Ok(rank);
        }
    }
    Err(Error::PageRankDiverged {
        iterations: opts.max_iter,
        residual: residual.to_f64_lossy(),
    })
}
