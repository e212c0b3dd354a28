//! Weighted patient network: patients are nodes, edge weight is the number of
//! diseases two patients share.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientGraph {
    pub n: usize,
    pub threshold: usize,
    /// Keyed by `(a, b)` with `a < b`.
    pub edges: BTreeMap<(usize, usize), usize>,
}

impl PatientGraph {
    pub fn weight(&self, a: usize, b: usize) -> Option<usize> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.get(&key).copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// Per-patient disease indices into the cohort universe, sorted.
pub(crate) fn disease_index_lists(cohort: &Cohort) -> Vec<Vec<u32>> {
    let pos: BTreeMap<_, _> = cohort
        .universe
        .iter()
        .enumerate()
        .map(|(i, c)| (c, i as u32))
        .collect();
    cohort
        .patients
        .iter()
        .map(|p| p.diseases().iter().map(|c| pos[c]).collect())
        .collect()
}

fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Builds the patient graph, keeping pairs that share at least `threshold` diseases.
///
/// Diseases are unioned across each patient's admissions.
pub fn build_patient_graph(cohort: &Cohort, threshold: usize) -> Result<PatientGraph> {
    if threshold == 0 {
        return Err(Error::Config("patient graph threshold must be >= 1".into()));
    }
    let sets = disease_index_lists(cohort);
    let n = sets.len();
    let rows: Vec<Vec<(usize, usize)>> = (0..n)
        .into_par_iter()
        .map(|a| {
            ((a + 1)..n)
                .filter_map(|b| {
                    let w = intersection_size(&sets[a], &sets[b]);
                    (w >= threshold).then_some((b, w))
                })
                .collect()
        })
        .collect();
    let mut edges = BTreeMap::new();
    for (a, row) in rows.into_iter().enumerate() {
        for (b, w) in row {
            edges.insert((a, b), w);
        }
    }
    Ok(PatientGraph { n, threshold, edges })
}

/// Symmetric binary adjacency with self-loops, stored row-compressed.
///
/// Column indices within each row are sorted and always include the row
/// itself, so every neighborhood `Z_a` is nonempty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl Adjacency {
    /// Builds from undirected edges; self-loops are added for every node.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|a| vec![a]).collect();
        for (a, b) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range for {n} nodes");
            if a != b {
                rows[a].push(b);
                rows[b].push(a);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        Adjacency { n, row_ptr, cols }
    }

    pub fn identity(n: usize) -> Self {
        Adjacency::from_edges(n, std::iter::empty())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Neighborhood `Z_a`, including `a`.
    pub fn neighbors(&self, a: usize) -> &[usize] {
        &self.cols[self.row_ptr[a]..self.row_ptr[a + 1]]
    }

    pub fn degree(&self, a: usize) -> usize {
        self.row_ptr[a + 1] - self.row_ptr[a]
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    /// Flat index of entry `(a, b)` in the compressed storage.
    pub fn position(&self, a: usize, b: usize) -> Option<usize> {
        self.neighbors(a)
            .binary_search(&b)
            .ok()
            .map(|k| self.row_ptr[a] + k)
    }

    /// Iterates `(flat index, row, col)` over stored entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n).flat_map(move |a| {
            (self.row_ptr[a]..self.row_ptr[a + 1]).map(move |k| (k, a, self.cols[k]))
        })
    }

    pub fn to_dense<T: Scalar>(&self) -> Array2<T> {
        let mut m = Array2::zeros((self.n, self.n));
        for (_, a, b) in self.entries() {
            m[[a, b]] = T::one();
        }
        m
    }

    /// Applies a node relabeling: node `a` becomes `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let edges: Vec<_> = self
            .entries()
            .filter(|&(_, a, b)| a < b)
            .map(|(_, a, b)| (perm[a], perm[b]))
            .collect();
        Adjacency::from_edges(self.n, edges)
    }
}

/// The adjacency `S`: 1 where two patients are linked, plus the diagonal.
pub fn to_adjacency(g: &PatientGraph) -> Adjacency {
    Adjacency::from_edges(g.n, g.edges.keys().copied())
}

/// Patient x disease incidence over the cohort universe: entry 1 iff the
/// patient was ever diagnosed with the disease.
pub fn patient_disease_bipartite(cohort: &Cohort) -> Array2<u32> {
    let lists = disease_index_lists(cohort);
    let mut m = Array2::zeros((cohort.len(), cohort.universe.len()));
    for (p, list) in lists.iter().enumerate() {
        for &d in list {
            m[[p, d as usize]] = 1;
        }
    }
    m
}
