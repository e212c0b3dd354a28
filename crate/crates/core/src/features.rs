//! Per-patient differential-network features and the model input matrix.
//!
//! A patient's own network (PN) is the complete graph over the diseases they
//! were ever diagnosed with. Three scores compare it with the DDN:
//!
//! * node score: mean DDN node weight over the PN's diseases,
//! * edge score: mean DDN edge weight over the PN's disease pairs,
//! * rank score: mean DDN PageRank over the PN's diseases.
//!
//! Diseases or pairs absent from the DDN contribute zero.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, DiseaseCode};
use crate::comorbidity::DifferentialNetwork;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientNetwork {
    pub nodes: BTreeSet<DiseaseCode>,
}

impl PatientNetwork {
    pub fn new(nodes: BTreeSet<DiseaseCode>) -> Self {
        PatientNetwork { nodes }
    }

    pub fn edge_count(&self) -> usize {
        let m = self.nodes.len();
        m * m.saturating_sub(1) / 2
    }

    /// All unordered disease pairs, each once.
    pub fn edges(&self) -> impl Iterator<Item = (&DiseaseCode, &DiseaseCode)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .flat_map(move |(i, a)| self.nodes.iter().skip(i + 1).map(move |b| (a, b)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureTriple<T> {
    pub f_n: T,
    pub f_e: T,
    pub f_r: T,
}

impl<T: Copy> FeatureTriple<T> {
    pub fn as_array(&self) -> [T; 3] {
        [self.f_n, self.f_e, self.f_r]
    }
}

pub fn node_score<T: Scalar>(pn: &PatientNetwork, ddn: &DifferentialNetwork<T>) -> Result<T> {
    if pn.nodes.is_empty() {
        return Err(Error::EmptyPatientNetwork);
    }
    let total: T = pn.nodes.iter().map(|d| ddn.node_weight(d)).sum();
    Ok(total / T::count(pn.nodes.len()))
}

/// Zero for networks with fewer than two diseases.
pub fn edge_score<T: Scalar>(pn: &PatientNetwork, ddn: &DifferentialNetwork<T>) -> T {
    let te = pn.edge_count();
    if te == 0 {
        return T::zero();
    }
    let total: T = pn.edges().map(|(a, b)| ddn.edge_weight(a, b)).sum();
    total / T::count(te)
}

pub fn rank_score<T: Scalar>(pn: &PatientNetwork, ddn: &DifferentialNetwork<T>) -> Result<T> {
    if pn.nodes.is_empty() {
        return Err(Error::EmptyPatientNetwork);
    }
    let total: T = pn.nodes.iter().map(|d| ddn.rank(d)).sum();
    Ok(total / T::count(pn.nodes.len()))
}

pub fn feature_triple<T: Scalar>(
    pn: &PatientNetwork,
    ddn: &DifferentialNetwork<T>,
) -> Result<FeatureTriple<T>> {
    Ok(FeatureTriple {
        f_n: node_score(pn, ddn)?,
        f_e: edge_score(pn, ddn),
        f_r: rank_score(pn, ddn)?,
    })
}

/// Mean and population standard deviation of the three network features,
/// measured on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization<T> {
    pub mean: [T; 3],
    pub std: [T; 3],
}

impl<T: Scalar> Standardization<T> {
    pub fn fit(rows: &[FeatureTriple<T>], train_idx: &[usize]) -> Result<Self> {
        if train_idx.is_empty() {
            return Err(Error::EmptyMask);
        }
        let n = T::count(train_idx.len());
        let mut mean = [T::zero(); 3];
        for &i in train_idx {
            for (m, v) in mean.iter_mut().zip(rows[i].as_array()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = [T::zero(); 3];
        for &i in train_idx {
            for ((s, v), m) in std.iter_mut().zip(rows[i].as_array()).zip(mean) {
                *s += (v - m) * (v - m);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / n).sqrt());
        Ok(Standardization { mean, std })
    }

    /// Standardizes one value; zero-variance columns map to zero.
    pub fn apply(&self, col: usize, v: T) -> T {
        let s = self.std[col];
        if s > T::zero() {
            (v - self.mean[col]) / s
        } else {
            T::zero()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix<T> {
    /// `Z x (|universe| + 3)`: multi-hot diseases then standardized F_n, F_e, F_r.
    pub x: Array2<T>,
    pub columns: Vec<String>,
    pub raw: Vec<FeatureTriple<T>>,
    pub standardization: Standardization<T>,
}

/// Builds the input matrix. Standardization statistics come from `train_idx` rows only.
pub fn feature_matrix<T: Scalar>(
    cohort: &Cohort,
    ddn: &DifferentialNetwork<T>,
    train_idx: &[usize],
) -> Result<FeatureMatrix<T>> {
    let sets = cohort.disease_sets();
    let raw = sets
        .iter()
        .map(|s| feature_triple(&PatientNetwork::new(s.clone()), ddn))
        .collect::<Result<Vec<_>>>()?;
    let standardization = Standardization::fit(&raw, train_idx)?;
    for (k, name) in ["f_n", "f_e", "f_r"].iter().enumerate() {
        if standardization.std[k] <= T::zero() {
            log::warn!("feature {name} has zero variance on training rows; standardized to 0");
        }
    }
    let d = cohort.universe.len();
    let mut x = Array2::zeros((cohort.len(), d + 3));
    for (i, s) in sets.iter().enumerate() {
        for c in s {
            let j = cohort
                .universe
                .binary_search(c)
                .expect("cohort universe covers every code");
            x[[i, j]] = T::one();
        }
        for (k, v) in raw[i].as_array().into_iter().enumerate() {
            x[[i, d + k]] = standardization.apply(k, v);
        }
    }
    let columns = cohort
        .universe
        .iter()
        .map(|c| c.to_string())
        .chain(["f_n", "f_e", "f_r"].map(String::from))
        .collect();
    Ok(FeatureMatrix {
        x,
        columns,
        raw,
        standardization,
    })
}

impl<T: Scalar> FeatureMatrix<T> {
    /// CSV with header `id,label,<columns...>`.
    pub fn to_csv(&self, cohort: &Cohort) -> String {
        let mut out = String::from("id,label");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, p) in cohort.patients.iter().enumerate() {
            out.push_str(&p.id);
            out.push(',');
            out.push_str(&p.label.to_string());
            for v in self.x.row(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}
