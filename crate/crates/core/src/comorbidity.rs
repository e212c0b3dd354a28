//! Disease prevalence, the co-occurrence correlation (COCO) network and the
//! differential disease network (DDN) of case-over-control excess.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::cohort::{DiseaseCode, PatientRecord};
use crate::error::{Error, Result};
use crate::pagerank::{pagerank, PageRankOptions};
use crate::scalar::Scalar;

/// Unordered disease pair, stored with `lo < hi`.
pub type DiseasePair = (DiseaseCode, DiseaseCode);

pub fn pair(a: &DiseaseCode, b: &DiseaseCode) -> DiseasePair {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Serializes pair-keyed maps as `[lo, hi, value]` triples (JSON keys must be strings).
pub(crate) mod pair_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer, V: Serialize>(
        m: &BTreeMap<DiseasePair, V>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter().map(|((a, b), v)| (a, b, v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, V: Deserialize<'de>>(
        d: D,
    ) -> Result<BTreeMap<DiseasePair, V>, D::Error> {
        let v: Vec<(DiseaseCode, DiseaseCode, V)> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|(a, b, w)| ((a, b), w)).collect())
    }
}

/// Fraction of `patients` ever diagnosed with `d`.
pub fn prevalence<T: Scalar>(patients: &[PatientRecord], d: &DiseaseCode) -> Result<T> {
    if patients.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let k = patients.iter().filter(|p| p.has(d)).count();
    Ok(T::count(k) / T::count(patients.len()))
}

/// The default COCO scale, `sqrt(2)`.
pub fn default_beta<T: Scalar>() -> T {
    T::lit(2.0).sqrt()
}

/// Co-occurrence correlation of two diseases.
///
/// `co` patients out of `n` carry both diseases; the count is used as the rate
/// `co / n`, so the result is `beta * (co / n) / sqrt(pr_i^2 + pr_j^2)`. The
/// expression is evaluated as `(beta / sqrt 2) * rate / rms(pr_i, pr_j)`, which
/// is algebraically identical and makes the perfect co-occurrence case
/// (`rate = pr_i = pr_j`, `beta = sqrt 2`) come out as exactly one.
pub fn coco<T: Scalar>(co: usize, pr_i: T, pr_j: T, n: usize, beta: T) -> Result<T> {
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    if co > n {
        return Err(Error::ShapeError(format!("co-occurrence count {co} exceeds population {n}")));
    }
    if pr_i == T::zero() && pr_j == T::zero() {
        return Err(Error::UndefinedCorrelation);
    }
    let two = T::lit(2.0);
    let rate = T::count(co) / T::count(n);
    let rms = ((pr_i * pr_i + pr_j * pr_j) / two).sqrt();
    Ok(beta / two.sqrt() * rate / rms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DiseaseGraph<T: Scalar = f64> {
    /// Prevalence per disease.
    pub nodes: BTreeMap<DiseaseCode, T>,
    /// COCO weight per co-occurring pair.
    #[serde(with = "pair_map")]
    pub edges: BTreeMap<DiseasePair, T>,
    pub source_count: usize,
}

impl<T: Scalar> DiseaseGraph<T> {
    pub fn edge(&self, a: &DiseaseCode, b: &DiseaseCode) -> Option<T> {
        self.edges.get(&pair(a, b)).copied()
    }
}

/// Disease graph of a population: a node per diagnosed disease weighted by
/// prevalence, an edge per co-occurring pair with `coco >= min_coco`.
pub fn build_disease_graph<T: Scalar>(
    patients: &[PatientRecord],
    beta: T,
    min_coco: T,
) -> Result<DiseaseGraph<T>> {
    if patients.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let n = patients.len();
    let sets: Vec<Vec<DiseaseCode>> = patients
        .iter()
        .map(|p| p.diseases().into_iter().collect())
        .collect();
    let mut counts: BTreeMap<&DiseaseCode, usize> = BTreeMap::new();
    let mut pair_counts: HashMap<(&DiseaseCode, &DiseaseCode), usize> = HashMap::new();
    for s in &sets {
        for (i, a) in s.iter().enumerate() {
            *counts.entry(a).or_default() += 1;
            for b in &s[i + 1..] {
                *pair_counts.entry((a, b)).or_default() += 1;
            }
        }
    }
    let nf = T::count(n);
    let nodes: BTreeMap<DiseaseCode, T> = counts
        .iter()
        .map(|(c, &k)| ((*c).clone(), T::count(k) / nf))
        .collect();
    let mut edges = BTreeMap::new();
    for ((a, b), co) in pair_counts {
        let w = coco(co, nodes[a], nodes[b], n, beta)?;
        if w > T::zero() && w >= min_coco {
            edges.insert((a.clone(), b.clone()), w);
        }
    }
    Ok(DiseaseGraph {
        nodes,
        edges,
        source_count: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DifferentialNetwork<T: Scalar = f64> {
    /// Excess prevalence `max(0, case - control)`. Diseases kept only as
    /// endpoints of a positive edge carry weight zero.
    pub nodes: BTreeMap<DiseaseCode, T>,
    /// Excess COCO `max(0, case - control)`; only positive entries are stored.
    #[serde(with = "pair_map")]
    pub edges: BTreeMap<DiseasePair, T>,
    pub pagerank: BTreeMap<DiseaseCode, T>,
}

impl<T: Scalar> DifferentialNetwork<T> {
    pub fn node_weight(&self, d: &DiseaseCode) -> T {
        self.nodes.get(d).copied().unwrap_or_else(T::zero)
    }

    pub fn edge_weight(&self, a: &DiseaseCode, b: &DiseaseCode) -> T {
        self.edges.get(&pair(a, b)).copied().unwrap_or_else(T::zero)
    }

    pub fn rank(&self, d: &DiseaseCode) -> T {
        self.pagerank.get(d).copied().unwrap_or_else(T::zero)
    }

    /// Assembles a DDN from node and edge weights and computes its PageRank.
    /// Non-positive weights are dropped; edge endpoints are always nodes.
    pub fn from_weights(
        nodes: impl IntoIterator<Item = (DiseaseCode, T)>,
        edges: impl IntoIterator<Item = (DiseasePair, T)>,
        opts: &PageRankOptions,
    ) -> Result<Self> {
        let mut node_map: BTreeMap<DiseaseCode, T> = nodes
            .into_iter()
            .filter(|(_, w)| *w > T::zero())
            .collect();
        let edge_map: BTreeMap<DiseasePair, T> = edges
            .into_iter()
            .filter(|(_, w)| *w > T::zero())
            .map(|((a, b), w)| (pair(&a, &b), w))
            .collect();
        for (a, b) in edge_map.keys() {
            node_map.entry(a.clone()).or_insert_with(T::zero);
            node_map.entry(b.clone()).or_insert_with(T::zero);
        }
        if node_map.is_empty() {
            return Err(Error::DegenerateDdn);
        }
        let index: BTreeMap<&DiseaseCode, usize> =
            node_map.keys().enumerate().map(|(i, c)| (c, i)).collect();
        let weighted: Vec<(usize, usize, T)> = edge_map
            .iter()
            .map(|((a, b), &w)| (index[a], index[b], w))
            .collect();
        let ranks = pagerank(node_map.len(), &weighted, opts)?;
        let pagerank = node_map.keys().cloned().zip(ranks).collect();
        Ok(DifferentialNetwork {
            nodes: node_map,
            edges: edge_map,
            pagerank,
        })
    }

    pub fn summary(&self, k: usize) -> DdnSummary<T> {
        let mut nodes: Vec<_> = self
            .nodes
            .iter()
            .map(|(c, &w)| DdnNodeSummary {
                code: c.clone(),
                weight: w,
                pagerank: self.rank(c),
            })
            .collect();
        nodes.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap().then(a.code.cmp(&b.code)));
        nodes.truncate(k);
        let mut edges: Vec<_> = self
            .edges
            .iter()
            .map(|((a, b), &w)| (a.clone(), b.clone(), w))
            .collect();
        edges.sort_by(|x, y| y.2.partial_cmp(&x.2).unwrap().then((&x.0, &x.1).cmp(&(&y.0, &y.1))));
        edges.truncate(k);
        DdnSummary {
            node_count: self.nodes.len(),
            edge_count: self.edges.len(),
            top_nodes: nodes,
            top_edges: edges,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DdnNodeSummary<T> {
    pub code: DiseaseCode,
    pub weight: T,
    pub pagerank: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DdnSummary<T> {
    pub node_count: usize,
    pub edge_count: usize,
    pub top_nodes: Vec<DdnNodeSummary<T>>,
    pub top_edges: Vec<(DiseaseCode, DiseaseCode, T)>,
}

/// Builds the DDN from training-portion case and control patients.
pub fn build_ddn<T: Scalar>(
    case_train: &[PatientRecord],
    control_train: &[PatientRecord],
    beta: T,
    min_coco: T,
    opts: &PageRankOptions,
) -> Result<DifferentialNetwork<T>> {
    let case = build_disease_graph(case_train, beta, min_coco)?;
    let control = build_disease_graph(control_train, beta, min_coco)?;
    let diseases: BTreeSet<&DiseaseCode> = case.nodes.keys().chain(control.nodes.keys()).collect();
    let zero = T::zero();
    let node_w = diseases.into_iter().map(|d| {
        let c = case.nodes.get(d).copied().unwrap_or(zero);
        let k = control.nodes.get(d).copied().unwrap_or(zero);
        (d.clone(), (c - k).max(zero))
    });
    let pairs: BTreeSet<&DiseasePair> = case.edges.keys().chain(control.edges.keys()).collect();
    let edge_w = pairs.into_iter().map(|p| {
        let c = case.edges.get(p).copied().unwrap_or(zero);
        let k = control.edges.get(p).copied().unwrap_or(zero);
        (p.clone(), (c - k).max(zero))
    });
    DifferentialNetwork::from_weights(node_w, edge_w, opts)
}
