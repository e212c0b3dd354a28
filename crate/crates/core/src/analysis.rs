//! Case/control comparisons, high-risk disease clusters and progression pathways.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::cohort::{DiseaseCode, PatientRecord};
use crate::comorbidity::DiseasePair;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceRow {
    pub code: DiseaseCode,
    pub case: f64,
    pub control: f64,
    /// `case - control`.
    pub difference: f64,
}

/// Per-disease prevalence in both groups, sorted by descending case
/// prevalence (ties by code).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceComparison {
    pub rows: Vec<PrevalenceRow>,
}

fn counts(group: &[PatientRecord]) -> BTreeMap<DiseaseCode, usize> {
    let mut m = BTreeMap::new();
    for p in group {
        for d in p.diseases() {
            *m.entry(d).or_insert(0) += 1;
        }
    }
    m
}

pub fn compare_prevalence(
    case: &[PatientRecord],
    control: &[PatientRecord],
) -> Result<PrevalenceComparison> {
    if case.is_empty() || control.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let (cc, kc) = (counts(case), counts(control));
    let codes: BTreeSet<&DiseaseCode> = cc.keys().chain(kc.keys()).collect();
    let mut rows: Vec<PrevalenceRow> = codes
        .into_iter()
        .map(|d| {
            let a = cc.get(d).copied().unwrap_or(0) as f64 / case.len() as f64;
            let b = kc.get(d).copied().unwrap_or(0) as f64 / control.len() as f64;
            PrevalenceRow {
                code: d.clone(),
                case: a,
                control: b,
                difference: a - b,
            }
        })
        .collect();
    rows.sort_by(|x, y| y.case.total_cmp(&x.case).then_with(|| x.code.cmp(&y.code)));
    Ok(PrevalenceComparison { rows })
}

impl PrevalenceComparison {
    pub fn get(&self, d: &DiseaseCode) -> Option<&PrevalenceRow> {
        self.rows.iter().find(|r| &r.code == d)
    }

    /// Codes ordered by descending difference, ties by code.
    pub fn by_difference(&self) -> Vec<&PrevalenceRow> {
        let mut v: Vec<_> = self.rows.iter().collect();
        v.sort_by(|x, y| y.difference.total_cmp(&x.difference).then_with(|| x.code.cmp(&y.code)));
        v
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("code,prevalence_case,prevalence_control,difference\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.code, r.case, r.control, r.difference);
        }
        s
    }
}

/// Fraction of `group` diagnosed with both diseases (joint prevalence).
pub fn pair_ratio(group: &[PatientRecord], a: &DiseaseCode, b: &DiseaseCode) -> Result<f64> {
    if group.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let both = group.iter().filter(|p| p.has(a) && p.has(b)).count();
    Ok(both as f64 / group.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseCluster {
    pub diseases: BTreeSet<DiseaseCode>,
    /// Sum of the retained edge weights inside the cluster.
    pub weight: f64,
}

/// Connected components of the subgraph of edges with weight `>= min_weight`,
/// heaviest first; isolated diseases are not reported.
pub fn high_risk_clusters<T: Scalar>(
    edges: &BTreeMap<DiseasePair, T>,
    min_weight: T,
) -> Vec<DiseaseCluster> {
    let kept: Vec<(&DiseasePair, f64)> = edges
        .iter()
        .filter(|(_, &w)| w >= min_weight)
        .map(|(p, &w)| (p, w.to_f64_lossy()))
        .collect();
    let nodes: Vec<&DiseaseCode> = kept
        .iter()
        .flat_map(|((a, b), _)| [a, b])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index = |d: &DiseaseCode| nodes.binary_search(&d).expect("endpoint listed");
    let mut uf = UnionFind::<usize>::new(nodes.len());
    for ((a, b), _) in &kept {
        uf.union(index(a), index(b));
    }
    let mut groups: BTreeMap<usize, DiseaseCluster> = BTreeMap::new();
    for (i, d) in nodes.iter().enumerate() {
        groups
            .entry(uf.find(i))
            .or_insert_with(|| DiseaseCluster {
                diseases: BTreeSet::new(),
                weight: 0.0,
            })
            .diseases
            .insert((*d).clone());
    }
    for ((a, _), w) in &kept {
        groups.get_mut(&uf.find(index(a))).expect("root present").weight += w;
    }
    let mut out: Vec<DiseaseCluster> = groups.into_values().collect();
    out.sort_by(|x, y| {
        y.weight
            .total_cmp(&x.weight)
            .then_with(|| x.diseases.iter().next().cmp(&y.diseases.iter().next()))
    });
    out
}

/// `q`-quantile (nearest rank, `q` in `[0, 1]`) of the edge weights; `None` for no edges.
pub fn weight_quantile<T: Scalar>(edges: &BTreeMap<DiseasePair, T>, q: f64) -> Option<T> {
    let mut w: Vec<T> = edges.values().copied().collect();
    if w.is_empty() {
        return None;
    }
    w.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    let rank = ((q.clamp(0.0, 1.0) * w.len() as f64).ceil() as usize).clamp(1, w.len());
    Some(w[rank - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayEdge {
    pub from: DiseaseCode,
    pub to: DiseaseCode,
    /// Estimated `P(to at a later admission | from diagnosed)`.
    pub weight: f64,
    /// Patients whose `to` diagnosis follows their first `from` admission.
    pub count: usize,
    /// Patients carrying `from`.
    pub support: usize,
    pub highlighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayGraph {
    pub targets: BTreeSet<DiseaseCode>,
    pub threshold: f64,
    pub nodes: BTreeSet<DiseaseCode>,
    pub edges: Vec<PathwayEdge>,
}

/// Directed progression graph over `group`. An edge `a -> b` carries the share
/// of patients with `a` whose `b` appears at an admission strictly after the
/// first one carrying `a`. Only diseases with a directed path to a target are
/// kept; edges heavier than `threshold` are highlighted.
pub fn progression_pathways(
    group: &[PatientRecord],
    targets: &BTreeSet<DiseaseCode>,
    threshold: f64,
) -> Result<PathwayGraph> {
    if !group.iter().any(|p| targets.iter().any(|t| p.has(t))) {
        return Err(Error::NoTargetReached);
    }
    let mut support: BTreeMap<DiseaseCode, usize> = BTreeMap::new();
    let mut follow: BTreeMap<(DiseaseCode, DiseaseCode), usize> = BTreeMap::new();
    for p in group {
        let mut first: BTreeMap<&DiseaseCode, usize> = BTreeMap::new();
        let mut last: BTreeMap<&DiseaseCode, usize> = BTreeMap::new();
        for (i, adm) in p.admissions.iter().enumerate() {
            for c in &adm.codes {
                first.entry(c).or_insert(i);
                last.insert(c, i);
            }
        }
        for (&a, &fa) in &first {
            *support.entry(a.clone()).or_insert(0) += 1;
            for (&b, &lb) in &last {
                if a != b && lb > fa {
                    *follow.entry((a.clone(), b.clone())).or_insert(0) += 1;
                }
            }
        }
    }

    // reverse reachability from the targets
    let mut preds: BTreeMap<&DiseaseCode, Vec<&DiseaseCode>> = BTreeMap::new();
    for (a, b) in follow.keys() {
        preds.entry(b).or_default().push(a);
    }
    let mut keep: BTreeSet<DiseaseCode> = targets
        .iter()
        .filter(|t| support.contains_key(*t))
        .cloned()
        .collect();
    let mut stack: Vec<DiseaseCode> = keep.iter().cloned().collect();
    while let Some(d) = stack.pop() {
        for &p in preds.get(&d).map(Vec::as_slice).unwrap_or(&[]) {
            if keep.insert(p.clone()) {
                stack.push(p.clone());
            }
        }
    }
    let edges = follow
        .into_iter()
        .filter(|((a, b), _)| keep.contains(a) && keep.contains(b))
        .map(|((a, b), count)| {
            let s = support[&a];
            let weight = count as f64 / s as f64;
            PathwayEdge {
                from: a,
                to: b,
                weight,
                count,
                support: s,
                highlighted: weight > threshold,
            }
        })
        .collect();
    Ok(PathwayGraph {
        targets: targets.clone(),
        threshold,
        nodes: keep,
        edges,
    })
}

impl PathwayGraph {
    pub fn edge(&self, from: &DiseaseCode, to: &DiseaseCode) -> Option<&PathwayEdge> {
        self.edges.iter().find(|e| &e.from == from && &e.to == to)
    }

    pub fn highlighted(&self) -> impl Iterator<Item = &PathwayEdge> {
        self.edges.iter().filter(|e| e.highlighted)
    }

    /// Graphviz digraph; highlighted edges are bold and red, targets double-circled.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph pathways {\n  rankdir=LR;\n");
        for n in &self.nodes {
            let shape = if self.targets.contains(n) { "doublecircle" } else { "ellipse" };
            let _ = writeln!(s, "  \"{n}\" [shape={shape}];");
        }
        for e in &self.edges {
            let style = if e.highlighted {
                ", color=red, penwidth=2.5"
            } else {
                ", color=gray60"
            };
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [label=\"{:.2}\"{style}];",
                e.from, e.to, e.weight
            );
        }
        s.push_str("}\n");
        s
    }
}
