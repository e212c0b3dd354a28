//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use comorbinet::cohort::{code, Admission, DiseaseCode, Label, PatientRecord};
use comorbinet::comorbidity::DifferentialNetwork;
use comorbinet::model::{CgrlConfig, CgrlModel, GraphContext};
use comorbinet::pagerank::PageRankOptions;
use comorbinet::patient_network::Adjacency;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `A00`, `A01`, ... as a code pool of size `k`.
pub fn pool(k: usize) -> Vec<DiseaseCode> {
    (0..k).map(|i| code(&format!("{}{:02}", (b'A' + (i / 100) as u8) as char, i % 100))).collect()
}

pub fn patient(id: usize, label: Label, adms: &[&[&str]]) -> PatientRecord {
    PatientRecord {
        id: format!("p{id}"),
        label,
        admissions: adms
            .iter()
            .enumerate()
            .map(|(i, a)| Admission {
                seq: i + 1,
                codes: a.iter().map(|c| code(c)).collect(),
            })
            .collect(),
    }
}

/// Patients with a random nonempty disease set drawn from `pool`, spread
/// over one or two admissions.
pub fn random_patients(r: &mut ChaCha8Rng, n: usize, pool: &[DiseaseCode], p: f64) -> Vec<PatientRecord> {
    (0..n)
        .map(|i| {
            let mut set: Vec<DiseaseCode> = pool.iter().filter(|_| r.random::<f64>() < p).cloned().collect();
            if set.is_empty() {
                set.push(pool[r.random_range(0..pool.len())].clone());
            }
            let split = r.random_range(0..=set.len());
            let mut adms = vec![Admission {
                seq: 1,
                codes: set[..split.max(1)].iter().cloned().collect(),
            }];
            if split.max(1) < set.len() {
                adms.push(Admission {
                    seq: 2,
                    codes: set[split.max(1)..].iter().cloned().collect(),
                });
            }
            PatientRecord {
                id: format!("r{i}"),
                label: if i % 2 == 0 { Label::Case } else { Label::Control },
                admissions: adms,
            }
        })
        .collect()
}

/// Pairwise COCO by direct enumeration: `beta * (co / n) / sqrt(pr_i^2 + pr_j^2)`.
pub fn coco_brute(patients: &[PatientRecord], a: &DiseaseCode, b: &DiseaseCode, beta: f64) -> f64 {
    let n = patients.len() as f64;
    let has = |p: &PatientRecord, d: &DiseaseCode| p.admissions.iter().any(|x| x.codes.contains(d));
    let ca = patients.iter().filter(|p| has(p, a)).count() as f64;
    let cb = patients.iter().filter(|p| has(p, b)).count() as f64;
    let co = patients.iter().filter(|p| has(p, a) && has(p, b)).count() as f64;
    let (pa, pb) = (ca / n, cb / n);
    beta * (co / n) / (pa * pa + pb * pb).sqrt()
}

/// Dense damped power iteration with uniform redistribution of dangling mass.
pub fn pagerank_dense(n: usize, edges: &[(usize, usize, f64)], damping: f64) -> Vec<f64> {
    let mut w = vec![vec![0.0; n]; n];
    for &(a, b, x) in edges {
        w[a][b] += x;
        if a != b {
            w[b][a] += x;
        }
    }
    let out: Vec<f64> = w.iter().map(|row| row.iter().sum()).collect();
    let mut r = vec![1.0 / n as f64; n];
    for _ in 0..10_000 {
        let mut next = vec![0.0; n];
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += if out[i] > 0.0 { r[i] * w[i][j] / out[i] } else { r[i] / n as f64 };
            }
            next[j] = (1.0 - damping) / n as f64 + damping * s;
        }
        let delta: f64 = r.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        r = next;
        if delta < 1e-15 {
            break;
        }
    }
    r
}

pub fn random_ddn(r: &mut ChaCha8Rng, pool: &[DiseaseCode]) -> DifferentialNetwork<f64> {
    let mut nodes: Vec<(DiseaseCode, f64)> = Vec::new();
    for c in pool {
        if r.random::<f64>() < 0.6 {
            nodes.push((c.clone(), r.random::<f64>()));
        }
    }
    let mut edges = Vec::new();
    for (i, a) in pool.iter().enumerate() {
        for b in &pool[i + 1..] {
            if r.random::<f64>() < 0.3 {
                edges.push(((a.clone(), b.clone()), r.random::<f64>()));
            }
        }
    }
    if nodes.is_empty() && edges.is_empty() {
        edges.push(((pool[0].clone(), pool[1].clone()), 0.5));
    }
    DifferentialNetwork::from_weights(nodes, edges, &PageRankOptions::default()).unwrap()
}

/// Scores by explicit double loops over the disease set.
pub fn feature_brute(set: &BTreeSet<DiseaseCode>, ddn: &DifferentialNetwork<f64>) -> [f64; 3] {
    let v: Vec<&DiseaseCode> = set.iter().collect();
    let m = v.len() as f64;
    let f_n = v.iter().map(|d| ddn.nodes.get(*d).copied().unwrap_or(0.0)).sum::<f64>() / m;
    let f_r = v.iter().map(|d| ddn.pagerank.get(*d).copied().unwrap_or(0.0)).sum::<f64>() / m;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..v.len() {
        for j in 0..v.len() {
            if i < j {
                let key = if v[i] < v[j] { (v[i].clone(), v[j].clone()) } else { (v[j].clone(), v[i].clone()) };
                total += ddn.edges.get(&key).copied().unwrap_or(0.0);
                pairs += 1;
            }
        }
    }
    let f_e = if pairs == 0 { 0.0 } else { total / pairs as f64 };
    [f_n, f_e, f_r]
}

/// Six-node toy graph with a fixed non-uniform intervention.
pub fn toy_graph() -> GraphContext<f64> {
    let adj = Adjacency::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 5), (2, 5)]);
    let c: Vec<f64> = (0..adj.nnz()).map(|k| (k as f64 * 0.37).sin()).collect();
    GraphContext::new(adj, c).unwrap()
}

pub fn toy_model(ablate: bool, dropout: f64, seed: u64) -> (CgrlModel<f64>, Array2<f64>) {
    let cfg = CgrlConfig {
        layers: 2,
        hidden: 3,
        heads: 2,
        dropout,
        feature_attention_only: ablate,
        ..Default::default()
    };
    let mut model = CgrlModel::new(cfg, 4, seed).unwrap();
    for l in &mut model.params.layers {
        for (i, h) in l.heads.iter_mut().enumerate() {
            h.s_o = 0.3 * i as f64 - 0.1;
            h.s_t = 0.2;
            h.eps_logit = -0.4 + 0.5 * i as f64;
            h.log_sigma = 0.1 * i as f64;
        }
    }
    let x = Array2::from_shape_fn((6, 4), |(i, j)| ((i * 4 + j) as f64 * 0.71).cos());
    (model, x)
}

/// Random connected-ish graph on `n` nodes with edge probability `p`.
pub fn random_graph(r: &mut ChaCha8Rng, n: usize, p: f64) -> Adjacency {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if r.random::<f64>() < p {
                edges.push((a, b));
            }
        }
    }
    Adjacency::from_edges(n, edges)
}

/// Plain batch-gradient logistic regression with an intercept, fitted on
/// `train` rows and scored as accuracy on `test` rows.
pub fn logistic_accuracy(x: &[[f64; 3]], y: &[usize], train: &[usize], test: &[usize]) -> f64 {
    let mut mean = [0.0; 3];
    let mut sd = [0.0; 3];
    for &i in train {
        for k in 0..3 {
            mean[k] += x[i][k] / train.len() as f64;
        }
    }
    for &i in train {
        for k in 0..3 {
            sd[k] += (x[i][k] - mean[k]).powi(2) / train.len() as f64;
        }
    }
    let z = |i: usize| -> [f64; 3] {
        let mut v = [0.0; 3];
        for k in 0..3 {
            v[k] = if sd[k] > 0.0 { (x[i][k] - mean[k]) / sd[k].sqrt() } else { 0.0 };
        }
        v
    };
    let mut w = [0.0; 4];
    for _ in 0..3000 {
        let mut g = [0.0; 4];
        for &i in train {
            let v = z(i);
            let s = w[3] + (0..3).map(|k| w[k] * v[k]).sum::<f64>();
            let p = 1.0 / (1.0 + (-s).exp());
            let e = p - y[i] as f64;
            for k in 0..3 {
                g[k] += e * v[k];
            }
            g[3] += e;
        }
        for k in 0..4 {
            w[k] -= 0.5 * g[k] / train.len() as f64;
        }
    }
    let correct = test
        .iter()
        .filter(|&&i| {
            let v = z(i);
            let s = w[3] + (0..3).map(|k| w[k] * v[k]).sum::<f64>();
            usize::from(s > 0.0) == y[i]
        })
        .count();
    correct as f64 / test.len() as f64
}

pub fn pair_key(a: &DiseaseCode, b: &DiseaseCode) -> (DiseaseCode, DiseaseCode) {
    if a < b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

pub fn count_map<K: Ord + Clone>(items: impl IntoIterator<Item = K>) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for k in items {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}
