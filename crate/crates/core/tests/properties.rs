//! Property tests for the structural invariants of each module.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use comorbinet::analysis::{high_risk_clusters, pair_ratio, progression_pathways};
use comorbinet::cohort::{
    apply_inclusion_rules, code, CodeRanges, Cohort, ExclusionReason, Label, RawRecord, Target,
};
use comorbinet::comorbidity::{build_ddn, build_disease_graph, coco, default_beta, prevalence};
use comorbinet::features::{feature_triple, PatientNetwork};
use comorbinet::model::{
    gaussian_affinity, CgrlConfig, CgrlModel, ForwardOptions, GraphContext,
};
use comorbinet::pagerank::{pagerank, PageRankOptions};
use comorbinet::patient_network::build_patient_graph;
use comorbinet::synth::{generate_synthetic_cohort, GeneratorConfig};
use comorbinet::train::{classification_metrics, cross_entropy_loss, F1Kind};
use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn cohort_from_seed(seed: u64, n: usize, k: usize, p: f64) -> Cohort {
    let mut r = rng(seed);
    Cohort::new(Target::Dm, random_patients(&mut r, n, &pool(k), p)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_cohorts_revalidate_and_reproduce(seed in 0u64..1000, patients in 20usize..120) {
        let cfg = GeneratorConfig { patients, ..GeneratorConfig::profile(Target::Chd) };
        let a = generate_synthetic_cohort(&cfg, seed).unwrap().cohort;
        prop_assert!(a.validate().is_ok());
        let b = generate_synthetic_cohort(&cfg, seed).unwrap().cohort;
        prop_assert_eq!(&a, &b);
        let back: Cohort = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        prop_assert!(back.validate().is_ok());
    }

    #[test]
    fn inclusion_depends_on_order(extra in proptest::collection::vec(0usize..30, 0..4), gap in 1usize..3) {
        let fill: Vec<String> = extra.iter().map(|i| format!("K{:02}", i)).collect();
        let mut adms: Vec<Vec<String>> = vec![vec!["I10".into()]];
        for _ in 1..gap {
            adms.push(fill.clone().into_iter().chain(["M10".to_string()]).collect());
        }
        adms.push(vec!["E11".into()]);
        let forward = RawRecord::from_lists("a", adms.clone()).unwrap();
        adms.reverse();
        let backward = RawRecord::from_lists("b", adms).unwrap();
        let control = RawRecord::from_lists("c", [vec!["I10"], vec!["M10"]]).unwrap();
        let out = apply_inclusion_rules(vec![forward, backward, control], Target::Dm, &CodeRanges::default()).unwrap();
        prop_assert_eq!(out.cohort.len(), 2);
        prop_assert_eq!(out.cohort.patients[0].label, Label::Case);
        prop_assert_eq!(out.excluded_count(ExclusionReason::TargetNotAfterHypertension), 1);
    }

    #[test]
    fn patient_graph_bounds_and_monotone(seed in 0u64..1000, t1 in 1usize..4, dt in 0usize..3) {
        let c = cohort_from_seed(seed, 25, 10, 0.4);
        let sets = c.disease_sets();
        let lo = build_patient_graph(&c, t1).unwrap();
        let hi = build_patient_graph(&c, t1 + dt).unwrap();
        for (&(a, b), &w) in &lo.edges {
            prop_assert!(w >= t1 && w <= sets[a].len().min(sets[b].len()));
        }
        for key in hi.edges.keys() {
            prop_assert!(lo.edges.contains_key(key));
        }
    }

    #[test]
    fn coco_symmetric_and_linear(co in 0usize..50, extra in 0usize..50, pi in 0.01f64..1.0, pj in 0.01f64..1.0, k in 1usize..4) {
        let n = co + extra + 1;
        let b = default_beta::<f64>();
        let x = coco(co, pi, pj, n, b).unwrap();
        prop_assert_eq!(x, coco(co, pj, pi, n, b).unwrap());
        // same rate at k times the population
        let y = coco(co * k, pi, pj, n * k, b).unwrap();
        prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        if co > 0 {
            let half = coco(co, pi, pj, 2 * n, b).unwrap();
            prop_assert!((2.0 * half - x).abs() <= 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn ddn_nonnegative_and_within_union(seed in 0u64..1000) {
        let mut r = rng(seed);
        let codes = pool(9);
        let case = random_patients(&mut r, 15, &codes[..7], 0.5);
        let control = random_patients(&mut r, 15, &codes[2..], 0.3);
        let ddn = build_ddn::<f64>(&case, &control, default_beta(), 0.0, &PageRankOptions::default()).unwrap();
        let union: BTreeSet<_> = case.iter().chain(&control).flat_map(|p| p.diseases()).collect();
        prop_assert!(ddn.nodes.values().all(|&w| w >= 0.0));
        prop_assert!(ddn.edges.values().all(|&w| w > 0.0));
        prop_assert!(ddn.nodes.keys().all(|d| union.contains(d)));
        for d in ddn.nodes.keys() {
            let diff = prevalence::<f64>(&case, d).unwrap() - prevalence::<f64>(&control, d).unwrap();
            prop_assert!((ddn.node_weight(d) - diff.max(0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn disease_graph_duplication_invariant(seed in 0u64..1000) {
        let mut r = rng(seed);
        let pop = random_patients(&mut r, 12, &pool(7), 0.4);
        let twice: Vec<_> = pop.iter().chain(&pop).cloned().collect();
        let a = build_disease_graph::<f64>(&pop, default_beta(), 0.0).unwrap();
        let b = build_disease_graph::<f64>(&twice, default_beta(), 0.0).unwrap();
        prop_assert_eq!(a.nodes, b.nodes);
        prop_assert_eq!(a.edges.len(), b.edges.len());
        for (k, v) in &a.edges {
            prop_assert!((v - b.edges[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_bounds_and_dilution(seed in 0u64..1000, take in 1usize..8) {
        let mut r = rng(seed);
        let codes = pool(8);
        let ddn = random_ddn(&mut r, &codes);
        let set: BTreeSet<_> = codes.iter().take(take).cloned().collect();
        let f = feature_triple(&PatientNetwork::new(set.clone()), &ddn).unwrap();
        let max_n = ddn.nodes.values().cloned().fold(0.0, f64::max);
        let max_e = ddn.edges.values().cloned().fold(0.0, f64::max);
        let max_r = ddn.pagerank.values().cloned().fold(0.0, f64::max);
        prop_assert!(f.f_n <= max_n + 1e-15 && f.f_e <= max_e + 1e-15 && f.f_r <= max_r + 1e-15);
        let mut wider = set;
        wider.insert(code("Z99"));
        let g = feature_triple(&PatientNetwork::new(wider), &ddn).unwrap();
        prop_assert!(g.f_n <= f.f_n && g.f_e <= f.f_e && g.f_r <= f.f_r);
    }

    #[test]
    fn pagerank_scale_free(seed in 0u64..1000, n in 1usize..15, scale in 0.01f64..100.0) {
        let mut r = rng(seed);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if r.random::<f64>() < 0.4 {
                    edges.push((a, b, 0.1 + r.random::<f64>()));
                }
            }
        }
        let opts = PageRankOptions::default();
        let a = pagerank(n, &edges, &opts).unwrap();
        let scaled: Vec<_> = edges.iter().map(|&(x, y, w)| (x, y, w * scale)).collect();
        let b = pagerank(n, &scaled, &opts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kernel_symmetric(seed in 0u64..1000, sigma in 0.1f64..3.0) {
        let mut r = rng(seed);
        let a: Vec<f64> = (0..5).map(|_| r.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..5).map(|_| r.random_range(-2.0..2.0)).collect();
        let w = Array2::from_shape_simple_fn((5, 3), || r.random_range(-1.0..1.0));
        prop_assert_eq!(gaussian_affinity(&a, &b, w.view(), sigma), gaussian_affinity(&b, &a, w.view(), sigma));
    }

    #[test]
    fn delta_rows_convex(seed in 0u64..1000, dropout in 0.0f64..0.6, training in any::<bool>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..12);
        let adj = random_graph(&mut r, n, 0.4);
        let c: Vec<f64> = (0..adj.nnz()).map(|_| r.random_range(-2.0..2.0)).collect();
        let ctx = GraphContext::new(adj, c).unwrap();
        let cfg = CgrlConfig { layers: 2, hidden: 3, heads: 2, dropout, ..Default::default() };
        let model = CgrlModel::<f64>::new(cfg, 3, seed).unwrap();
        let x = Array2::from_shape_simple_fn((n, 3), || r.random_range(-1.0..1.0));
        let opts = ForwardOptions { training, record: true, seed };
        let tr = model.forward(&x, &ctx, opts).unwrap().trace(&ctx).unwrap();
        let rp = ctx.adjacency().row_ptr();
        for head in tr.layers.iter().flatten() {
            for a in 0..n {
                let row = &head.delta[rp[a]..rp[a + 1]];
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permutation_equivariance(seed in 0u64..1000) {
        let mut r = rng(seed);
        let n = r.random_range(2..10);
        let adj = random_graph(&mut r, n, 0.5);
        let c: Vec<f64> = (0..adj.nnz()).map(|_| r.random_range(-2.0..2.0)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let by_pair: BTreeMap<(usize, usize), f64> = adj.entries().map(|(k, a, b)| ((perm[a], perm[b]), c[k])).collect();
        let padj = adj.permuted(&perm);
        let pc: Vec<f64> = padj.entries().map(|(_, a, b)| by_pair[&(a, b)]).collect();
        let ctx = GraphContext::new(adj, c).unwrap();
        let pctx = GraphContext::new(padj, pc).unwrap();
        let cfg = CgrlConfig { layers: 2, hidden: 3, heads: 2, ..Default::default() };
        let model = CgrlModel::<f64>::new(cfg, 4, seed).unwrap();
        let x = Array2::from_shape_simple_fn((n, 4), || r.random_range(-1.0..1.0));
        let mut px = Array2::zeros((n, 4));
        for (a, &pa) in perm.iter().enumerate() {
            px.row_mut(pa).assign(&x.row(a));
        }
        let y = model.forward(&x, &ctx, ForwardOptions::eval()).unwrap().probs;
        let py = model.forward(&px, &pctx, ForwardOptions::eval()).unwrap().probs;
        for a in 0..n {
            for k in 0..2 {
                prop_assert!((y[[a, k]] - py[[perm[a], k]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn metrics_invariant_under_relabeling(pairs in proptest::collection::vec((0usize..2, 0usize..2), 1..60)) {
        let (pred, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let m = classification_metrics(&pred, &truth, F1Kind::Macro).unwrap();
        let flip = |v: &[usize]| v.iter().map(|x| 1 - x).collect::<Vec<_>>();
        let f = classification_metrics(&flip(&pred), &flip(&truth), F1Kind::Macro).unwrap();
        prop_assert_eq!(m.acc, f.acc);
        prop_assert!((m.f1 - f.f1).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&m.f1));
    }

    #[test]
    fn loss_is_additive_over_masks(seed in 0u64..1000, n in 2usize..50) {
        let mut r = rng(seed);
        let mut probs = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            let p: f64 = r.random_range(0.0..1.0);
            probs[[i, 1]] = p;
            probs[[i, 0]] = 1.0 - p;
        }
        let labels: Vec<Label> = (0..n).map(|i| if i % 3 == 0 { Label::Case } else { Label::Control }).collect();
        let cut = r.random_range(1..n);
        let (m1, m2): (Vec<usize>, Vec<usize>) = ((0..cut).collect(), (cut..n).collect());
        let all: Vec<usize> = (0..n).collect();
        let whole = cross_entropy_loss(&probs, &labels, &all).unwrap();
        let parts = (cross_entropy_loss(&probs, &labels, &m1).unwrap() * m1.len() as f64
            + cross_entropy_loss(&probs, &labels, &m2).unwrap() * m2.len() as f64) / n as f64;
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1.0));
    }

    #[test]
    fn pair_ratio_symmetric_and_bounded(seed in 0u64..1000) {
        let mut r = rng(seed);
        let codes = pool(6);
        let group = random_patients(&mut r, 20, &codes, 0.5);
        for a in &codes {
            for b in &codes {
                let x = pair_ratio(&group, a, b).unwrap();
                prop_assert_eq!(x, pair_ratio(&group, b, a).unwrap());
                let bound = prevalence::<f64>(&group, a).unwrap().min(prevalence::<f64>(&group, b).unwrap());
                prop_assert!(x <= bound);
            }
        }
    }

    #[test]
    fn pathway_invariants(seed in 0u64..1000, threshold in 0.0f64..0.8) {
        let cfg = GeneratorConfig { patients: 80, ..GeneratorConfig::profile(Target::Dm) };
        let c = generate_synthetic_cohort(&cfg, seed).unwrap().cohort;
        let idx: Vec<usize> = (0..c.len()).collect();
        let cases = c.select_label(&idx, Label::Case);
        let targets: BTreeSet<_> = [cfg.target_code()].into();
        let g = progression_pathways(&cases, &targets, threshold).unwrap();
        for e in &g.edges {
            prop_assert_eq!(e.highlighted, e.weight > threshold);
            prop_assert!(e.weight > 0.0 && e.weight <= 1.0);
        }
        // every node reaches a target along kept edges
        let mut reach = targets.clone();
        loop {
            let before = reach.len();
            for e in &g.edges {
                if reach.contains(&e.to) {
                    reach.insert(e.from.clone());
                }
            }
            if reach.len() == before {
                break;
            }
        }
        prop_assert!(g.nodes.iter().all(|d| reach.contains(d)));
    }

    #[test]
    fn clusters_are_disjoint(seed in 0u64..1000, cut in 0.0f64..1.0) {
        let mut r = rng(seed);
        let ddn = random_ddn(&mut r, &pool(10));
        let clusters = high_risk_clusters(&ddn.edges, cut);
        let mut seen = BTreeSet::new();
        for cl in &clusters {
            prop_assert!(cl.diseases.len() >= 2);
            for d in &cl.diseases {
                prop_assert!(seen.insert(d.clone()));
            }
        }
        let kept: BTreeSet<_> = ddn.edges.iter().filter(|(_, &w)| w >= cut).flat_map(|((a, b), _)| [a.clone(), b.clone()]).collect();
        prop_assert_eq!(seen, kept);
    }
}
