//! Worked examples checked against independent recomputations.

mod common;

use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use comorbinet::analysis::{compare_prevalence, high_risk_clusters, pair_ratio, weight_quantile};
use comorbinet::cohort::{code, CodeRanges, Cohort, Label, PatientRecord, Target};
use comorbinet::comorbidity::{build_ddn, coco, default_beta, prevalence};
use comorbinet::features::{edge_score, feature_matrix, node_score, rank_score, PatientNetwork};
use comorbinet::model::{
    fit_structural_intervention, gaussian_affinity, layer_forward, predict, structure_attention,
    CgrlConfig, CgrlModel, GraphContext, StructuralFitOptions,
};
use comorbinet::pagerank::{pagerank, PageRankOptions};
use comorbinet::patient_network::{build_patient_graph, patient_disease_bipartite, Adjacency};
use comorbinet::synth::{generate_synthetic_cohort, GeneratorConfig};
use comorbinet::train::{
    classification_metrics, cross_entropy_loss, prepare_run, stratified_split, ExperimentConfig,
    F1Kind, SplitRatios,
};
use common::*;
use ndarray::{arr1, arr2, Array2};
use rand::Rng;

fn dm_cohort(seed: u64) -> (GeneratorConfig, Cohort) {
    let g = GeneratorConfig::profile(Target::Dm);
    let c = generate_synthetic_cohort(&g, seed).unwrap().cohort;
    (g, c)
}

fn groups(c: &Cohort) -> (Vec<PatientRecord>, Vec<PatientRecord>) {
    let all: Vec<usize> = (0..c.len()).collect();
    (c.select_label(&all, Label::Case), c.select_label(&all, Label::Control))
}

#[test]
fn generated_planted_prevalence() {
    let (g, c) = dm_cohort(1);
    let (case, control) = groups(&c);
    let i25 = code("I25");
    let pc: f64 = prevalence(&case, &i25).unwrap();
    let pk: f64 = prevalence(&control, &i25).unwrap();
    assert!(pc > pk);
    // three standard errors around the planted rate
    let se = (g.p_case * (1.0 - g.p_case) / case.len() as f64).sqrt();
    assert!((pc - g.p_case).abs() < 3.0 * se, "case prevalence {pc}");
    let counted = case.iter().filter(|p| p.admissions.iter().any(|a| a.codes.contains(&i25))).count();
    assert_eq!(pc, counted as f64 / case.len() as f64);
}

#[test]
fn patient_graph_matches_intersections() {
    let mut r = rng(11);
    let codes = pool(8);
    for _ in 0..10 {
        let patients = random_patients(&mut r, 20, &codes, 0.4);
        let cohort = Cohort::new(Target::Dm, patients).unwrap();
        let sets = cohort.disease_sets();
        for theta in 1..4 {
            let g = build_patient_graph(&cohort, theta).unwrap();
            for a in 0..20 {
                for b in a + 1..20 {
                    let shared = sets[a].intersection(&sets[b]).count();
                    let want = (shared >= theta).then_some(shared);
                    assert_eq!(g.weight(a, b), want);
                    assert_eq!(g.weight(b, a), want);
                }
            }
        }
        let inc = patient_disease_bipartite(&cohort);
        let gram = inc.dot(&inc.t());
        let g1 = build_patient_graph(&cohort, 1).unwrap();
        for a in 0..20 {
            for b in 0..20 {
                if a != b {
                    assert_eq!(g1.weight(a, b).unwrap_or(0), gram[[a, b]] as usize);
                }
            }
        }
    }
}

#[test]
fn coco_worked_value() {
    let v: f64 = coco(3, 0.4, 0.5, 10, default_beta()).unwrap();
    assert_abs_diff_eq!(v, 2f64.sqrt() * 0.3 / 0.41f64.sqrt(), epsilon = 1e-15);
    assert_abs_diff_eq!(v, 0.6626, epsilon = 1e-4);
}

#[test]
fn planted_codes_lead_the_ddn() {
    let (g, c) = dm_cohort(2);
    let (case, control) = groups(&c);
    let ddn = build_ddn::<f64>(&case, &control, default_beta(), 0.0, &PageRankOptions::default()).unwrap();
    let top: BTreeSet<_> = ddn.summary(6).top_nodes.into_iter().map(|n| n.code).collect();
    for p in &g.planted {
        assert!(top.contains(p), "{p} missing from {top:?}");
    }
}

#[test]
fn pagerank_five_nodes() {
    let edges = [(0, 1, 1.0), (1, 2, 2.5), (2, 3, 0.5), (3, 4, 4.0), (0, 4, 1.5), (1, 3, 0.25)];
    let got = pagerank(5, &edges, &PageRankOptions::default()).unwrap();
    let want = pagerank_dense(5, &edges, 0.85);
    for (g, w) in got.iter().zip(&want) {
        assert_abs_diff_eq!(g, w, epsilon = 1e-8);
    }
}

#[test]
fn feature_scores_match_sums() {
    let mut r = rng(12);
    let codes = pool(10);
    for _ in 0..50 {
        let ddn = random_ddn(&mut r, &codes);
        let set: BTreeSet<_> = codes.iter().take(r.random_range(1..=10)).cloned().collect();
        let pn = PatientNetwork::new(set.clone());
        let want = feature_brute(&set, &ddn);
        assert_abs_diff_eq!(node_score(&pn, &ddn).unwrap(), want[0], epsilon = 1e-12);
        assert_abs_diff_eq!(edge_score(&pn, &ddn), want[1], epsilon = 1e-12);
        assert_abs_diff_eq!(rank_score(&pn, &ddn).unwrap(), want[2], epsilon = 1e-12);
    }
    let ddn = random_ddn(&mut r, &codes);
    let four = PatientNetwork::new(codes[..4].iter().cloned().collect());
    let mut total = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            total += ddn.edge_weight(&codes[i], &codes[j]);
        }
    }
    assert_abs_diff_eq!(edge_score(&four, &ddn), total / 6.0, epsilon = 1e-12);
}

#[test]
fn standardized_train_columns_are_centred() {
    let (_, c) = dm_cohort(3);
    let predictor = c.predictor_view(&CodeRanges::default()).unwrap();
    let cfg = ExperimentConfig::default();
    let (split, _, fm) = prepare_run::<f64>(&predictor, &cfg, 5).unwrap();
    let d = fm.x.ncols();
    for k in d - 3..d {
        let mean = split.train.iter().map(|&i| fm.x[[i, k]]).sum::<f64>() / split.train.len() as f64;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-9);
    }
    // same matrix from the public builder with the same training rows
    let ddn = build_ddn::<f64>(
        &predictor.select_label(&split.train, Label::Case),
        &predictor.select_label(&split.train, Label::Control),
        default_beta(),
        0.0,
        &PageRankOptions::default(),
    )
    .unwrap();
    assert_eq!(feature_matrix(&predictor, &ddn, &split.train).unwrap(), fm);
}

#[test]
fn structural_fit_on_identity() {
    for k in [1, 3, 8] {
        let adj = Adjacency::identity(6);
        let opts = StructuralFitOptions {
            rank: k,
            iters: 500,
            ..Default::default()
        };
        let fit = fit_structural_intervention::<f64>(&adj, &opts).unwrap();
        for &c in &fit.c {
            assert!((c - 1.0).abs() < 1e-2, "rank {k}: C_aa = {c}");
        }
        assert!(fit.objective.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn kernel_formula() {
    let mut r = rng(13);
    for _ in 0..20 {
        let a: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let w = Array2::from_shape_simple_fn((4, 3), || r.random_range(-1.0..1.0));
        let sigma = 0.5;
        let mut d2 = 0.0;
        for j in 0..3 {
            let pa: f64 = (0..4).map(|i| a[i] * w[[i, j]]).sum();
            let pb: f64 = (0..4).map(|i| b[i] * w[[i, j]]).sum();
            d2 += (pa - pb) * (pa - pb);
        }
        let want = (-d2 / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
        assert_abs_diff_eq!(gaussian_affinity(&a, &b, w.view(), sigma), want, epsilon = 1e-12);
    }
}

#[test]
fn structure_rows_normalize() {
    let mut r = rng(14);
    for _ in 0..50 {
        let c: Vec<f64> = (0..r.random_range(1..30)).map(|_| r.random_range(-50.0..50.0)).collect();
        let t = structure_attention(&c);
        assert_abs_diff_eq!(t.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(t.iter().all(|&v| v >= 0.0));
    }
}

/// Dense evaluation of one layer: `(delta + eps / |Z| I) P` per head.
#[test]
fn layer_matches_dense_evaluation() {
    let adj = Adjacency::from_edges(4, [(0, 1), (1, 2), (1, 3)]);
    let c = vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.7, 0.2, 0.0, 0.9, -0.6];
    let ctx = GraphContext::new(adj.clone(), c.clone()).unwrap();
    let cfg = CgrlConfig {
        layers: 2,
        hidden: 2,
        heads: 2,
        ..Default::default()
    };
    let mut model = CgrlModel::<f64>::new(cfg, 3, 21).unwrap();
    for (l, layer) in model.params.layers.iter_mut().enumerate() {
        for (h, hp) in layer.heads.iter_mut().enumerate() {
            hp.s_o = 0.4 - 0.3 * h as f64;
            hp.s_t = -0.1 * l as f64;
            hp.eps_logit = 0.2 + 0.3 * h as f64;
            hp.log_sigma = -0.2 + 0.25 * (l + h) as f64;
        }
    }
    let x = arr2(&[[0.5, -1.0, 0.2], [0.1, 0.4, -0.7], [-0.3, 0.9, 0.6], [1.2, -0.5, 0.0]]);
    let mask = adj.to_dense::<f64>();
    let mut h = x.clone();
    for (l, lp) in model.params.layers.iter().enumerate() {
        let last = l == 1;
        let (got, _) = layer_forward(&h, &ctx, lp, last, false, None).unwrap();
        let mut heads = Vec::new();
        for hp in &lp.heads {
            let p = h.dot(&hp.w);
            let sigma = hp.log_sigma.exp();
            let r_o = 1.0 / (1.0 + (hp.s_t - hp.s_o).exp());
            let eps = 1.0 / (1.0 + (-hp.eps_logit).exp());
            let mut cm = Array2::<f64>::zeros((4, 4));
            for (k, (_, a, b)) in adj.entries().enumerate() {
                cm[[a, b]] = c[k];
            }
            let mut coef = Array2::<f64>::zeros((4, 4));
            for a in 0..4 {
                let deg: f64 = mask.row(a).sum();
                let (mut zo, mut zt) = (0.0, 0.0);
                for b in 0..4 {
                    if mask[[a, b]] > 0.0 {
                        let d2: f64 = (0..p.ncols()).map(|j| (p[[a, j]] - p[[b, j]]).powi(2)).sum();
                        let g = (-d2 / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
                        zo += g.exp();
                        zt += cm[[a, b]].exp();
                    }
                }
                for b in 0..4 {
                    if mask[[a, b]] > 0.0 {
                        let d2: f64 = (0..p.ncols()).map(|j| (p[[a, j]] - p[[b, j]]).powi(2)).sum();
                        let g = (-d2 / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
                        coef[[a, b]] = r_o * g.exp() / zo + (1.0 - r_o) * cm[[a, b]].exp() / zt;
                    }
                }
                coef[[a, a]] += eps / deg;
            }
            heads.push(coef.dot(&p));
        }
        let want = if last {
            (&heads[0] + &heads[1]) / 2.0
        } else {
            ndarray::concatenate![ndarray::Axis(1), heads[0], heads[1]].mapv(|v: f64| if v > 0.0 { v } else { v.exp() - 1.0 })
        };
        for (g, w) in got.iter().zip(want.iter()) {
            assert_abs_diff_eq!(g, w, epsilon = 1e-10);
        }
        h = got;
    }
}

#[test]
fn softmax_head_value() {
    let p = predict(&arr2(&[[1.0f64]]), &arr2(&[[2.0, 0.0]]), &arr1(&[0.0, 0.0]));
    assert_abs_diff_eq!(p[[0, 0]], 0.8808, epsilon = 1e-4);
    assert_abs_diff_eq!(p[[0, 1]], 0.1192, epsilon = 1e-4);
    assert_abs_diff_eq!(p[[0, 0]], 1.0 / (1.0 + (-2f64).exp()), epsilon = 1e-15);
}

#[test]
fn split_of_1024() {
    let (_, c) = dm_cohort(4);
    let s = stratified_split(&c.labels(), &SplitRatios::default(), 0).unwrap();
    let [a, b, d] = s.sizes();
    assert_eq!(a + b + d, 1024);
    assert!((614..=615).contains(&a) && (204..=205).contains(&b) && (204..=205).contains(&d));
}

#[test]
fn loss_matches_scalar_sum() {
    let mut r = rng(15);
    for _ in 0..20 {
        let n = r.random_range(1..40);
        let mut probs = Array2::<f64>::zeros((n, 2));
        let labels: Vec<Label> = (0..n).map(|_| if r.random::<bool>() { Label::Case } else { Label::Control }).collect();
        for i in 0..n {
            let p: f64 = r.random_range(0.001..0.999);
            probs[[i, 1]] = p;
            probs[[i, 0]] = 1.0 - p;
        }
        let mask: Vec<usize> = (0..n).filter(|_| r.random::<f64>() < 0.7).collect();
        if mask.is_empty() {
            continue;
        }
        let mut total = 0.0;
        for &i in &mask {
            let y = if labels[i] == Label::Case { 1.0 } else { 0.0 };
            let p = probs[[i, 1]];
            total += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        }
        assert_abs_diff_eq!(cross_entropy_loss(&probs, &labels, &mask).unwrap(), total / mask.len() as f64, epsilon = 1e-12);
    }
}

#[test]
fn confusion_counts() {
    let truth = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
    let pred = [1, 1, 1, 0, 0, 1, 0, 0, 0, 0];
    let m = classification_metrics(&pred, &truth, F1Kind::Macro).unwrap();
    assert_abs_diff_eq!(m.acc, 0.7, epsilon = 1e-15);
    assert_abs_diff_eq!(m.f1, 0.6970, epsilon = 1e-4);
}

#[test]
fn prevalence_ranking_on_planted_cohort() {
    let (g, c) = dm_cohort(5);
    let (case, control) = groups(&c);
    let cmp = compare_prevalence(&case, &control).unwrap();
    // target code and progression chain are present in every case
    let top: BTreeSet<_> = cmp.by_difference().into_iter().take(6).map(|r| r.code.clone()).collect();
    for p in &g.planted {
        assert!(top.contains(p), "{p} not among {top:?}");
    }
}

#[test]
fn pair_ratio_counts() {
    let mut r = rng(16);
    let codes = pool(6);
    for _ in 0..20 {
        let group = random_patients(&mut r, 20, &codes, 0.5);
        for a in &codes {
            for b in &codes {
                let both = group.iter().filter(|p| p.has(a) && p.has(b)).count();
                assert_eq!(pair_ratio(&group, a, b).unwrap(), both as f64 / 20.0);
            }
        }
    }
}

#[test]
fn planted_cluster_is_one_component() {
    let (g, c) = dm_cohort(6);
    let (case, control) = groups(&c);
    let ddn = build_ddn::<f64>(&case, &control, default_beta(), 0.0, &PageRankOptions::default()).unwrap();
    let cut = weight_quantile(&ddn.edges, 0.75).unwrap();
    let clusters = high_risk_clusters(&ddn.edges, cut);
    let planted: BTreeSet<_> = g.planted.iter().cloned().collect();
    assert!(
        clusters.iter().any(|cl| planted.is_subset(&cl.diseases)),
        "planted codes split across {clusters:?}"
    );
    let seen: usize = clusters.iter().map(|c| c.diseases.len()).sum();
    let union: BTreeSet<_> = clusters.iter().flat_map(|c| c.diseases.iter().cloned()).collect();
    assert_eq!(seen, union.len());
}
