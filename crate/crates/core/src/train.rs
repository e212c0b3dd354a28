//! Data splitting, loss, optimisation and evaluation.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Label};
use crate::comorbidity::{build_ddn, DifferentialNetwork};
use crate::error::{Error, Result};
use crate::features::{feature_matrix, FeatureMatrix};
use crate::model::{CgrlConfig, CgrlModel, CgrlParams, ForwardOptions, GraphContext};
use crate::pagerank::PageRankOptions;
use crate::scalar::Scalar;

const PARTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|&x| !(x > 0.0)) || ((r.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must be positive and sum to 1, got {r:?}"
            )));
        }
        Ok(())
    }

    fn cumulative(&self) -> [f64; PARTS] {
        [self.train, self.train + self.val, 1.0]
    }

    fn as_array(&self) -> [f64; PARTS] {
        [self.train, self.val, self.test]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn sizes(&self) -> [usize; PARTS] {
        [self.train.len(), self.val.len(), self.test.len()]
    }
}

/// Cumulative rounding: counts whose running sums are `round(n * cum[p])`.
fn allocate(n: usize, cum: &[f64; PARTS]) -> [usize; PARTS] {
    let mut out = [0; PARTS];
    let mut prev = 0;
    for (o, &c) in out.iter_mut().zip(cum) {
        let at = ((n as f64 * c).round() as usize).min(n);
        *o = at.saturating_sub(prev);
        prev = prev.max(at);
    }
    out
}

/// Stratified split. Each class is shuffled on its own and cut by cumulative
/// rounding, so every class part is within one member of its exact share;
/// members are then moved between parts (only where that keeps the per-class
/// bound) until the part totals match the rounding of the whole population.
/// Every class contributes at least one member to every part.
pub fn stratified_split(labels: &[Label], ratios: &SplitRatios, seed: u64) -> Result<SplitPlan> {
    ratios.validate()?;
    let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        members[l.index()].push(i);
    }
    for (c, m) in members.iter().enumerate() {
        if m.len() < PARTS {
            return Err(Error::InsufficientClass {
                class: Label::from_index(c).to_string(),
                count: m.len(),
                required: PARTS,
            });
        }
    }
    let cum = ratios.cumulative();
    let share = ratios.as_array();
    let mut counts: Vec<[usize; PARTS]> = members.iter().map(|m| allocate(m.len(), &cum)).collect();
    let exact: Vec<[f64; PARTS]> = members
        .iter()
        .map(|m| share.map(|r| r * m.len() as f64))
        .collect();
    let target = allocate(labels.len(), &cum);
    loop {
        let totals: [usize; PARTS] =
            std::array::from_fn(|p| counts.iter().map(|c| c[p]).sum::<usize>());
        let over = (0..PARTS).find(|&p| totals[p] > target[p]);
        let under = (0..PARTS).find(|&p| totals[p] < target[p]);
        let (Some(from), Some(to)) = (over, under) else {
            break;
        };
        let movable = (0..counts.len()).find(|&c| {
            counts[c][from] > 1
                && counts[c][from] as f64 > exact[c][from]
                && (counts[c][to] as f64) < exact[c][to]
        });
        let Some(c) = movable else { break };
        counts[c][from] -= 1;
        counts[c][to] += 1;
    }
    for c in counts.iter_mut() {
        for p in 0..PARTS {
            while c[p] == 0 {
                let donor = (0..PARTS).max_by_key(|&q| c[q]).expect("nonempty");
                c[donor] -= 1;
                c[p] += 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; PARTS] = Default::default();
    for (m, cnt) in members.iter_mut().zip(&counts) {
        m.shuffle(&mut rng);
        let mut start = 0;
        for (part, &k) in parts.iter_mut().zip(cnt) {
            part.extend_from_slice(&m[start..start + k]);
            start += k;
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok(SplitPlan {
        train,
        val,
        test,
        seed,
    })
}

const CLAMP: f64 = 1e-12;

/// Mean binary cross-entropy over `mask`, using the positive-class column
/// clamped to `[1e-12, 1 - 1e-12]`.
pub fn cross_entropy_loss<T: Scalar>(probs: &Array2<T>, labels: &[Label], mask: &[usize]) -> Result<T> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (lo, hi) = (T::lit(CLAMP), T::one() - T::lit(CLAMP));
    let total: T = mask
        .iter()
        .map(|&i| {
            let p = probs[[i, 1]].max(lo).min(hi);
            match labels[i] {
                Label::Case => -p.ln(),
                Label::Control => -(T::one() - p).ln(),
            }
        })
        .sum();
    Ok(total / T::count(mask.len()))
}

/// Gradient of [`cross_entropy_loss`] with respect to the two-class logits.
/// Rows outside `mask`, and rows whose probability sits on the clamp, get zero.
pub fn cross_entropy_grad<T: Scalar>(
    probs: &Array2<T>,
    labels: &[Label],
    mask: &[usize],
) -> Result<Array2<T>> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (lo, hi) = (T::lit(CLAMP), T::one() - T::lit(CLAMP));
    let scale = T::one() / T::count(mask.len());
    let mut g = Array2::zeros(probs.raw_dim());
    for &i in mask {
        let p = probs[[i, 1]];
        if p < lo || p > hi {
            continue;
        }
        let y = T::count(labels[i].index());
        let d = (p - y) * scale;
        g[[i, 1]] = d;
        g[[i, 0]] = -d;
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Kind {
    Macro,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub f1: f64,
}

fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Accuracy and F1 from predicted and true class indices.
pub fn classification_metrics(pred: &[usize], truth: &[usize], kind: F1Kind) -> Result<Metrics> {
    if pred.is_empty() {
        return Err(Error::EmptyMask);
    }
    if pred.len() != truth.len() {
        return Err(Error::ShapeError("prediction and truth lengths differ".into()));
    }
    let mut cm = [[0usize; 2]; 2];
    for (&p, &t) in pred.iter().zip(truth) {
        cm[t][p] += 1;
    }
    let correct = cm[0][0] + cm[1][1];
    let f1_pos = f1_score(cm[1][1], cm[0][1], cm[1][0]);
    let f1 = match kind {
        F1Kind::Positive => f1_pos,
        F1Kind::Macro => (f1_pos + f1_score(cm[0][0], cm[1][0], cm[0][1])) / 2.0,
    };
    Ok(Metrics {
        acc: correct as f64 / pred.len() as f64,
        f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// `lambda` is an L2 penalty added to every gradient.
    WeightDecay,
    /// `lambda` drives an inverse-time learning-rate decay `lr / (1 + lambda * epoch)`.
    StepDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lambda: f64,
    pub lambda_mode: LambdaMode,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub f1: F1Kind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            lambda: 0.01,
            lambda_mode: LambdaMode::WeightDecay,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_epochs: 500,
            patience: 50,
            f1: F1Kind::Macro,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::Config("learning_rate must be > 0 and lambda >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("max_epochs and patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// Adam over the flattened parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(len: usize, cfg: &TrainConfig) -> Self {
        let weight_decay = match cfg.lambda_mode {
            LambdaMode::WeightDecay => cfg.lambda,
            LambdaMode::StepDecay => 0.0,
        };
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut CgrlParams<T>, grads: &CgrlParams<T>) {
        let mut theta = params.to_flat();
        let g = grads.to_flat();
        self.t += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(self.t));
        let c2 = T::lit(1.0 - self.beta2.powi(self.t));
        let (lr, eps, wd) = (T::lit(self.lr), T::lit(self.eps), T::lit(self.weight_decay));
        for i in 0..theta.len() {
            let gi = g[i] + wd * theta[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * gi;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * gi * gi;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        params.set_flat(&theta);
    }
}

/// Inputs shared by every training run on one cohort.
#[derive(Debug, Clone, Copy)]
pub struct GraphData<'a, T: Scalar> {
    pub x: &'a Array2<T>,
    pub ctx: &'a GraphContext<T>,
    pub labels: &'a [Label],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    /// Parameters at the best validation loss.
    pub model: CgrlModel<T>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochRecord>,
}

impl<T: Scalar> TrainOutcome<T> {
    pub fn loss_curve_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for r in &self.history {
            s.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
        }
        s
    }
}

/// Full-graph training on `split.train` with early stopping on `split.val`.
pub fn train<T: Scalar>(
    mut model: CgrlModel<T>,
    data: GraphData<'_, T>,
    split: &SplitPlan,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.x.nrows() != data.labels.len() || data.ctx.n() != data.labels.len() {
        return Err(Error::ShapeError(format!(
            "{} feature rows, {} graph nodes, {} labels",
            data.x.nrows(),
            data.ctx.n(),
            data.labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(model.params.len(), cfg);
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    for epoch in 0..cfg.max_epochs {
        if cfg.lambda_mode == LambdaMode::StepDecay {
            adam.lr = cfg.learning_rate / (1.0 + cfg.lambda * epoch as f64);
        }
        let fwd = model.forward(data.x, data.ctx, ForwardOptions::train(rng.random()))?;
        let train_loss = cross_entropy_loss(&fwd.probs, data.labels, &split.train)?;
        if !train_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        let d = cross_entropy_grad(&fwd.probs, data.labels, &split.train)?;
        let grads = model.backward(&fwd, data.ctx, &d)?;
        adam.step(&mut model.params, &grads);
        if !model.params.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }

        let eval = model.forward(data.x, data.ctx, ForwardOptions::eval())?;
        let val_loss = cross_entropy_loss(&eval.probs, data.labels, &split.val)?.to_f64_lossy();
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: train_loss.to_f64_lossy(),
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = model.clone();
        } else if epoch - best_epoch >= cfg.patience {
            log::debug!("early stop at epoch {epoch}, best {best_epoch}");
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch,
        best_val_loss: best_val,
        history,
    })
}

/// Accuracy and F1 of `model` on the rows in `idx`.
pub fn evaluate<T: Scalar>(
    model: &CgrlModel<T>,
    data: GraphData<'_, T>,
    idx: &[usize],
    kind: F1Kind,
) -> Result<Metrics> {
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    let fwd = model.forward(data.x, data.ctx, ForwardOptions::eval())?;
    let pred = fwd.predicted();
    let p: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
    let t: Vec<usize> = idx.iter().map(|&i| data.labels[i].index()).collect();
    classification_metrics(&p, &t, kind)
}

/// Mean and sample standard deviation (zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(MeanStd { mean, std })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4}±{:.4}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run: usize,
    pub seed: u64,
    pub acc: Option<f64>,
    pub f1: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs: Option<usize>,
    /// Error message when the run failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub runs: Vec<RunEntry>,
    pub acc: Option<MeanStd>,
    pub f1: Option<MeanStd>,
    pub failed_runs: usize,
}

impl ModelReport {
    fn from_runs(runs: Vec<RunEntry>) -> Self {
        let acc: Vec<f64> = runs.iter().filter_map(|r| r.acc).collect();
        let f1: Vec<f64> = runs.iter().filter_map(|r| r.f1).collect();
        ModelReport {
            acc: MeanStd::of(&acc),
            f1: MeanStd::of(&f1),
            failed_runs: runs.iter().filter(|r| r.error.is_some()).count(),
            runs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_count: usize,
    pub base_seed: u64,
    /// Always `"sample"`: the spread is the n-1 standard deviation.
    pub std_kind: String,
    pub f1_kind: F1Kind,
    pub model: CgrlConfig,
    pub train: TrainConfig,
    pub cgrl: ModelReport,
    /// Feature-attention-only variant under the same seeds and splits.
    pub ablation: ModelReport,
}

/// Settings for the per-run DDN and feature construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub runs: usize,
    pub base_seed: u64,
    pub ratios: SplitRatios,
    pub beta: f64,
    pub min_coco: f64,
    pub pagerank: PageRankOptions,
    pub model: CgrlConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            runs: 5,
            base_seed: 0,
            ratios: SplitRatios::default(),
            beta: std::f64::consts::SQRT_2,
            min_coco: 0.0,
            pagerank: PageRankOptions::default(),
            model: CgrlConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if !(self.beta > 0.0) || !(self.min_coco >= 0.0) {
            return Err(Error::Config("beta must be > 0 and min_coco >= 0".into()));
        }
        self.ratios.validate()?;
        self.model.validate()?;
        self.train.validate()
    }
}

/// Everything one run produced besides its metrics.
#[derive(Debug, Clone)]
pub struct RunArtifacts<T: Scalar> {
    pub seed: u64,
    pub split: SplitPlan,
    pub ddn: DifferentialNetwork<T>,
    pub features: FeatureMatrix<T>,
    pub cgrl: TrainOutcome<T>,
    pub ablation: TrainOutcome<T>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome<T: Scalar> {
    pub report: RunReport,
    /// One slot per run; `None` where the run failed before training finished.
    pub runs: Vec<Option<RunArtifacts<T>>>,
}

/// Split, DDN and standardized features for one seed. Only training rows feed
/// the DDN and the standardization statistics.
pub fn prepare_run<T: Scalar>(
    cohort: &Cohort,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(SplitPlan, DifferentialNetwork<T>, FeatureMatrix<T>)> {
    let split = stratified_split(&cohort.labels(), &cfg.ratios, seed)?;
    let ddn = build_ddn(
        &cohort.select_label(&split.train, Label::Case),
        &cohort.select_label(&split.train, Label::Control),
        T::lit(cfg.beta),
        T::lit(cfg.min_coco),
        &cfg.pagerank,
    )?;
    let features = feature_matrix(cohort, &ddn, &split.train)?;
    Ok((split, ddn, features))
}


fn one_run<T: Scalar>(
    cohort: &Cohort,
    ctx: &GraphContext<T>,
    cfg: &ExperimentConfig,
    run: usize,
) -> (RunEntry, RunEntry, Option<RunArtifacts<T>>) {
    let seed = cfg.base_seed + run as u64;
    let labels = cohort.labels();
    let blank = RunEntry {
        run,
        seed,
        acc: None,
        f1: None,
        best_epoch: None,
        epochs: None,
        error: None,
    };
    let failed = |e: &Error| RunEntry {
        error: Some(e.to_string()),
        ..blank.clone()
    };
    let (split, ddn, features) = match prepare_run::<T>(cohort, cfg, seed) {
        Ok(v) => v,
        Err(e) => return (failed(&e), failed(&e), None),
    };
    let data = GraphData {
        x: &features.x,
        ctx,
        labels: &labels,
    };
    let fit = |config: CgrlConfig| -> Result<(TrainOutcome<T>, Metrics)> {
        let model = CgrlModel::new(config, features.x.ncols(), seed)?;
        let out = train(model, data, &split, &cfg.train, seed)?;
        let m = evaluate(&out.model, data, &split.test, cfg.train.f1)?;
        Ok((out, m))
    };
    let entry = |r: &Result<(TrainOutcome<T>, Metrics)>| match r {
        Ok((out, m)) => RunEntry {
            acc: Some(m.acc),
            f1: Some(m.f1),
            best_epoch: Some(out.best_epoch),
            epochs: Some(out.history.len()),
            ..blank.clone()
        },
        Err(e) => failed(e),
    };
    let main = fit(cfg.model.clone());
    let abl = fit(cfg.model.ablation());
    let (e_main, e_abl) = (entry(&main), entry(&abl));
    let artifacts = match (main, abl) {
        (Ok((cgrl, _)), Ok((ablation, _))) => Some(RunArtifacts {
            seed,
            split,
            ddn,
            features,
            cgrl,
            ablation,
        }),
        _ => None,
    };
    (e_main, e_abl, artifacts)
}

/// Runs `cfg.runs` independent split/train/evaluate rounds with seeds
/// `base_seed + i`, each for the full model and its feature-attention-only
/// ablation. Runs execute in parallel; results do not depend on scheduling.
pub fn run_experiment<T: Scalar>(
    cohort: &Cohort,
    ctx: &GraphContext<T>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome<T>> {
    cfg.validate()?;
    if ctx.n() != cohort.len() {
        return Err(Error::ShapeError(format!(
            "graph has {} nodes for {} patients",
            ctx.n(),
            cohort.len()
        )));
    }
    let results: Vec<_> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| one_run(cohort, ctx, cfg, run))
        .collect();
    let mut main = Vec::new();
    let mut abl = Vec::new();
    let mut runs = Vec::new();
    for (m, a, art) in results {
        if let Some(e) = &m.error {
            log::warn!("run {} failed: {e}", m.run);
        }
        main.push(m);
        abl.push(a);
        runs.push(art);
    }
    Ok(ExperimentOutcome {
        report: RunReport {
            run_count: cfg.runs,
            base_seed: cfg.base_seed,
            std_kind: "sample".into(),
            f1_kind: cfg.train.f1,
            model: cfg.model.clone(),
            train: cfg.train.clone(),
            cgrl: ModelReport::from_runs(main),
            ablation: ModelReport::from_runs(abl),
        },
        runs,
    })
}
