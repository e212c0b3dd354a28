//! End-to-end orchestration over a run directory.
//!
//! Layout: `config.json`, `manifest.json`, `cohort/`, `networks/`,
//! `features.csv`, `checkpoints/`, `report.json`, `analysis/`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    compare_prevalence, high_risk_clusters, pair_ratio, progression_pathways, weight_quantile,
};
use crate::cohort::{load_cohort, CodeRanges, Cohort, DiseaseCode, ExclusionReason, Label, Target};
use crate::comorbidity::{build_disease_graph, DifferentialNetwork};
use crate::error::{Error, Result};
use crate::export;
use crate::model::{fit_structural_intervention, CgrlModel, GraphContext, StructuralFitOptions};
use crate::patient_network::{build_patient_graph, to_adjacency, Adjacency, PatientGraph};
use crate::scalar::Scalar;
use crate::synth::{generate_synthetic_cohort, GeneratorConfig};
use crate::train::{prepare_run, run_experiment, ExperimentConfig, ExperimentOutcome, SplitPlan};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSource {
    Synthetic { generator: GeneratorConfig, seed: u64 },
    /// JSON-lines or `.csv` records.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Pathway edges above this probability are highlighted.
    pub pathway_threshold: f64,
    /// DDN edge-weight quantile used as the cluster threshold.
    pub cluster_quantile: f64,
    pub top_k: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            pathway_threshold: 0.2,
            cluster_quantile: 0.75,
            top_k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub target: Target,
    pub input: InputSource,
    pub output: PathBuf,
    pub code_ranges: CodeRanges,
    /// Minimum number of shared diseases for a patient-graph edge.
    pub patient_threshold: usize,
    pub precision: Precision,
    /// Structural factor fit; its rank is taken from `experiment.model.struct_rank`.
    pub structural: StructuralFitOptions,
    pub experiment: ExperimentConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            target: Target::Dm,
            input: InputSource::Synthetic {
                generator: GeneratorConfig::profile(Target::Dm),
                seed: 0,
            },
            output: PathBuf::from("run"),
            code_ranges: CodeRanges::default(),
            patient_threshold: 1,
            precision: Precision::F64,
            structural: StructuralFitOptions::default(),
            experiment: ExperimentConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl RunConfig {
    /// Synthetic-cohort configuration for one dataset profile: hidden size 128
    /// for DM and 8 for CHD. Every generated patient carries hypertension, so
    /// the patient-graph threshold is raised to keep the graph sparse.
    pub fn profile(target: Target) -> Self {
        let mut cfg = RunConfig {
            target,
            input: InputSource::Synthetic {
                generator: GeneratorConfig::profile(target),
                seed: 0,
            },
            output: PathBuf::from(format!("run-{target}")),
            patient_threshold: 7,
            ..Default::default()
        };
        cfg.experiment.model.hidden = match target {
            Target::Dm => 128,
            Target::Chd => 8,
        };
        cfg
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patient_threshold == 0 {
            return Err(Error::Config("patient_threshold must be >= 1".into()));
        }
        if self.structural.iters == 0 || !(self.structural.lr > 0.0) {
            return Err(Error::Config("structural fit needs iters >= 1 and lr > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.analysis.pathway_threshold)
            || !(0.0..=1.0).contains(&self.analysis.cluster_quantile)
        {
            return Err(Error::Config(
                "pathway_threshold and cluster_quantile must lie in [0, 1]".into(),
            ));
        }
        if let InputSource::Synthetic { generator, .. } = &self.input {
            generator.check()?;
            if generator.target != self.target {
                return Err(Error::Config(format!(
                    "generator target {} differs from run target {}",
                    generator.target, self.target
                )));
            }
        }
        self.experiment.validate()
    }

    /// Structural fit options with the rank taken from the model config.
    pub fn structural_options(&self) -> StructuralFitOptions {
        StructuralFitOptions {
            rank: self.experiment.model.struct_rank,
            ..self.structural
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    BuildNet,
    Features,
    Train,
    Analyze,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::BuildNet => "build-net",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Analyze => "analyze",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub version: String,
    pub status: String,
    pub completed: Vec<Stage>,
    pub input_seed: Option<u64>,
    pub structural_seed: u64,
    pub run_seeds: Vec<u64>,
    pub config: RunConfig,
    /// Relative paths of every file in the run directory except the manifest.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub target: Target,
    pub patients: usize,
    pub cases: usize,
    pub controls: usize,
    pub universe: usize,
    pub excluded_too_few_admissions: usize,
    pub excluded_no_hypertension: usize,
    pub excluded_target_not_after_hypertension: usize,
    pub warnings: Vec<String>,
}

/// Trained model snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T: Scalar> {
    pub format_version: u32,
    pub variant: String,
    pub run: usize,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub split: SplitPlan,
    pub model: CgrlModel<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct StructuralSnapshot<T: Scalar> {
    format_version: u32,
    seed: u64,
    rank: usize,
    objective: Vec<T>,
    v: ndarray::Array2<T>,
}

/// Patient graph, adjacency and structural context over the predictor view.
pub struct Networks<T: Scalar> {
    pub predictor: Cohort,
    pub graph: PatientGraph,
    pub ctx: GraphContext<T>,
}

pub struct Pipeline {
    cfg: RunConfig,
    dir: PathBuf,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn json<S: Serialize>(v: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            list_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("under root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

impl Pipeline {
    /// Validates the configuration; nothing is written yet.
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let dir = cfg.output.clone();
        Ok(Pipeline { cfg, dir })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn cohort_file(&self) -> PathBuf {
        self.path("cohort/cohort.jsonl")
    }

    /// Generates the configured synthetic cohort (the profile default when
    /// the input is a file) and writes it under `cohort/`.
    pub fn synth(&self) -> Result<Cohort> {
        let (generator, seed) = match &self.cfg.input {
            InputSource::Synthetic { generator, seed } => (generator.clone(), *seed),
            InputSource::File { .. } => (GeneratorConfig::profile(self.cfg.target), 0),
        };
        let generated = generate_synthetic_cohort(&generator, seed)?;
        let warnings = generated.warnings.iter().map(|w| w.to_string()).collect();
        write(&self.path("cohort/generator.json"), json(&generator)?)?;
        self.write_cohort(&generated.cohort, &[], warnings)?;
        Ok(generated.cohort)
    }

    /// Reads or generates the cohort, applies the inclusion rules and writes
    /// `cohort/cohort.jsonl` and `cohort/summary.json`.
    pub fn ingest(&self) -> Result<Cohort> {
        match &self.cfg.input {
            InputSource::Synthetic { .. } => self.synth(),
            InputSource::File { path } => {
                let out = load_cohort(path, self.cfg.target, &self.cfg.code_ranges)?;
                self.write_cohort(&out.cohort, &out.excluded, Vec::new())?;
                let mut csv = String::from("id,reason\n");
                for (id, r) in &out.excluded {
                    let reason = serde_json::to_value(r)?;
                    csv.push_str(&format!("{id},{}\n", reason.as_str().unwrap_or_default()));
                }
                write(&self.path("cohort/excluded.csv"), csv)?;
                Ok(out.cohort)
            }
        }
    }

    fn write_cohort(
        &self,
        cohort: &Cohort,
        excluded: &[(String, ExclusionReason)],
        warnings: Vec<String>,
    ) -> Result<()> {
        let n = |r| excluded.iter().filter(|(_, x)| *x == r).count();
        let summary = CohortSummary {
            target: cohort.target,
            patients: cohort.len(),
            cases: cohort.count(Label::Case),
            controls: cohort.count(Label::Control),
            universe: cohort.universe.len(),
            excluded_too_few_admissions: n(ExclusionReason::TooFewAdmissions),
            excluded_no_hypertension: n(ExclusionReason::NoHypertension),
            excluded_target_not_after_hypertension: n(ExclusionReason::TargetNotAfterHypertension),
            warnings,
        };
        write(&self.cohort_file(), cohort.to_jsonl())?;
        write(&self.path("cohort/summary.json"), json(&summary)?)
    }

    /// The ingested cohort from the run directory, ingesting first if absent.
    pub fn cohort(&self) -> Result<Cohort> {
        let f = self.cohort_file();
        if f.exists() {
            Ok(load_cohort(&f, self.cfg.target, &self.cfg.code_ranges)?.cohort)
        } else {
            self.ingest()
        }
    }

    /// Patient graph and structural intervention over the predictor view,
    /// plus whole-group comorbidity networks, written under `networks/`.
    pub fn build_networks<T: Scalar>(&self, cohort: &Cohort) -> Result<Networks<T>> {
        let predictor = cohort.predictor_view(&self.cfg.code_ranges)?;
        let graph = build_patient_graph(&predictor, self.cfg.patient_threshold)?;
        let adj: Adjacency = to_adjacency(&graph);
        log::info!(
            "patient graph: {} nodes, {} edges (threshold {})",
            graph.n,
            graph.edge_count(),
            graph.threshold
        );
        let opts = self.cfg.structural_options();
        let fit = fit_structural_intervention::<T>(&adj, &opts)?;
        write(
            &self.path("networks/patient_graph.graphml"),
            export::patient_graph_graphml(&graph, &predictor),
        )?;
        write(&self.path("networks/adjacency.coo"), export::adjacency_coo(&adj))?;
        write(
            &self.path("networks/structural.json"),
            json(&StructuralSnapshot {
                format_version: FORMAT_VERSION,
                seed: opts.seed,
                rank: opts.rank,
                objective: fit.objective.clone(),
                v: fit.v.clone(),
            })?,
        )?;
        let beta = T::lit(self.cfg.experiment.beta);
        let min_coco = T::lit(self.cfg.experiment.min_coco);
        let all: Vec<usize> = (0..predictor.len()).collect();
        for (label, name) in [(Label::Case, "case"), (Label::Control, "control")] {
            let g = build_disease_graph(&predictor.select_label(&all, label), beta, min_coco)?;
            write(
                &self.path(&format!("networks/{name}_comorbidity.graphml")),
                export::disease_graph_graphml(&g),
            )?;
            write(
                &self.path(&format!("networks/{name}_comorbidity.dot")),
                export::disease_graph_dot(&g),
            )?;
        }
        let ctx = GraphContext::new(adj, fit.c)?;
        Ok(Networks {
            predictor,
            graph,
            ctx,
        })
    }

    /// DDN and feature matrix for the first run's split (`features.csv`,
    /// `networks/ddn.*`).
    pub fn features<T: Scalar>(&self, predictor: &Cohort) -> Result<DifferentialNetwork<T>> {
        let exp = &self.cfg.experiment;
        let (split, ddn, fm) = prepare_run::<T>(predictor, exp, exp.base_seed)?;
        write(&self.path("features.csv"), fm.to_csv(predictor))?;
        write(&self.path("networks/ddn.graphml"), export::ddn_graphml(&ddn))?;
        write(&self.path("networks/ddn.dot"), export::ddn_dot(&ddn))?;
        write(&self.path("networks/split.json"), json(&split)?)?;
        Ok(ddn)
    }

    /// Repeated training runs; writes checkpoints, loss curves and `report.json`.
    pub fn train<T: Scalar>(&self, nets: &Networks<T>) -> Result<ExperimentOutcome<T>> {
        let out = run_experiment(&nets.predictor, &nets.ctx, &self.cfg.experiment)?;
        for (i, run) in out.runs.iter().enumerate() {
            let Some(run) = run else { continue };
            for (variant, t) in [("cgrl", &run.cgrl), ("ablation", &run.ablation)] {
                let ck = Checkpoint {
                    format_version: FORMAT_VERSION,
                    variant: variant.into(),
                    run: i,
                    seed: run.seed,
                    best_epoch: t.best_epoch,
                    best_val_loss: t.best_val_loss,
                    split: run.split.clone(),
                    model: t.model.clone(),
                };
                write(
                    &self.path(&format!("checkpoints/run{i}_{variant}.json")),
                    json(&ck)?,
                )?;
                write(
                    &self.path(&format!("checkpoints/run{i}_{variant}_loss.csv")),
                    t.loss_curve_csv(),
                )?;
            }
        }
        write(&self.path("report.json"), json(&out.report)?)?;
        let r = &out.report;
        if let (Some(a), Some(b)) = (r.cgrl.acc, r.ablation.acc) {
            log::info!("test ACC: model {a}, feature-attention ablation {b}");
        }
        Ok(out)
    }

    /// Prevalence comparison, pair ratios, clusters and progression pathways
    /// under `analysis/`.
    pub fn analyze<T: Scalar>(&self, cohort: &Cohort, ddn: &DifferentialNetwork<T>) -> Result<()> {
        let all: Vec<usize> = (0..cohort.len()).collect();
        let case = cohort.select_label(&all, Label::Case);
        let control = cohort.select_label(&all, Label::Control);
        let a = &self.cfg.analysis;

        let cmp = compare_prevalence(&case, &control)?;
        write(&self.path("analysis/prevalence.csv"), cmp.to_csv())?;

        let mut top: Vec<(&(DiseaseCode, DiseaseCode), &T)> = ddn.edges.iter().collect();
        top.sort_by(|x, y| y.1.partial_cmp(x.1).expect("finite").then_with(|| x.0.cmp(y.0)));
        let mut csv = String::from("code_a,code_b,ratio_case,ratio_control\n");
        for ((d1, d2), _) in top.into_iter().take(a.top_k) {
            csv.push_str(&format!(
                "{d1},{d2},{},{}\n",
                pair_ratio(&case, d1, d2)?,
                pair_ratio(&control, d1, d2)?
            ));
        }
        write(&self.path("analysis/pair_ratios.csv"), csv)?;

        let clusters = match weight_quantile(&ddn.edges, a.cluster_quantile) {
            Some(w) => high_risk_clusters(&ddn.edges, w),
            None => Vec::new(),
        };
        write(&self.path("analysis/clusters.json"), json(&clusters)?)?;
        write(&self.path("analysis/ddn_summary.json"), json(&ddn.summary(a.top_k))?)?;

        let range = self.cfg.code_ranges.target(cohort.target);
        let targets: BTreeSet<DiseaseCode> =
            cohort.universe.iter().filter(|c| range.contains(c)).cloned().collect();
        let pathways = progression_pathways(&case, &targets, a.pathway_threshold)?;
        write(&self.path("analysis/pathways.json"), json(&pathways)?)?;
        write(&self.path("analysis/pathways.dot"), pathways.to_dot())?;
        Ok(())
    }

    fn write_manifest(&self, completed: &[Stage], status: &str) -> Result<Manifest> {
        let mut files = Vec::new();
        if self.dir.exists() {
            list_files(&self.dir, &self.dir, &mut files)?;
        }
        files.retain(|f| f != "manifest.json");
        let exp = &self.cfg.experiment;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            version: env!("CARGO_PKG_VERSION").into(),
            status: status.into(),
            completed: completed.to_vec(),
            input_seed: match &self.cfg.input {
                InputSource::Synthetic { seed, .. } => Some(*seed),
                InputSource::File { .. } => None,
            },
            structural_seed: self.cfg.structural.seed,
            run_seeds: (0..exp.runs as u64).map(|i| exp.base_seed + i).collect(),
            config: self.cfg.clone(),
            files,
        };
        write(&self.path("manifest.json"), json(&manifest)?)?;
        Ok(manifest)
    }

    /// Runs every stage in order. On failure a `FAILED` marker naming the
    /// stage is written next to whatever outputs already exist.
    pub fn run(&self) -> std::result::Result<Manifest, StageError> {
        let mut done = Vec::new();
        let at = |stage| move |source| StageError { stage, source };
        let failed = |done: &[Stage], e: StageError| {
            let _ = write(&self.path("FAILED"), format!("{}\n{}\n", e.stage, e.source));
            let _ = self.write_manifest(done, "failed");
            e
        };
        let _ = fs::remove_file(self.path("FAILED"));
        write(
            &self.path("config.json"),
            json(&self.cfg).map_err(at(Stage::Ingest))?,
        )
        .map_err(at(Stage::Ingest))?;
        let result = match self.cfg.precision {
            Precision::F64 => self.run_typed::<f64>(&mut done),
            Precision::F32 => self.run_typed::<f32>(&mut done),
        };
        match result {
            Ok(()) => self
                .write_manifest(&done, "ok")
                .map_err(at(Stage::Analyze)),
            Err(e) => Err(failed(&done, e)),
        }
    }

    fn run_typed<T: Scalar>(&self, done: &mut Vec<Stage>) -> std::result::Result<(), StageError> {
        let at = |stage| move |source| StageError { stage, source };
        let cohort = self.ingest().map_err(at(Stage::Ingest))?;
        done.push(Stage::Ingest);
        let nets = self.build_networks::<T>(&cohort).map_err(at(Stage::BuildNet))?;
        done.push(Stage::BuildNet);
        let ddn = self.features::<T>(&nets.predictor).map_err(at(Stage::Features))?;
        done.push(Stage::Features);
        self.train(&nets).map_err(at(Stage::Train))?;
        done.push(Stage::Train);
        self.analyze(&cohort, &ddn).map_err(at(Stage::Analyze))?;
        done.push(Stage::Analyze);
        Ok(())
    }
}
