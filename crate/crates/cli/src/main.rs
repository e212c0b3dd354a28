use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use comorbinet::cohort::Target;
use comorbinet::pipeline::{InputSource, Pipeline, Precision, RunConfig};
use comorbinet::synth::GeneratorConfig;
use comorbinet::{Error, Scalar};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "comorbinet", version, about = "Comorbidity network risk prediction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; defaults to the synthetic profile of --target.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Target disease.
    #[arg(long, global = true, value_parser = ["dm", "chd"])]
    target: Option<String>,

    /// Seed for data generation, the structural fit and the first training run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of repeated training runs.
    #[arg(long, global = true)]
    runs: Option<usize>,

    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Run every stage and write the complete run directory.
    Pipeline,
    /// Read (or generate) the cohort and apply the inclusion rules.
    Ingest,
    /// Generate the synthetic cohort.
    Synth,
    /// Build the patient graph, structural intervention and comorbidity networks.
    BuildNet,
    /// Build the differential network and the feature matrix.
    Features,
    /// Train and evaluate the model and its ablation.
    Train,
    /// Prevalence, pair ratio, cluster and pathway analyses.
    Analyze,
    /// Print the effective configuration as JSON.
    PrintConfig,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Pipeline => "pipeline",
            Command::Ingest => "ingest",
            Command::Synth => "synth",
            Command::BuildNet => "build-net",
            Command::Features => "features",
            Command::Train => "train",
            Command::Analyze => "analyze",
            Command::PrintConfig => "print-config",
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, Error> {
    let target = cli.target.as_deref().map(str::parse::<Target>).transpose()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::profile(target.unwrap_or(Target::Dm)),
    };
    if let Some(t) = target {
        cfg.target = t;
        if let InputSource::Synthetic { generator, .. } = &mut cfg.input {
            if generator.target != t {
                *generator = GeneratorConfig::profile(t);
            }
        }
    }
    if let Some(seed) = cli.seed {
        if let InputSource::Synthetic { seed: s, .. } = &mut cfg.input {
            *s = seed;
        }
        cfg.structural.seed = seed;
        cfg.experiment.base_seed = seed;
    }
    if let Some(runs) = cli.runs {
        cfg.experiment.runs = runs;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("COMORBINET_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("COMORBINET_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn stage<T: Scalar>(p: &Pipeline, cmd: Command) -> comorbinet::Result<()> {
    match cmd {
        Command::Synth => {
            let c = p.synth()?;
            println!("{} patients written to {}", c.len(), p.dir().join("cohort").display());
        }
        Command::Ingest => {
            let c = p.ingest()?;
            println!("{} patients written to {}", c.len(), p.dir().join("cohort").display());
        }
        Command::BuildNet => {
            let nets = p.build_networks::<T>(&p.cohort()?)?;
            println!(
                "patient graph: {} nodes, {} edges",
                nets.graph.n,
                nets.graph.edge_count()
            );
        }
        Command::Features => {
            let c = p.cohort()?;
            let ddn = p.features::<T>(&c.predictor_view(&p.config().code_ranges)?)?;
            println!("differential network: {} nodes, {} edges", ddn.nodes.len(), ddn.edges.len());
        }
        Command::Train => {
            let nets = p.build_networks::<T>(&p.cohort()?)?;
            let out = p.train(&nets)?;
            print_report(&out.report);
        }
        Command::Analyze => {
            let c = p.cohort()?;
            let ddn = p.features::<T>(&c.predictor_view(&p.config().code_ranges)?)?;
            p.analyze(&c, &ddn)?;
            println!("analysis written to {}", p.dir().join("analysis").display());
        }
        Command::Pipeline | Command::PrintConfig => unreachable!("handled by caller"),
    }
    Ok(())
}

fn print_report(r: &comorbinet::train::RunReport) {
    for (name, m) in [("model", &r.cgrl), ("ablation", &r.ablation)] {
        match (m.acc, m.f1) {
            (Some(acc), Some(f1)) => println!("{name:9} ACC {acc}  F1 {f1}  ({} runs)", r.run_count),
            _ => println!("{name:9} all runs failed"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match configure_threads().and_then(|()| resolve_config(&cli)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if cli.command == Command::PrintConfig {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return ExitCode::SUCCESS;
    }
    let precision = cfg.precision;
    let p = match Pipeline::new(cfg) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if cli.command == Command::Pipeline {
        return match p.run() {
            Ok(m) => {
                println!("run directory {} ({} files)", p.dir().display(), m.files.len());
                if let Ok(text) = std::fs::read_to_string(p.dir().join("report.json")) {
                    if let Ok(r) = serde_json::from_str(&text) {
                        print_report(&r);
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(EXIT_STAGE)
            }
        };
    }
    let result = match precision {
        Precision::F64 => stage::<f64>(&p, cli.command),
        Precision::F32 => stage::<f32>(&p, cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stage {} failed: {e}", cli.command.name());
            ExitCode::from(EXIT_STAGE)
        }
    }
}
