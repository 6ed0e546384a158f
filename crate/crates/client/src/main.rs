use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use g2t_client::{Client, DEFAULT_SERVER};
use g2t_core::api::{
    BenchRequest, ExportEmbeddingsRequest, GenerateRequest, GraphDumpRequest, ReportRequest, SolveRequest,
    TrainRequest,
};
use g2t_core::bench::pipeline::TrainConfig;
use g2t_core::bench::Encoder;
use g2t_core::corpus::CorpusSpec;
use g2t_core::search::SearchBudget;

/// Command line client of the g2t service.
#[derive(Parser)]
#[command(name = "g2t", version)]
struct Cli {
    /// Base URL of the service.
    #[arg(long, global = true, env = "G2T_SERVER", default_value = DEFAULT_SERVER)]
    server: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with its train/test split.
    Generate(GenerateArgs),
    /// Train a model on the training packages of a corpus.
    Train(TrainArgs),
    /// Run solvers on the test packages and write results.csv + run_manifest.json.
    Bench(BenchArgs),
    /// Summarise a results CSV into curve, Venn and bucket CSVs.
    Report(ReportArgs),
    /// Attempt one theorem.
    Solve(SolveArgs),
    /// Graph inspection.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Write a checkpoint's definition embeddings as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON file with a full corpus spec (flags below override it).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    packages: Option<usize>,
    #[arg(long)]
    theorems_per_package: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.9)]
    split_fraction: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Anon,
    Named,
    Nodef,
}

impl From<EncoderArg> for Encoder {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::Anon => Encoder::Anon,
            EncoderArg::Named => Encoder::Named,
            EncoderArg::Nodef => Encoder::NoDef,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    encoder: EncoderArg,
    /// Checkpoint file to write.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with a training config (flags below override it).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    max_states: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct BudgetArgs {
    /// Wall-clock seconds per theorem.
    #[arg(long, default_value_t = 60.0)]
    seconds: f64,
    /// Model calls per theorem.
    #[arg(long, default_value_t = 512)]
    calls: u64,
    #[arg(long, default_value_t = 1_000_000)]
    tactic_executions: u64,
}

impl From<&BudgetArgs> for SearchBudget {
    fn from(b: &BudgetArgs) -> Self {
        SearchBudget { wall_time_s: b.seconds, model_calls: b.calls, tactic_executions: b.tactic_executions }
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Solver ids, comma separated (e.g. knn-recent-online,g2t-anon-update).
    #[arg(long, value_delimiter = ',', required = true)]
    solvers: Vec<String>,
    /// Checkpoints as encoder=path (anon, named, nodef); repeatable.
    #[arg(long = "checkpoint", value_parser = parse_checkpoint)]
    checkpoints: Vec<(String, PathBuf)>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_theorems_per_package: Option<usize>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Aggregate solver as components joined by '+'; repeatable.
    #[arg(long = "aggregate")]
    aggregates: Vec<String>,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    theorem: String,
    #[arg(long)]
    solver: String,
    #[arg(long = "checkpoint", value_parser = parse_checkpoint)]
    checkpoints: Vec<(String, PathBuf)>,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Print the input graph of one or more definitions.
    Dump {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(required = true)]
        definitions: Vec<String>,
        #[arg(long, default_value_t = 1024)]
        max_nodes: usize,
    },
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus used to name the rows.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_checkpoint(s: &str) -> Result<(String, PathBuf), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected encoder=path, got `{s}`"))?;
    if !matches!(k, "anon" | "named" | "nodef") {
        return Err(format!("unknown encoder `{k}` (anon, named, nodef)"));
    }
    Ok((k.to_string(), PathBuf::from(v)))
}

/// The service may run elsewhere in the filesystem: send absolute paths.
fn abs(p: &Path) -> anyhow::Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}

fn checkpoints(list: &[(String, PathBuf)]) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    list.iter().map(|(k, v)| Ok((k.clone(), abs(v)?))).collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let client = Client::new(&cli.server);
    let progress = |line: &str| eprintln!("{line}");
    match cli.command {
        Command::Generate(a) => {
            let mut spec: CorpusSpec = match &a.spec {
                Some(p) => read_json(p)?,
                None => CorpusSpec::default(),
            };
            spec.packages = a.packages.unwrap_or(spec.packages);
            spec.theorems_per_package = a.theorems_per_package.unwrap_or(spec.theorems_per_package);
            spec.seed = a.seed.unwrap_or(spec.seed);
            let req = GenerateRequest { spec, out_dir: abs(&a.out)?, split_fraction: a.split_fraction, split_seed: a.split_seed };
            let resp = client.generate(&req).await?;
            let t = &resp.manifest.totals;
            println!(
                "wrote {} ({} packages, {} theorems, {} proof states)",
                resp.manifest_path.display(),
                t.packages,
                t.theorems,
                t.proof_states
            );
            if let Some(s) = &resp.manifest.split {
                println!("split: {} train / {} test packages, {:.3} of proof states in train", s.train.len(), s.test.len(), s.achieved_fraction);
            }
        }
        Command::Train(a) => {
            let mut config: TrainConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => TrainConfig::default(),
            };
            config.steps = a.steps.unwrap_or(config.steps);
            config.max_states = a.max_states.or(config.max_states);
            config.model.seed = a.seed.unwrap_or(config.model.seed);
            let req = TrainRequest { corpus_dir: abs(&a.corpus)?, encoder: a.encoder.into(), config, out: abs(&a.out)? };
            let resp = client.train(&req, progress).await?;
            print_json(&resp)?;
        }
        Command::Bench(a) => {
            let req = BenchRequest {
                corpus_dir: abs(&a.corpus)?,
                checkpoints: checkpoints(&a.checkpoints)?,
                solvers: a.solvers,
                budget: (&a.budget).into(),
                seed: a.seed,
                max_theorems_per_package: a.max_theorems_per_package,
                workers: a.workers,
                out_dir: abs(&a.out)?,
            };
            let resp = client.bench(&req, progress).await?;
            for (solver, rate) in &resp.pass_rates {
                println!("{solver:<32} {:>6.1}%", rate * 100.0);
            }
            println!("results: {}", resp.results_csv.display());
            println!("manifest: {}", resp.run_manifest.display());
        }
        Command::Report(a) => {
            let aggregates = a.aggregates.iter().map(|s| s.split('+').map(str::to_string).collect()).collect();
            let req = ReportRequest { results_csv: abs(&a.results)?, out_dir: abs(&a.out)?, aggregates, budget: (&a.budget).into() };
            let resp = client.report(&req).await?;
            for (solver, rate) in &resp.pass_rates {
                println!("{solver:<48} {:>6.1}%", rate * 100.0);
            }
            for f in &resp.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Solve(a) => {
            let req = SolveRequest {
                corpus_dir: abs(&a.corpus)?,
                theorem: a.theorem,
                solver: a.solver,
                checkpoints: checkpoints(&a.checkpoints)?,
                budget: (&a.budget).into(),
            };
            let r = client.solve(&req).await?;
            if r.solved {
                println!("proved {} in {:.3}s, {} model calls: {}", r.theorem_name, r.wall_time, r.model_calls, r.proof);
            } else {
                println!("not proved {} ({:.3}s, {} model calls)", r.theorem_name, r.wall_time, r.model_calls);
            }
        }
        Command::Graph { command: GraphCommand::Dump { corpus, definitions, max_nodes } } => {
            let req = GraphDumpRequest { corpus_dir: abs(&corpus)?, definitions, max_nodes };
            print!("{}", client.graph_dump(&req).await?.text);
        }
        Command::ExportEmbeddings(a) => {
            let corpus_dir = a.corpus.as_deref().map(abs).transpose()?;
            let req = ExportEmbeddingsRequest { checkpoint: abs(&a.checkpoint)?, corpus_dir };
            let text = client.export_embeddings(&req).await?.text;
            match &a.out {
                Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}
