//! Request/response types of the HTTP service and the blocking operations
//! behind each endpoint. Paths are interpreted on the machine running the
//! operation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Checkpoint};
use crate::bench::pipeline::{intern_corpus, train_model, TrainConfig, TrainReport};
use crate::bench::{
    aggregate_solvers, read_records_csv, run_benchmark, solve_one, summarize, write_records_csv, BenchContext,
    BenchError, BenchRecord, Encoder, Models, Report, RunManifest, SolverId,
};
use crate::corpus::{generate_corpus, load_corpus, write_corpus, Corpus, CorpusError, CorpusManifest, CorpusSpec, SplitManifest, MANIFEST_FILE};
use crate::g2t::{export_embeddings, Model, ModelError};
use crate::graph::{dump_input_graph, GraphError, DEFAULT_MAX_NODES};
use crate::kernel::DefId;
use crate::search::SearchBudget;

pub const RESULTS_FILE: &str = "results.csv";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{0}")]
    Internal(String),
}

impl From<CorpusError> for ApiError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => ApiError::NotFound(e.to_string()),
            CorpusError::Parse { .. } | CorpusError::Manifest(_) => ApiError::BadRequest(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<BenchError> for ApiError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::UnknownSolver(_) | BenchError::MissingModel(_) | BenchError::MismatchedTheoremSets | BenchError::Csv(_) => {
                ApiError::BadRequest(e.to_string())
            }
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::BadCheckpoint(_) => ApiError::BadRequest(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<GraphError> for ApiError {
    fn from(e: GraphError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl From<AutodiffError> for ApiError {
    fn from(e: AutodiffError) -> Self {
        match e {
            AutodiffError::Io(e) => e.into(),
            other => ApiError::BadRequest(other.to_string()),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::NotFound => ApiError::NotFound(e.to_string()),
            _ => ApiError::Internal(e.to_string()),
        }
    }
}

fn default_fraction() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    #[serde(default)]
    pub spec: CorpusSpec,
    pub out_dir: PathBuf,
    /// Target fraction of proof states in training packages.
    #[serde(default = "default_fraction")]
    pub split_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub manifest_path: PathBuf,
    pub manifest: CorpusManifest,
}

pub fn generate(req: &GenerateRequest) -> Result<GenerateResponse, ApiError> {
    if !(0.0..=1.0).contains(&req.split_fraction) {
        return Err(ApiError::BadRequest(format!("split fraction {} outside [0, 1]", req.split_fraction)));
    }
    let corpus = generate_corpus(&req.spec)?;
    let split = corpus.split(req.split_fraction, req.split_seed)?;
    let manifest = write_corpus(&corpus, Some(&split), &req.out_dir)?;
    Ok(GenerateResponse { manifest_path: req.out_dir.join(MANIFEST_FILE), manifest })
}

fn load_with_split(dir: &Path) -> Result<(Corpus, SplitManifest, String), ApiError> {
    let (corpus, manifest) = load_corpus(dir)?;
    let split = manifest
        .split
        .ok_or_else(|| ApiError::BadRequest(format!("{} has no train/test split", dir.display())))?;
    let bytes = std::fs::read(dir.join(MANIFEST_FILE))?;
    Ok((corpus, split, hash_hex(&bytes)))
}

fn hash_hex(bytes: &[u8]) -> String {
    format!("{:016x}", xxhash_rust::xxh3::xxh3_64(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub corpus_dir: PathBuf,
    pub encoder: Encoder,
    #[serde(default)]
    pub config: TrainConfig,
    /// Checkpoint file to write.
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub checkpoint: PathBuf,
    /// xxh3-64 of the checkpoint bytes, hex.
    pub checkpoint_hash: String,
    pub report: TrainReport,
}

/// The model configuration an encoder implies.
pub fn encoder_config(encoder: Encoder, mut cfg: TrainConfig) -> TrainConfig {
    cfg.model.definition_task = encoder != Encoder::NoDef;
    cfg.model.use_names = encoder == Encoder::Named;
    cfg
}

pub fn train(req: &TrainRequest, progress: impl FnMut(usize, f64)) -> Result<TrainResponse, ApiError> {
    let (corpus, split, _) = load_with_split(&req.corpus_dir)?;
    let graph = intern_corpus(&corpus)?;
    let cfg = encoder_config(req.encoder, req.config.clone());
    let mut progress = progress;
    let (model, report) = train_model(&corpus, &graph, &split, &cfg, |s, l| progress(s, l.total))?;
    let bytes = model.to_checkpoint().to_bytes();
    if let Some(dir) = req.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&req.out, &bytes)?;
    Ok(TrainResponse { checkpoint: req.out.clone(), checkpoint_hash: hash_hex(&bytes), report })
}

pub fn load_model(path: &Path) -> Result<(Model, String), ApiError> {
    let bytes = std::fs::read(path)?;
    let model = Model::from_checkpoint(&Checkpoint::read_from(bytes.as_slice())?)?;
    Ok((model, hash_hex(&bytes)))
}

/// Checkpoints keyed by encoder name (`anon`, `named`, `nodef`).
pub type CheckpointPaths = BTreeMap<String, PathBuf>;

fn load_models(paths: &CheckpointPaths) -> Result<(Models, BTreeMap<String, String>), ApiError> {
    let mut models = Models::default();
    let mut hashes = BTreeMap::new();
    for (name, path) in paths {
        let (m, h) = load_model(path)?;
        match name.as_str() {
            "anon" => models.anon = Some(m),
            "named" => models.named = Some(m),
            "nodef" => models.nodef = Some(m),
            other => return Err(ApiError::BadRequest(format!("unknown encoder `{other}`"))),
        }
        hashes.insert(name.clone(), h);
    }
    Ok((models, hashes))
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRequest {
    pub corpus_dir: PathBuf,
    #[serde(default)]
    pub checkpoints: CheckpointPaths,
    pub solvers: Vec<String>,
    #[serde(default)]
    pub budget: SearchBudget,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub max_theorems_per_package: Option<usize>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Directory receiving the results CSV and the run manifest.
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResponse {
    pub results_csv: PathBuf,
    pub run_manifest: PathBuf,
    pub manifest: RunManifest,
    /// Solved fraction per solver.
    pub pass_rates: BTreeMap<String, f64>,
}

fn parse_solvers(names: &[String]) -> Result<Vec<SolverId>, ApiError> {
    names.iter().map(|s| s.parse::<SolverId>().map_err(ApiError::from)).collect()
}

fn pass_rates(records: &[BenchRecord]) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = counts.entry(r.solver.clone()).or_default();
        e.0 += 1;
        e.1 += r.solved as usize;
    }
    counts.into_iter().map(|(s, (n, k))| (s, k as f64 / n as f64)).collect()
}

pub fn bench(req: &BenchRequest) -> Result<BenchResponse, ApiError> {
    let started = Instant::now();
    let solvers = parse_solvers(&req.solvers)?;
    let (corpus, split, corpus_hash) = load_with_split(&req.corpus_dir)?;
    let graph = intern_corpus(&corpus)?;
    let (models, checkpoints) = load_models(&req.checkpoints)?;
    let ctx = BenchContext {
        corpus: &corpus,
        split: &split,
        graph: &graph,
        models: &models,
        max_theorems_per_package: req.max_theorems_per_package,
        workers: req.workers,
    };
    let records = run_benchmark(&ctx, &solvers, req.budget, req.seed)?;
    std::fs::create_dir_all(&req.out_dir)?;
    let results_csv = req.out_dir.join(RESULTS_FILE);
    write_records_csv(&records, std::fs::File::create(&results_csv)?)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        corpus_spec: corpus.spec.clone(),
        corpus_hash,
        split,
        budget: req.budget,
        seed: req.seed,
        solvers: req.solvers.clone(),
        checkpoints,
        records: records.len(),
        results_csv: RESULTS_FILE.to_string(),
        seconds: started.elapsed().as_secs_f64(),
    };
    let run_manifest = req.out_dir.join(RUN_MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    std::fs::write(&run_manifest, json)?;
    Ok(BenchResponse { results_csv, run_manifest, manifest, pass_rates: pass_rates(&records) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRequest {
    pub results_csv: PathBuf,
    pub out_dir: PathBuf,
    /// Aggregate solvers to add, each a list of component solver ids.
    #[serde(default)]
    pub aggregates: Vec<Vec<String>>,
    /// Budget the aggregates must fit in (the run's budget).
    #[serde(default)]
    pub budget: SearchBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub files: Vec<PathBuf>,
    pub pass_rates: BTreeMap<String, f64>,
}

pub fn report(req: &ReportRequest) -> Result<ReportResponse, ApiError> {
    let mut records = read_records_csv(std::fs::File::open(&req.results_csv)?)?;
    if records.is_empty() {
        return Err(ApiError::BadRequest(format!("{} holds no records", req.results_csv.display())));
    }
    for components in &req.aggregates {
        let ids = parse_solvers(components)?;
        let agg = aggregate_solvers(&records, &ids, &req.budget)?;
        if ids.len() > 1 {
            records.extend(agg);
        }
    }
    let summary: Report = summarize(&records);
    summary.write_to_dir(&req.out_dir)?;
    Ok(ReportResponse {
        files: Report::FILES.iter().map(|f| req.out_dir.join(f)).collect(),
        pass_rates: pass_rates(&records),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRequest {
    pub corpus_dir: PathBuf,
    /// Theorem name, e.g. `P3.t7`.
    pub theorem: String,
    pub solver: String,
    #[serde(default)]
    pub checkpoints: CheckpointPaths,
    #[serde(default)]
    pub budget: SearchBudget,
}

pub fn solve(req: &SolveRequest) -> Result<BenchRecord, ApiError> {
    let solver: SolverId = req.solver.parse()?;
    let (corpus, split, _) = load_with_split(&req.corpus_dir)?;
    let t = theorem_id(&corpus, &req.theorem)?;
    let graph = intern_corpus(&corpus)?;
    let (models, _) = load_models(&req.checkpoints)?;
    let ctx = BenchContext { corpus: &corpus, split: &split, graph: &graph, models: &models, max_theorems_per_package: None, workers: 1 };
    Ok(solve_one(&ctx, &solver, t, req.budget, 0)?)
}

fn theorem_id(corpus: &Corpus, name: &str) -> Result<DefId, ApiError> {
    let d = corpus.env.lookup(name).ok_or_else(|| ApiError::NotFound(format!("definition `{name}`")))?;
    if !corpus.env.def(d).is_theorem() {
        return Err(ApiError::BadRequest(format!("`{name}` is not a theorem")));
    }
    Ok(d)
}

fn default_max_nodes() -> usize {
    DEFAULT_MAX_NODES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDumpRequest {
    pub corpus_dir: PathBuf,
    /// Definitions whose forward closure is dumped (as one multi-root graph).
    pub definitions: Vec<String>,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextResponse {
    pub text: String,
}

pub fn graph_dump(req: &GraphDumpRequest) -> Result<TextResponse, ApiError> {
    if req.definitions.is_empty() {
        return Err(ApiError::BadRequest("no definitions given".into()));
    }
    let (corpus, _) = load_corpus(&req.corpus_dir)?;
    let graph = intern_corpus(&corpus)?;
    let mut roots = Vec::new();
    for name in &req.definitions {
        let d = corpus.env.lookup(name).ok_or_else(|| ApiError::NotFound(format!("definition `{name}`")))?;
        roots.push(graph.def_root(d).expect("corpus is interned"));
    }
    let ig = graph.extract_roots(&roots, req.max_nodes)?;
    Ok(TextResponse { text: dump_input_graph(&ig, &corpus.env) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportEmbeddingsRequest {
    pub checkpoint: PathBuf,
    /// Corpus used to name the rows (ids only when absent).
    #[serde(default)]
    pub corpus_dir: Option<PathBuf>,
}

pub fn export(req: &ExportEmbeddingsRequest) -> Result<TextResponse, ApiError> {
    let (model, _) = load_model(&req.checkpoint)?;
    let corpus = match &req.corpus_dir {
        Some(dir) => Some(load_corpus(dir)?.0),
        None => None,
    };
    let name = |d: DefId| match &corpus {
        Some(c) => c.env.get(d).map_or_else(|| format!("#{}", d.0), |x| x.name.clone()),
        None => format!("#{}", d.0),
    };
    Ok(TextResponse { text: export_embeddings(&model, name) })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    /// `train` or `bench`.
    pub kind: String,
    pub state: JobState,
    /// Free-form progress line (last training step, ...).
    #[serde(default)]
    pub progress: Option<String>,
    #[serde(default)]
    pub result: Option<serde_json::Value>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}
