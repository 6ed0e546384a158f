//! Evaluation harness: solver × theorem grids under budgets with the online
//! protocol, aggregate solvers, summaries, and the on-disk result formats.

pub mod pipeline;
mod report;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use report::{
    aggregate_solvers, dependency_bucket, read_records_csv, summarize, write_records_csv, Report, BUCKETS, CSV_HEADER,
};

use crate::corpus::{Corpus, SplitManifest};
use crate::g2t::{ClusterInput, InferenceMode, Model, ModelError};
use crate::graph::{GraphError, MonoGraph};
use crate::kernel::syntax::print_script;
use crate::kernel::{check_proof, DefId, PackageId};
use crate::knn::{FeatureSet, KnnConfig, Origin, Scope, Variant};
use crate::search::{solve_theorem, SearchBudget, SearchStats};
use crate::kernel::TacticInvocation;
use pipeline::{cluster_inputs, import_database, G2tSuggester, KnnSuggester};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no trained {0} model supplied")]
    MissingModel(&'static str),
    #[error("aggregate components were run on different theorem sets")]
    MismatchedTheoremSets,
    #[error("unknown solver `{0}`")]
    UnknownSolver(String),
    #[error("results csv: {0}")]
    Csv(String),
}

/// Which trained network a g2t solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoder {
    /// Definition task, no name encoder.
    Anon,
    /// Definition task with the name encoder.
    Named,
    /// Trained without the definition task.
    NoDef,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverId {
    Knn { variant: Variant, scope: Scope },
    G2t { encoder: Encoder, mode: InferenceMode },
    /// The t/n combination of component solvers.
    Aggregate(Vec<SolverId>),
}

impl SolverId {
    pub fn knn(variant: Variant, scope: Scope) -> Self {
        SolverId::Knn { variant, scope }
    }

    pub fn g2t(encoder: Encoder, mode: InferenceMode) -> Self {
        SolverId::G2t { encoder, mode }
    }

    pub fn is_online(&self) -> bool {
        match self {
            SolverId::Knn { scope, .. } => *scope != Scope::Offline,
            SolverId::G2t { mode, .. } => mode.uses_definition_task(),
            SolverId::Aggregate(c) => c.iter().any(|s| s.is_online()),
        }
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverId::Knn { variant, scope } => {
                let v = match variant {
                    Variant::Recent => "recent",
                    Variant::Lshf => "lshf",
                };
                write!(f, "knn-{v}-{}", scope.name())
            }
            SolverId::G2t { encoder, mode } => {
                let e = match encoder {
                    Encoder::Anon => "anon",
                    Encoder::Named => "named",
                    Encoder::NoDef => "nodef",
                };
                let m = match mode {
                    InferenceMode::NoDefFrozen => "frozen",
                    other => other.name(),
                };
                write!(f, "g2t-{e}-{m}")
            }
            SolverId::Aggregate(parts) => {
                let names: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "agg({})", names.join("+"))
            }
        }
    }
}

impl FromStr for SolverId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || BenchError::UnknownSolver(s.to_string());
        if let Some(inner) = s.strip_prefix("agg(").and_then(|r| r.strip_suffix(')')) {
            let parts = inner.split('+').map(str::parse).collect::<Result<Vec<SolverId>, _>>()?;
            return Ok(SolverId::Aggregate(parts));
        }
        let parts: Vec<&str> = s.split('-').collect();
        match parts.as_slice() {
            ["knn", v, sc] => {
                let variant = match *v {
                    "recent" => Variant::Recent,
                    "lshf" => Variant::Lshf,
                    _ => return Err(unknown()),
                };
                let scope = match *sc {
                    "online" => Scope::Online,
                    "allButFile" => Scope::AllButFile,
                    "offline" => Scope::Offline,
                    _ => return Err(unknown()),
                };
                Ok(SolverId::knn(variant, scope))
            }
            ["g2t", e, m] => {
                let encoder = match *e {
                    "anon" => Encoder::Anon,
                    "named" => Encoder::Named,
                    "nodef" => Encoder::NoDef,
                    _ => return Err(unknown()),
                };
                let mode = match (*m, encoder) {
                    ("frozen", Encoder::NoDef) => InferenceMode::NoDefFrozen,
                    (_, Encoder::NoDef) => return Err(unknown()),
                    ("update", _) => InferenceMode::Update,
                    ("recalc", _) => InferenceMode::Recalc,
                    ("frozen", _) => InferenceMode::Frozen,
                    _ => return Err(unknown()),
                };
                Ok(SolverId::g2t(encoder, mode))
            }
            _ => Err(unknown()),
        }
    }
}

/// Outcome of one (solver, theorem) attempt; one line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub solver: String,
    pub theorem: u32,
    pub theorem_name: String,
    pub package: u32,
    pub solved: bool,
    /// Seconds.
    pub wall_time: f64,
    pub model_calls: u64,
    pub tactic_executions: u64,
    pub new_deps: usize,
    pub seed: u64,
    /// The replay-verified proof script (empty when unsolved).
    pub proof: String,
}

/// Trained networks available to g2t solvers.
#[derive(Default)]
pub struct Models {
    pub anon: Option<Model>,
    pub named: Option<Model>,
    pub nodef: Option<Model>,
}

impl Models {
    fn get(&self, e: Encoder) -> Result<&Model, BenchError> {
        let (m, name) = match e {
            Encoder::Anon => (&self.anon, "anon"),
            Encoder::Named => (&self.named, "named"),
            Encoder::NoDef => (&self.nodef, "nodef"),
        };
        m.as_ref().ok_or(BenchError::MissingModel(name))
    }
}

/// Everything a benchmark run reads; immutable and shared by workers.
pub struct BenchContext<'a> {
    pub corpus: &'a Corpus,
    pub split: &'a SplitManifest,
    pub graph: &'a MonoGraph,
    pub models: &'a Models,
    /// Per-package cap on attempted theorems (file order), if any.
    pub max_theorems_per_package: Option<usize>,
    pub workers: usize,
}

impl BenchContext<'_> {
    /// Test theorems in evaluation order: packages in split order, file
    /// order within a package.
    pub fn test_theorems(&self, p: PackageId) -> Vec<DefId> {
        let all = self.corpus.theorems(p);
        match self.max_theorems_per_package {
            Some(n) => all.take(n).collect(),
            None => all.collect(),
        }
    }

    fn train_defs(&self) -> BTreeSet<DefId> {
        self.corpus.defs_of(&self.split.train)
    }
}

/// Ground-truth examples of one theorem, computed once per run.
struct ExampleCache {
    slots: Vec<Mutex<Option<std::sync::Arc<Vec<(FeatureSet, TacticInvocation)>>>>>,
}

impl ExampleCache {
    fn new(n: usize) -> Self {
        ExampleCache { slots: (0..n).map(|_| Mutex::new(None)).collect() }
    }

    fn get(&self, corpus: &Corpus, t: DefId) -> std::sync::Arc<Vec<(FeatureSet, TacticInvocation)>> {
        let mut slot = self.slots[t.index()].lock().expect("cache lock");
        slot.get_or_insert_with(|| std::sync::Arc::new(pipeline::theorem_examples(corpus, t))).clone()
    }
}

/// Runs every solver on every test theorem. Jobs are (solver, test package)
/// pairs spread over `ctx.workers` threads; records come back sorted by
/// (solver order, theorem).
pub fn run_benchmark(
    ctx: &BenchContext<'_>,
    solvers: &[SolverId],
    budget: SearchBudget,
    seed: u64,
) -> Result<Vec<BenchRecord>, BenchError> {
    for s in solvers {
        if let SolverId::G2t { encoder, .. } = s {
            ctx.models.get(*encoder)?;
        }
        if matches!(s, SolverId::Aggregate(_)) {
            return Err(BenchError::UnknownSolver(format!("{s} (aggregates are derived, not run)")));
        }
    }
    let train_defs = ctx.train_defs();
    let cache = ExampleCache::new(ctx.corpus.env.len());
    let jobs: Vec<(usize, PackageId)> =
        (0..solvers.len()).flat_map(|i| ctx.split.test.iter().map(move |p| (i, *p))).collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Vec<BenchRecord>)>> = Mutex::new(Vec::new());
    let first_error: Mutex<Option<BenchError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..ctx.workers.max(1) {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(si, p)) = jobs.get(j) else { break };
                match run_package(ctx, &solvers[si], p, budget, seed, &train_defs, &cache) {
                    Ok(recs) => results.lock().expect("results lock").push((si, recs)),
                    Err(e) => {
                        first_error.lock().expect("error lock").get_or_insert(e);
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().expect("error lock") {
        return Err(e);
    }
    let mut out: Vec<BenchRecord> = results.into_inner().expect("results lock").into_iter().flat_map(|(_, r)| r).collect();
    let order = |name: &str| solvers.iter().position(|s| s.to_string() == name).unwrap_or(usize::MAX);
    out.sort_by(|a, b| order(&a.solver).cmp(&order(&b.solver)).then(a.theorem.cmp(&b.theorem)));
    Ok(out)
}

fn record(
    ctx: &BenchContext<'_>,
    solver: &SolverId,
    t: DefId,
    stats: &SearchStats<TacticInvocation>,
    new_deps: usize,
    seed: u64,
) -> BenchRecord {
    let def = ctx.corpus.env.def(t);
    let script = stats.script().filter(|s| check_proof(def, s, &ctx.corpus.env));
    if stats.solved && script.is_none() {
        tracing::error!(theorem = %def.name, solver = %solver, "reported proof failed to replay; recorded as unsolved");
    }
    BenchRecord {
        solver: solver.to_string(),
        theorem: t.0,
        theorem_name: def.name.clone(),
        package: def.package.0,
        solved: script.is_some(),
        wall_time: stats.wall_time,
        model_calls: stats.model_calls,
        tactic_executions: stats.tactic_executions,
        new_deps,
        seed,
        proof: script.map(|s| print_script(&s, &ctx.corpus.env)).unwrap_or_default(),
    }
}

/// Clusters whose rows a g2t solver needs for package `p`: the test
/// packages it imports (in split order), then `p` itself.
fn test_clusters(ctx: &BenchContext<'_>, p: PackageId, max_nodes: usize) -> Result<Vec<ClusterInput>, BenchError> {
    let closure = ctx.corpus.dependency_closure(p);
    let packages: Vec<PackageId> =
        ctx.split.order.iter().copied().filter(|q| *q == p || (closure.contains(q) && !ctx.split.is_train(*q))).collect();
    cluster_inputs(ctx.corpus, ctx.graph, &packages, max_nodes)
}

fn run_package(
    ctx: &BenchContext<'_>,
    solver: &SolverId,
    p: PackageId,
    budget: SearchBudget,
    seed: u64,
    train_defs: &BTreeSet<DefId>,
    cache: &ExampleCache,
) -> Result<Vec<BenchRecord>, BenchError> {
    let theorems = ctx.test_theorems(p);
    let mut out = Vec::with_capacity(theorems.len());
    match solver {
        SolverId::Knn { variant, scope } => {
            let config = KnnConfig::new(*variant, *scope);
            let mut db = import_database(ctx.corpus, ctx.split, p, &|t| cache.get(ctx.corpus, t).to_vec());
            let started = Instant::now();
            for &t in &theorems {
                let stats = solve_theorem(ctx.corpus.env.def(t), &ctx.corpus.env, KnnSuggester { db: &db, config }, budget);
                out.push(record(ctx, solver, t, &stats, ctx.corpus.count_new_dependencies(t, train_defs), seed));
                // The file's human proof becomes visible to later theorems.
                for (f, inv) in cache.get(ctx.corpus, t).iter() {
                    db.insert(f, inv.clone(), Origin::CurrentFile);
                }
            }
            tracing::info!(solver = %solver, package = p.0, seconds = started.elapsed().as_secs_f64(), "package done");
        }
        SolverId::G2t { encoder, mode } => {
            let mut model = ctx.models.get(*encoder)?.clone();
            let updated = test_clusters(ctx, p, model.config.max_nodes)
                .and_then(|c| model.update_definition_table(&c, *mode).map(|_| ()).map_err(BenchError::from));
            let started = Instant::now();
            for &t in &theorems {
                let new_deps = ctx.corpus.count_new_dependencies(t, train_defs);
                let stats = match &updated {
                    Ok(()) => {
                        let suggester = G2tSuggester { model: &model, globals: ctx.corpus.available_globals(t) };
                        solve_theorem(ctx.corpus.env.def(t), &ctx.corpus.env, suggester, budget)
                    }
                    Err(e) => {
                        // The package's theorems are recorded as unsolved
                        // rather than aborting the run.
                        tracing::error!(solver = %solver, package = p.0, error = %e, "definition update failed");
                        failed_attempt()
                    }
                };
                out.push(record(ctx, solver, t, &stats, new_deps, seed));
            }
            tracing::info!(solver = %solver, package = p.0, seconds = started.elapsed().as_secs_f64(), "package done");
        }
        SolverId::Aggregate(_) => unreachable!("rejected above"),
    }
    Ok(out)
}

/// Attempts a single theorem under the protocol of [`run_benchmark`]: the
/// k-NN database holds the imports plus the ground truth of the theorems
/// before it in its file; g2t solvers first update their table with the
/// clusters of the theorem's package and its imported test packages.
pub fn solve_one(
    ctx: &BenchContext<'_>,
    solver: &SolverId,
    t: DefId,
    budget: SearchBudget,
    seed: u64,
) -> Result<BenchRecord, BenchError> {
    let def = ctx.corpus.env.def(t);
    let p = def.package;
    let new_deps = ctx.corpus.count_new_dependencies(t, &ctx.train_defs());
    let stats = match solver {
        SolverId::Knn { variant, scope } => {
            let examples = |d| pipeline::theorem_examples(ctx.corpus, d);
            let mut db = import_database(ctx.corpus, ctx.split, p, &examples);
            for earlier in ctx.corpus.theorems(p).take_while(|d| *d != t) {
                for (f, inv) in examples(earlier) {
                    db.insert(&f, inv, Origin::CurrentFile);
                }
            }
            let config = KnnConfig::new(*variant, *scope);
            solve_theorem(def, &ctx.corpus.env, KnnSuggester { db: &db, config }, budget)
        }
        SolverId::G2t { encoder, mode } => {
            let mut model = ctx.models.get(*encoder)?.clone();
            let clusters = test_clusters(ctx, p, model.config.max_nodes)?;
            model.update_definition_table(&clusters, *mode)?;
            let suggester = G2tSuggester { model: &model, globals: ctx.corpus.available_globals(t) };
            solve_theorem(def, &ctx.corpus.env, suggester, budget)
        }
        SolverId::Aggregate(_) => {
            return Err(BenchError::UnknownSolver(format!("{solver} (aggregates are derived, not run)")))
        }
    };
    Ok(record(ctx, solver, t, &stats, new_deps, seed))
}

fn failed_attempt() -> SearchStats<TacticInvocation> {
    SearchStats {
        model_calls: 0,
        tactic_executions: 0,
        wall_time: 0.0,
        iterations: 0,
        solved: false,
        proof: None,
        cost: None,
        outcome: crate::search::Outcome::SearchExhausted,
        model_failures: 1,
        thresholds: Vec::new(),
        peak_stack: 0,
        max_path_len: 0,
    }
}

/// Reproducibility record written next to the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub corpus_spec: crate::corpus::CorpusSpec,
    /// xxh3 of the corpus manifest JSON, hex.
    pub corpus_hash: String,
    pub split: SplitManifest,
    pub budget: SearchBudget,
    pub seed: u64,
    pub solvers: Vec<String>,
    /// Checkpoint name → xxh3 of its bytes, hex.
    pub checkpoints: std::collections::BTreeMap<String, String>,
    pub records: usize,
    pub results_csv: String,
    pub seconds: f64,
}
