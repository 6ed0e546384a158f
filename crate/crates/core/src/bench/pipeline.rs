//! Glue between the corpus and the models: graph construction, training
//! sets, model training and the suggestion sources used by the search.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::corpus::{Corpus, SplitManifest};
use crate::g2t::{ClusterInput, DefSample, DefinitionInput, LossBreakdown, Model, ModelConfig, StateInput, StateSample, Trainer};
use crate::graph::{topo_order, MonoGraph};
use crate::kernel::{DefId, PackageId, ProofState, TacticInvocation};
use crate::knn::{scores_to_costs, state_features, state_input_graph, ExampleDb, FeatureSet, KnnConfig, Origin};
use crate::search::TacticSuggester;

/// Interns every definition of the corpus, in id order.
pub fn intern_corpus(corpus: &Corpus) -> Result<MonoGraph, BenchError> {
    let mut g = MonoGraph::new();
    for d in corpus.env.iter() {
        g.intern_definition(d)?;
    }
    Ok(g)
}

/// Definition-task inputs for the clusters of `packages`, each package's
/// clusters in dependency order, packages in the given order.
pub fn cluster_inputs(
    corpus: &Corpus,
    graph: &MonoGraph,
    packages: &[PackageId],
    max_nodes: usize,
) -> Result<Vec<ClusterInput>, BenchError> {
    let mut out = Vec::new();
    for &p in packages {
        for c in topo_order(&corpus.clusters(p))? {
            let nodes: Vec<_> = c.roots.iter().map(|d| graph.def_root(*d).expect("corpus is interned")).collect();
            let ig = graph.extract_roots(&nodes, max_nodes)?;
            let kinds: Vec<_> = c.roots.iter().map(|d| (*d, corpus.env.def(*d).kind)).collect();
            let names = c.roots.iter().map(|d| corpus.env.def(*d).name.clone()).collect();
            out.push(ClusterInput { input: DefinitionInput::new(ig, names), hashes: graph.cluster_hashes(&kinds) });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub steps: usize,
    /// Subsample of training proof states (all when `None`).
    pub max_states: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { model: ModelConfig::default(), steps: 2000, max_states: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub def_samples: usize,
    pub state_samples: usize,
    /// States dropped because the target is not expressible.
    pub dropped_states: usize,
    pub steps: usize,
    pub seconds: f64,
    pub first: LossBreakdown,
    pub last: LossBreakdown,
    /// Greedy top-1 tactic accuracy on (up to 500) training states.
    pub train_top1: f64,
}

/// Ground-truth (state, invocation) pairs of the training packages with
/// the globals each state may cite.
pub fn training_pairs(corpus: &Corpus, split: &SplitManifest) -> Vec<(ProofState, TacticInvocation, DefId)> {
    let mut out = Vec::new();
    for &p in &split.train {
        for t in corpus.theorems(p) {
            out.extend(corpus.harvest(t).into_iter().map(|(s, i)| (s, i, t)));
        }
    }
    out
}

/// Trains a model on the training packages of `split`.
pub fn train_model(
    corpus: &Corpus,
    graph: &MonoGraph,
    split: &SplitManifest,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, &LossBreakdown),
) -> Result<(Model, TrainReport), BenchError> {
    let started = Instant::now();
    let mut model = Model::new(cfg.model.clone());
    let train_defs: Vec<DefId> = corpus.defs_of(&split.train).into_iter().collect();
    model.init_training_rows(&train_defs);
    model.set_tactic_mask_from_counts(&corpus.tactic_counts(&split.train));
    let clusters = cluster_inputs(corpus, graph, &split.train, cfg.model.max_nodes)?;
    model.register_known(&clusters);
    let defs: Vec<DefSample> = if cfg.model.definition_task {
        clusters.into_iter().map(|c| DefSample { input: c.input }).collect()
    } else {
        Vec::new()
    };
    let mut pairs = training_pairs(corpus, split);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.model.seed ^ 0x7374617465);
    if let Some(m) = cfg.max_states.filter(|m| *m < pairs.len()) {
        let mut keep: Vec<usize> = sample(&mut rng, pairs.len(), m).into_vec();
        keep.sort_unstable();
        pairs = keep.into_iter().map(|i| pairs[i].clone()).collect();
    }
    let total_pairs = pairs.len();
    let mut states = Vec::with_capacity(total_pairs);
    let mut last_theorem = None;
    let mut globals = Vec::new();
    for (state, inv, t) in pairs {
        if last_theorem != Some(t) {
            globals = corpus.available_globals(t);
            last_theorem = Some(t);
        }
        let input = StateInput::new(state_input_graph(&state, cfg.model.max_nodes), &globals, &model);
        if let Some(s) = StateSample::new(input, inv, &model) {
            states.push(s);
        }
    }
    let dropped_states = total_pairs - states.len();
    let mut trainer = Trainer::new(model);
    let mut first = None;
    let mut last = LossBreakdown::default();
    for step in 0..cfg.steps {
        let d: Vec<&DefSample> = pick(&mut rng, &defs, cfg.model.batch_defs);
        let s: Vec<&StateSample> = pick(&mut rng, &states, cfg.model.batch_states);
        last = trainer.train_step(&d, &s)?;
        first.get_or_insert(last);
        progress(step, &last);
    }
    let model = trainer.model;
    let probe: Vec<&StateSample> = states.iter().step_by((states.len() / 500).max(1)).collect();
    let train_top1 = top1_accuracy(&model, &probe)?;
    let report = TrainReport {
        def_samples: defs.len(),
        state_samples: states.len(),
        dropped_states,
        steps: cfg.steps,
        seconds: started.elapsed().as_secs_f64(),
        first: first.unwrap_or_default(),
        last,
        train_top1,
    };
    Ok((model, report))
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T], n: usize) -> Vec<&'a T> {
    if items.is_empty() || n == 0 {
        return Vec::new();
    }
    sample(rng, items.len(), n.min(items.len())).into_iter().map(|i| &items[i]).collect()
}

/// Fraction of samples whose best beam prediction equals the target.
pub fn top1_accuracy(model: &Model, samples: &[&StateSample]) -> Result<f64, BenchError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for s in samples {
        let preds = model.predict(&s.input, model.config.beam_width.max(1))?;
        hits += preds.first().is_some_and(|p| p.tactic == s.target) as usize;
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// A trained model as a suggestion source: beam-search predictions with
/// cost `-log p`, arguments restricted to `globals` with usable rows.
pub struct G2tSuggester<'m> {
    pub model: &'m Model,
    pub globals: Vec<DefId>,
}

impl TacticSuggester for G2tSuggester<'_> {
    fn suggest(&mut self, state: &ProofState) -> Result<Vec<(TacticInvocation, f64)>, String> {
        let ig = state_input_graph(state, self.model.config.max_nodes);
        let input = StateInput::new(ig, &self.globals, self.model);
        let preds = self.model.predict(&input, self.model.config.beam_width.max(1)).map_err(|e| e.to_string())?;
        Ok(preds.into_iter().map(|p| (p.tactic, -p.log_prob)).collect())
    }
}

/// A k-NN database as a suggestion source: similarity scores turned into
/// costs by softmax and negative log.
pub struct KnnSuggester<'d> {
    pub db: &'d ExampleDb,
    pub config: KnnConfig,
}

impl TacticSuggester for KnnSuggester<'_> {
    fn suggest(&mut self, state: &ProofState) -> Result<Vec<(TacticInvocation, f64)>, String> {
        let ranked = self.db.suggest(&self.config, &state_features(state));
        let costs = scores_to_costs(&ranked.iter().map(|(_, s)| *s).collect::<Vec<_>>());
        Ok(ranked.into_iter().map(|(t, _)| t).zip(costs).collect())
    }
}

/// Features of every ground-truth (state, invocation) pair of a theorem.
pub fn theorem_examples(corpus: &Corpus, theorem: DefId) -> Vec<(FeatureSet, TacticInvocation)> {
    corpus.harvest(theorem).into_iter().map(|(s, i)| (state_features(&s), i)).collect()
}

/// Example database visible while evaluating package `p`: ground-truth
/// examples of every imported package, tagged by whether the package was
/// part of training. Current-file examples are added by the caller as the
/// evaluation proceeds.
pub fn import_database(
    corpus: &Corpus,
    split: &SplitManifest,
    p: PackageId,
    examples: &dyn Fn(DefId) -> Vec<(FeatureSet, TacticInvocation)>,
) -> ExampleDb {
    let closure: BTreeSet<PackageId> = corpus.dependency_closure(p);
    let mut db = ExampleDb::new();
    for q in split.order.iter().filter(|q| closure.contains(q)) {
        let origin = if split.is_train(*q) { Origin::TrainImport } else { Origin::OtherFile };
        for t in corpus.theorems(*q) {
            for (f, inv) in examples(t) {
                db.insert(&f, inv, origin);
            }
        }
    }
    db
}
