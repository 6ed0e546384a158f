//! Online/offline k-nearest-neighbour tactic prediction over hand-crafted
//! proof-state features.

mod features;
mod lshf;

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::kernel::TacticInvocation;

pub use features::{
    edge_feature, extract_features, node_feature, path_feature, state_features, state_input_graph, FeatureSet,
};
pub use lshf::{LshForest, DEFAULT_DEPTH, DEFAULT_TREES};

pub const DEFAULT_WINDOW: usize = 1000;
pub const DEFAULT_K: usize = 32;

/// Where a stored example came from, relative to the theorem being attempted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    /// Proofs from imported packages that were part of the training data.
    TrainImport,
    /// Proofs from imported packages outside the training data.
    OtherFile,
    /// Earlier proofs of the file being evaluated.
    CurrentFile,
}

impl Origin {
    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Scope {
    Online,
    AllButFile,
    Offline,
}

impl Scope {
    pub fn sees(self, o: Origin) -> bool {
        match self {
            Scope::Online => true,
            Scope::AllButFile => o != Origin::CurrentFile,
            Scope::Offline => o == Origin::TrainImport,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scope::Online => "online",
            Scope::AllButFile => "allButFile",
            Scope::Offline => "offline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Recent,
    Lshf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub variant: Variant,
    pub scope: Scope,
    pub window: usize,
    pub k: usize,
}

impl KnnConfig {
    pub fn new(variant: Variant, scope: Scope) -> Self {
        KnnConfig { variant, scope, window: DEFAULT_WINDOW, k: DEFAULT_K }
    }
}

#[derive(Debug, Clone)]
pub struct Example {
    /// Dense feature ids, sorted.
    features: Vec<u32>,
    pub tactic: TacticInvocation,
    pub origin: Origin,
    pub seq: u64,
}

/// Per-scope IDF weights, valid for one database version.
#[derive(Debug)]
struct IdfCache {
    version: usize,
    visible: usize,
    idf: Vec<f64>,
    /// Sum of IDF over each example's features; NaN when out of scope.
    weight: Vec<f64>,
}

/// Append-only example store with per-origin document frequencies.
#[derive(Debug)]
pub struct ExampleDb {
    feature_ids: HashMap<u64, u32>,
    df: [Vec<u32>; 3],
    examples: Vec<Example>,
    forest: LshForest,
    cache: Mutex<HashMap<Scope, IdfCache>>,
}

impl Default for ExampleDb {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for ExampleDb {
    fn clone(&self) -> Self {
        ExampleDb {
            feature_ids: self.feature_ids.clone(),
            df: self.df.clone(),
            examples: self.examples.clone(),
            forest: self.forest.clone(),
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl ExampleDb {
    pub fn new() -> Self {
        ExampleDb {
            feature_ids: HashMap::new(),
            df: [Vec::new(), Vec::new(), Vec::new()],
            examples: Vec::new(),
            forest: LshForest::new(DEFAULT_TREES, DEFAULT_DEPTH),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    /// Number of examples in scope that contain feature `h`.
    pub fn document_frequency(&self, h: u64, scope: Scope) -> u32 {
        let Some(&id) = self.feature_ids.get(&h) else { return 0 };
        [Origin::TrainImport, Origin::OtherFile, Origin::CurrentFile]
            .into_iter()
            .filter(|o| scope.sees(*o))
            .map(|o| self.df[o.index()][id as usize])
            .sum()
    }

    pub fn visible_count(&self, scope: Scope) -> usize {
        self.examples.iter().filter(|e| scope.sees(e.origin)).count()
    }

    pub fn insert(&mut self, features: &FeatureSet, tactic: TacticInvocation, origin: Origin) {
        let mut ids: Vec<u32> = features
            .as_slice()
            .iter()
            .map(|h| {
                let next = self.feature_ids.len() as u32;
                *self.feature_ids.entry(*h).or_insert(next)
            })
            .collect();
        ids.sort_unstable();
        let n = self.feature_ids.len();
        for df in &mut self.df {
            df.resize(n, 0);
        }
        for &i in &ids {
            self.df[origin.index()][i as usize] += 1;
        }
        let seq = self.examples.len() as u64;
        self.forest.insert(self.examples.len(), features);
        self.examples.push(Example { features: ids, tactic, origin, seq });
    }

    fn idf_value(visible: usize, df: u32) -> f64 {
        ((1.0 + visible as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    fn with_cache<R>(&self, scope: Scope, f: impl FnOnce(&IdfCache) -> R) -> R {
        let mut guard = self.cache.lock().expect("idf cache poisoned");
        let stale = guard.get(&scope).map_or(true, |c| c.version != self.examples.len());
        if stale {
            let visible = self.visible_count(scope);
            let idf: Vec<f64> = (0..self.feature_ids.len())
                .map(|i| {
                    let df: u32 = [Origin::TrainImport, Origin::OtherFile, Origin::CurrentFile]
                        .into_iter()
                        .filter(|o| scope.sees(*o))
                        .map(|o| self.df[o.index()][i])
                        .sum();
                    Self::idf_value(visible, df)
                })
                .collect();
            let weight = self
                .examples
                .iter()
                .map(|e| {
                    if scope.sees(e.origin) {
                        e.features.iter().map(|&i| idf[i as usize]).sum()
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            guard.insert(scope, IdfCache { version: self.examples.len(), visible, idf, weight });
        }
        f(&guard[&scope])
    }

    /// Ranked tactic suggestions for a query. An empty scope yields an empty
    /// list.
    pub fn suggest(&self, cfg: &KnnConfig, q: &FeatureSet) -> Vec<(TacticInvocation, f64)> {
        let candidates: Vec<usize> = match cfg.variant {
            Variant::Recent => {
                let mut c: Vec<usize> = (0..self.examples.len())
                    .rev()
                    .filter(|&i| cfg.scope.sees(self.examples[i].origin))
                    .take(cfg.window)
                    .collect();
                c.reverse();
                c
            }
            Variant::Lshf => self.forest.query(q, 4 * cfg.k, |i| cfg.scope.sees(self.examples[i].origin)),
        };
        if candidates.is_empty() {
            return Vec::new();
        }
        self.with_cache(cfg.scope, |cache| {
            // Query features: known ones by dense id, unknown ones have df 0.
            let mut qids: Vec<u32> = Vec::with_capacity(q.len());
            let mut q_weight = 0.0;
            for h in q.as_slice() {
                match self.feature_ids.get(h) {
                    Some(&i) => {
                        qids.push(i);
                        q_weight += cache.idf[i as usize];
                    }
                    None => q_weight += Self::idf_value(cache.visible, 0),
                }
            }
            qids.sort_unstable();
            let mut scored: Vec<(f64, u64, usize)> = candidates
                .iter()
                .map(|&i| {
                    let e = &self.examples[i];
                    let inter = intersection_weight(&qids, &e.features, &cache.idf);
                    let union = q_weight + cache.weight[i] - inter;
                    let s = if union > 0.0 { inter / union } else { 0.0 };
                    (s, e.seq, i)
                })
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
            let mut seen = std::collections::HashSet::new();
            let mut out = Vec::new();
            for (s, _, i) in scored {
                let t = &self.examples[i].tactic;
                if seen.insert(t.clone()) {
                    out.push((t.clone(), s));
                    if out.len() == cfg.k {
                        break;
                    }
                }
            }
            out
        })
    }
}

fn intersection_weight(a: &[u32], b: &[u32], idf: &[f64]) -> f64 {
    let (mut i, mut j, mut w) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                w += idf[a[i] as usize];
                i += 1;
                j += 1;
            }
        }
    }
    w
}

pub fn knn_insert(db: &mut ExampleDb, features: &FeatureSet, tactic: TacticInvocation, origin: Origin) {
    db.insert(features, tactic, origin)
}

pub fn knn_suggest(db: &ExampleDb, cfg: &KnnConfig, q: &FeatureSet) -> Vec<(TacticInvocation, f64)> {
    db.suggest(cfg, q)
}

/// Converts similarity scores to step costs: softmax at temperature 1 over
/// the returned list, then negative log.
pub fn scores_to_costs(scores: &[f64]) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    scores.iter().map(|s| lse - s).collect()
}
