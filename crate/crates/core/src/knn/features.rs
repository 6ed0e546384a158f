use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::graph::{EdgeLabel, InputGraph, MonoGraph, NodeLabel, DEFAULT_MAX_NODES};
use crate::kernel::ProofState;

/// Sorted, duplicate-free feature hashes of one proof state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureSet(Vec<u64>);

impl FeatureSet {
    pub fn from_hashes(mut hashes: Vec<u64>) -> Self {
        hashes.sort_unstable();
        hashes.dedup();
        FeatureSet(hashes)
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, h: u64) -> bool {
        self.0.binary_search(&h).is_ok()
    }
}

const SEED_NODE: u64 = 0x6e6f6465;
const SEED_EDGE: u64 = 0x65646765;
const SEED_PATH: u64 = 0x70617468;

fn label_code(l: NodeLabel) -> u64 {
    match l {
        NodeLabel::DefNode(d) => (1 << 32) | d.0 as u64,
        other => other.embedding_row().expect("non-definition labels have rows") as u64,
    }
}

fn hash_words(seed: u64, words: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(words.len() * 8);
    for w in words {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    xxh3_64_with_seed(&bytes, seed)
}

pub fn node_feature(l: NodeLabel) -> u64 {
    hash_words(SEED_NODE, &[label_code(l)])
}

pub fn edge_feature(src: NodeLabel, e: EdgeLabel, dst: NodeLabel) -> u64 {
    hash_words(SEED_EDGE, &[label_code(src), e.id() as u64, label_code(dst)])
}

pub fn path_feature(a: NodeLabel, e1: EdgeLabel, b: NodeLabel, e2: EdgeLabel, c: NodeLabel) -> u64 {
    hash_words(SEED_PATH, &[label_code(a), e1.id() as u64, label_code(b), e2.id() as u64, label_code(c)])
}

/// Node labels, labeled edge triples, and every labeled path of length two
/// starting at the goal node.
pub fn extract_features(ig: &InputGraph) -> FeatureSet {
    let mut out: Vec<u64> = ig.labels.iter().map(|l| node_feature(*l)).collect();
    let mut children: Vec<Vec<(EdgeLabel, u32)>> = vec![Vec::new(); ig.labels.len()];
    for &(s, e, d) in &ig.edges {
        out.push(edge_feature(ig.labels[s as usize], e, ig.labels[d as usize]));
        children[s as usize].push((e, d));
    }
    let goal = ig
        .state_root
        .and_then(|r| children[r as usize].iter().find(|(e, _)| *e == EdgeLabel::GoalEdge))
        .map(|(_, g)| *g);
    if let Some(g) = goal {
        let a = ig.labels[g as usize];
        for &(e1, b) in &children[g as usize] {
            for &(e2, c) in &children[b as usize] {
                out.push(path_feature(a, e1, ig.labels[b as usize], e2, ig.labels[c as usize]));
            }
        }
    }
    FeatureSet::from_hashes(out)
}

/// Model input for a single proof state, built in a scratch graph so that the
/// caller's graph is not mutated during search.
pub fn state_input_graph(state: &ProofState, max_nodes: usize) -> InputGraph {
    let mut g = MonoGraph::new();
    let root = g.intern_state(state);
    g.extract_subgraph(root, max_nodes).expect("root was just interned")
}

pub fn state_features(state: &ProofState) -> FeatureSet {
    extract_features(&state_input_graph(state, DEFAULT_MAX_NODES))
}
