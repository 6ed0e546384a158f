use std::collections::{BTreeMap, HashSet};

use super::FeatureSet;

pub const DEFAULT_TREES: usize = 16;
pub const DEFAULT_DEPTH: usize = 12;

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Locality-sensitive hashing forest over minhash signatures. Each tree keys
/// examples by a `depth`-long minhash prefix; queries descend by shortening
/// the matched prefix until enough candidates are found.
#[derive(Debug, Clone)]
pub struct LshForest {
    depth: usize,
    seeds: Vec<u64>,
    trees: Vec<BTreeMap<Vec<u64>, Vec<usize>>>,
    len: usize,
}

impl LshForest {
    pub fn new(trees: usize, depth: usize) -> Self {
        let seeds = (0..trees * depth).map(|i| mix(0x4c534846 ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15))).collect();
        LshForest { depth, seeds, trees: vec![BTreeMap::new(); trees], len: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn signature(&self, f: &FeatureSet) -> Vec<u64> {
        self.seeds
            .iter()
            .map(|s| f.as_slice().iter().map(|x| mix(x ^ s)).min().unwrap_or(u64::MAX))
            .collect()
    }

    pub fn insert(&mut self, id: usize, f: &FeatureSet) {
        let sig = self.signature(f);
        for (t, tree) in self.trees.iter_mut().enumerate() {
            let key = sig[t * self.depth..(t + 1) * self.depth].to_vec();
            tree.entry(key).or_default().push(id);
        }
        self.len += 1;
    }

    /// Candidates sharing the longest possible prefix in any tree, shortened
    /// until at least `min_candidates` accepted ids are gathered (or the
    /// forest is exhausted). Returned in ascending id order.
    pub fn query(&self, f: &FeatureSet, min_candidates: usize, accept: impl Fn(usize) -> bool) -> Vec<usize> {
        let sig = self.signature(f);
        let mut found: HashSet<usize> = HashSet::new();
        for prefix in (0..=self.depth).rev() {
            for (t, tree) in self.trees.iter().enumerate() {
                let key = &sig[t * self.depth..t * self.depth + prefix];
                let mut lo = key.to_vec();
                lo.resize(self.depth, 0);
                let mut hi = key.to_vec();
                hi.resize(self.depth, u64::MAX);
                for ids in tree.range(lo..=hi).map(|(_, v)| v) {
                    found.extend(ids.iter().copied().filter(|&i| accept(i)));
                }
            }
            if found.len() >= min_candidates {
                break;
            }
        }
        let mut out: Vec<usize> = found.into_iter().collect();
        out.sort_unstable();
        out
    }
}
