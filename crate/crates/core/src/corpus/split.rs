use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Package};
use crate::kernel::PackageId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub target_fraction: f64,
    /// The random topological order the split is a prefix of.
    pub order: Vec<PackageId>,
    pub train: Vec<PackageId>,
    pub test: Vec<PackageId>,
    /// Fraction of proof states in training packages.
    pub achieved_fraction: f64,
}

impl SplitManifest {
    pub fn is_train(&self, p: PackageId) -> bool {
        self.train.contains(&p)
    }

    /// True iff no training package imports a test package.
    pub fn is_dependency_closed(&self, packages: &[Package]) -> bool {
        let test: BTreeSet<PackageId> = self.test.iter().copied().collect();
        self.train.iter().all(|p| packages[p.0 as usize].imports.iter().all(|q| !test.contains(q)))
    }
}

/// Draws a seeded random topological order of the import graph and splits
/// it at the prefix whose share of proof states (`states[i]` for package
/// `i`) is closest to `target_fraction`, keeping at least one package on
/// each side. Ties go to the shorter prefix.
pub fn split_train_test(
    packages: &[Package],
    states: &[usize],
    target_fraction: f64,
    seed: u64,
) -> Result<SplitManifest, CorpusError> {
    let n = packages.len();
    let mut indegree = vec![0usize; n];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for p in packages {
        for q in &p.imports {
            indegree[p.id.0 as usize] += 1;
            users[q.0 as usize].push(p.id.0 as usize);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ready: Vec<usize> = (0..n).filter(|i| indegree[*i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while !ready.is_empty() {
        ready.sort_unstable();
        let i = ready.swap_remove(rng.gen_range(0..ready.len()));
        order.push(PackageId(i as u32));
        for &u in &users[i] {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.push(u);
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|i| indegree[*i] > 0).unwrap_or(0);
        return Err(CorpusError::CycleDetected(PackageId(stuck as u32)));
    }
    let total: usize = states.iter().sum::<usize>().max(1);
    let mut best = (f64::INFINITY, n.min(1), 0.0);
    let mut acc = 0usize;
    for k in 1..n {
        acc += states[order[k - 1].0 as usize];
        let frac = acc as f64 / total as f64;
        let err = (frac - target_fraction).abs();
        if err < best.0 {
            best = (err, k, frac);
        }
    }
    let (_, k, achieved_fraction) = best;
    let manifest = SplitManifest {
        seed,
        target_fraction,
        train: order[..k].to_vec(),
        test: order[k..].to_vec(),
        order,
        achieved_fraction,
    };
    assert!(manifest.is_dependency_closed(packages), "a topological prefix is dependency closed");
    Ok(manifest)
}

impl Corpus {
    pub fn split(&self, target_fraction: f64, seed: u64) -> Result<SplitManifest, CorpusError> {
        let states: Vec<usize> = self.packages.iter().map(|p| self.proof_state_count(p.id)).collect();
        split_train_test(&self.packages, &states, target_fraction, seed)
    }
}
