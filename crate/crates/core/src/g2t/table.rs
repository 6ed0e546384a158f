use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::InferenceMode;
use super::heads::{definition_task, DefinitionInput};
use super::{frozen_row, Model, ModelError};
use crate::autodiff::Tape;
use crate::kernel::DefId;

/// Provenance of a definition-table row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowState {
    #[default]
    Unset,
    /// Trained jointly with the network.
    Learned,
    /// Produced by the definition task at inference time.
    Computed,
    /// Seeded random unit vector (no definition task available).
    FrozenRandom,
}

/// A definition cluster ready for the definition task, with the identity
/// hash of each root (same order as `input.roots`).
#[derive(Debug, Clone)]
pub struct ClusterInput {
    pub input: DefinitionInput,
    pub hashes: Vec<u64>,
}

impl ClusterInput {
    pub fn roots(&self) -> impl Iterator<Item = DefId> + '_ {
        self.input.roots.iter().map(|(_, d)| *d)
    }
}

/// Order-sensitive key of a whole cluster.
pub fn cluster_key(hashes: &[u64]) -> u64 {
    let bytes: Vec<u8> = hashes.iter().flat_map(|h| h.to_le_bytes()).collect();
    xxhash_rust::xxh3::xxh3_64(&bytes)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub def_task_calls: u64,
    pub computed: usize,
    pub aliased: usize,
    pub frozen: usize,
}

impl Model {
    /// Definition-task outputs for every root of a cluster (no dropout).
    pub fn compute_cluster(&self, input: &DefinitionInput) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut tape = Tape::new(&self.params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let outs = definition_task(&mut tape, self, input, false, &mut rng)?;
        Ok(outs.into_iter().map(|v| tape.value(v).data.clone()).collect())
    }

    /// Gives every root a usable row if it has none: an existing row (same
    /// id, or a training definition with the same identity hash), else per
    /// `mode`. Clusters must come in dependency order.
    ///
    /// * `Update`: one definition-task call per cluster with an uncovered root.
    /// * `Recalc`: one call per cluster; every root is (re)computed.
    /// * `Frozen`/`NoDefFrozen`: no calls; uncovered roots get seeded random rows.
    pub fn update_definition_table(
        &mut self,
        clusters: &[ClusterInput],
        mode: InferenceMode,
    ) -> Result<UpdateStats, ModelError> {
        let mut stats = UpdateStats::default();
        for c in clusters {
            if mode == InferenceMode::Recalc {
                let values = self.compute_cluster(&c.input)?;
                stats.def_task_calls += 1;
                self.def_task_calls += 1;
                for (d, v) in c.roots().zip(values) {
                    let row = self.allocate_row(d);
                    self.set_row(row, &v, super::RowState::Computed);
                    stats.computed += 1;
                }
                continue;
            }
            let mut uncovered = Vec::new();
            for (k, d) in c.roots().enumerate() {
                if self.table.usable_row(d).is_some() {
                    continue;
                }
                let alias = self.table.known.get(&c.hashes[k]).map(|r| *r as usize);
                match alias.filter(|r| self.table.state(*r) != RowState::Unset) {
                    Some(r) => {
                        self.table.assign(d, r);
                        stats.aliased += 1;
                    }
                    None => uncovered.push(k),
                }
            }
            if uncovered.is_empty() {
                continue;
            }
            match mode {
                InferenceMode::Update => {
                    let values = self.compute_cluster(&c.input)?;
                    stats.def_task_calls += 1;
                    self.def_task_calls += 1;
                    for k in uncovered {
                        let row = self.allocate_row(c.input.roots[k].1);
                        self.set_row(row, &values[k], RowState::Computed);
                        stats.computed += 1;
                    }
                }
                InferenceMode::Frozen | InferenceMode::NoDefFrozen => {
                    for k in uncovered {
                        let d = c.input.roots[k].1;
                        let row = self.allocate_row(d);
                        let v = frozen_row(self.config.seed, d, self.h());
                        self.set_row(row, &v, RowState::FrozenRandom);
                        stats.frozen += 1;
                    }
                }
                InferenceMode::Recalc => unreachable!(),
            }
        }
        Ok(stats)
    }

    /// Records the identity hashes of training definitions so structurally
    /// identical re-definitions reuse their learned rows.
    pub fn register_known(&mut self, clusters: &[ClusterInput]) {
        for c in clusters {
            for (d, h) in c.roots().zip(&c.hashes) {
                if let Some(r) = self.table.usable_row(d) {
                    self.table.known.entry(*h).or_insert(r as u32);
                }
            }
        }
    }
}
