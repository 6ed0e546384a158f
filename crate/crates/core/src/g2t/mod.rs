//! The graph-based tactic predictor: embedding tables, message-passing
//! backbone, definition task, tactic head, argument decoder and training.

mod beam;
mod config;
mod gnn;
mod heads;
mod io;
mod table;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softplus_inverse, ParamId, ParamStore, Tensor};
use crate::graph::{EdgeLabel, NodeLabel};
use crate::kernel::{BaseTactic, DefId};

pub use beam::{beam_search, ArgumentDistribution, Candidates, Prediction};
pub use config::{InferenceMode, ModelConfig};
pub use gnn::{gnn_forward, initial_embeddings};
pub use heads::{definition_task, encode_name, DefinitionInput, StateInput, StateOutputs};
pub use io::{export_embeddings, CHECKPOINT_KIND};
pub use table::{cluster_key, ClusterInput, RowState, UpdateStats};
pub use train::{definition_loss, tactic_loss, DefSample, LossBreakdown, StateSample, Trainer};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("definition {0} has no embedding row")]
    UnsetDefinitionRow(DefId),
    #[error("no base tactic is available")]
    NoAvailableTactics,
    #[error("definition table capacity exceeded")]
    CapacityExceeded,
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub l1: Dense,
    pub l2: Dense,
}

/// One message-passing hop. The convolution's dense layer over the
/// concatenation `[edge; source]` is stored as its two row blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopIds {
    pub conv_edge: ParamId,
    pub conv_node: ParamId,
    pub conv_b: ParamId,
    pub mlp: Mlp,
    pub ln_g: ParamId,
    pub ln_b: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NameIds {
    pub chars: ParamId,
    pub fwd: Dense,
    pub bwd: Dense,
    pub out: Dense,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamIds {
    pub node_emb: ParamId,
    pub edge_emb: ParamId,
    pub tactic_emb: ParamId,
    pub def_emb: ParamId,
    pub hops: Vec<HopIds>,
    pub def_head: Mlp,
    pub tactic_head: Mlp,
    pub rnn: [Dense; 2],
    pub local_query: Mlp,
    pub global_query: Mlp,
    pub temperature: ParamId,
    pub names: Option<NameIds>,
}

/// Number of byte values the name encoder embeds.
pub const NAME_VOCAB: usize = 128;

/// Definition-table bookkeeping: which row each definition uses, the state
/// of every row, and the identity hashes of rows learned in training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DefTable {
    rows: Vec<Option<u32>>,
    states: Vec<RowState>,
    /// Identity hash of a training definition -> row.
    pub known: std::collections::BTreeMap<u64, u32>,
}

impl DefTable {
    pub fn row(&self, d: DefId) -> Option<usize> {
        self.rows.get(d.index()).copied().flatten().map(|r| r as usize)
    }

    pub fn state(&self, row: usize) -> RowState {
        self.states.get(row).copied().unwrap_or(RowState::Unset)
    }

    pub fn live(&self) -> usize {
        self.states.len()
    }

    /// Row of `d` if it holds a usable embedding.
    pub fn usable_row(&self, d: DefId) -> Option<usize> {
        self.row(d).filter(|r| self.state(*r) != RowState::Unset)
    }

    pub fn defs_with_rows(&self) -> impl Iterator<Item = (DefId, usize)> + '_ {
        self.rows.iter().enumerate().filter_map(|(d, r)| r.map(|r| (DefId(d as u32), r as usize)))
    }

    pub(crate) fn set_state(&mut self, row: usize, s: RowState) {
        self.states[row] = s;
    }

    pub(crate) fn assign(&mut self, d: DefId, row: usize) {
        if self.rows.len() <= d.index() {
            self.rows.resize(d.index() + 1, None);
        }
        self.rows[d.index()] = Some(row as u32);
    }

    pub(crate) fn allocate(&mut self, d: DefId) -> usize {
        if let Some(r) = self.row(d) {
            return r;
        }
        let r = self.states.len();
        self.states.push(RowState::Unset);
        self.assign(d, r);
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub ids: ParamIds,
    pub table: DefTable,
    /// Base tactics that may be predicted (seen often enough in training).
    pub tactic_mask: [bool; BaseTactic::COUNT],
    /// Number of definition-task evaluations performed by table updates.
    pub def_task_calls: u64,
}

pub(crate) fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect())
}

pub(crate) fn unit_rows(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let mut t = Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect());
    t.normalize_rows();
    t
}

/// A seeded random unit vector for `d`, independent of evaluation order.
pub fn frozen_row(seed: u64, d: DefId, h: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x46524f5a_u64 << 32) ^ d.0 as u64);
    unit_rows(&mut rng, 1, h).data
}

impl Model {
    pub fn new(config: ModelConfig) -> Self {
        let h = config.h;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut ps = ParamStore::new();
        let dense = |ps: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, i: usize, o: usize| Dense {
            w: ps.add(&format!("{name}.w"), glorot(rng, i, o)),
            b: ps.add(&format!("{name}.b"), Tensor::zeros(1, o)),
        };
        let mlp = |ps: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, i: usize, m: usize, o: usize| Mlp {
            l1: dense(ps, rng, &format!("{name}.l1"), i, m),
            l2: dense(ps, rng, &format!("{name}.l2"), m, o),
        };
        let node_emb = ps.add("node_emb", unit_rows(&mut rng, NodeLabel::EMBEDDED_KINDS, h));
        let edge_emb = ps.add("edge_emb", unit_rows(&mut rng, EdgeLabel::MESSAGE_LABELS, h));
        let tactic_emb = ps.add("tactic_emb", unit_rows(&mut rng, BaseTactic::COUNT, h));
        let def_emb = ps.add("def_emb", Tensor::zeros(config.def_capacity.max(1), h));
        let hops = (0..config.hops)
            .map(|t| HopIds {
                conv_edge: ps.add(&format!("hop{t}.conv.w_edge"), glorot(&mut rng, h, h)),
                conv_node: ps.add(&format!("hop{t}.conv.w_node"), glorot(&mut rng, h, h)),
                conv_b: ps.add(&format!("hop{t}.conv.b"), Tensor::zeros(1, h)),
                mlp: mlp(&mut ps, &mut rng, &format!("hop{t}.mlp"), h, 2 * h, h),
                ln_g: ps.add(&format!("hop{t}.ln.g"), Tensor::row_vector(vec![1.0; h])),
                ln_b: ps.add(&format!("hop{t}.ln.b"), Tensor::zeros(1, h)),
            })
            .collect();
        let def_in = if config.use_names { 3 * h } else { 2 * h };
        let def_head = mlp(&mut ps, &mut rng, "def_head", def_in, h, h);
        let tactic_head = mlp(&mut ps, &mut rng, "tactic_head", h, h, h);
        let rnn = [dense(&mut ps, &mut rng, "rnn.l0", 2 * h, 2 * h), dense(&mut ps, &mut rng, "rnn.l1", 2 * h, 2 * h)];
        let local_query = mlp(&mut ps, &mut rng, "local_query", h, h, h);
        let global_query = mlp(&mut ps, &mut rng, "global_query", h, h, h);
        let temperature = ps.add("temperature", Tensor::scalar(softplus_inverse(1.0)));
        let names = config.use_names.then(|| NameIds {
            chars: ps.add("name.chars", unit_rows(&mut rng, NAME_VOCAB, h)),
            fwd: dense(&mut ps, &mut rng, "name.fwd", 2 * h, h),
            bwd: dense(&mut ps, &mut rng, "name.bwd", 2 * h, h),
            out: dense(&mut ps, &mut rng, "name.out", 2 * h, h),
        });
        let ids = ParamIds {
            node_emb,
            edge_emb,
            tactic_emb,
            def_emb,
            hops,
            def_head,
            tactic_head,
            rnn,
            local_query,
            global_query,
            temperature,
            names,
        };
        Model {
            config,
            params: ps,
            ids,
            table: DefTable::default(),
            tactic_mask: [true; BaseTactic::COUNT],
            def_task_calls: 0,
        }
    }

    pub fn h(&self) -> usize {
        self.config.h
    }

    pub fn def_row(&self, row: usize) -> &[f64] {
        self.params.get(self.ids.def_emb).row(row)
    }

    pub fn def_embedding(&self, d: DefId) -> Option<&[f64]> {
        self.table.usable_row(d).map(|r| self.def_row(r))
    }

    /// Allocates a row for `d` (growing the table if needed) and returns it.
    pub fn allocate_row(&mut self, d: DefId) -> usize {
        let r = self.table.allocate(d);
        let t = self.params.get(self.ids.def_emb);
        if r >= t.rows {
            let (rows, cols) = (t.rows, t.cols);
            let new_rows = (2 * rows).max(r + 1);
            tracing::warn!(old = rows, new = new_rows, "definition table capacity exceeded; growing");
            let t = self.params.get_mut(self.ids.def_emb);
            t.data.resize(new_rows * cols, 0.0);
            t.rows = new_rows;
        }
        r
    }

    pub fn set_row(&mut self, row: usize, values: &[f64], state: RowState) {
        let t = self.params.get_mut(self.ids.def_emb);
        t.row_mut(row).copy_from_slice(values);
        self.table.set_state(row, state);
    }

    /// Re-normalizes the node and definition tables (unset rows stay zero).
    pub fn renormalize(&mut self) {
        self.params.get_mut(self.ids.node_emb).normalize_rows();
        self.params.get_mut(self.ids.def_emb).normalize_rows();
    }

    pub fn available_tactics(&self) -> Vec<BaseTactic> {
        BaseTactic::ALL.iter().copied().filter(|t| self.tactic_mask[t.id()]).collect()
    }
}
