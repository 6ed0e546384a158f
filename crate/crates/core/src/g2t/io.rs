use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DefTable, Model, ModelConfig, ModelError, RowState};
use crate::autodiff::Checkpoint;
use crate::kernel::{BaseTactic, DefId};

/// `kind` field of a model checkpoint's metadata.
pub const CHECKPOINT_KIND: &str = "g2t-model";

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    kind: String,
    config: ModelConfig,
    table: DefTable,
    tactic_mask: Vec<bool>,
    def_task_calls: u64,
}

impl Model {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = Meta {
            kind: CHECKPOINT_KIND.to_string(),
            config: self.config.clone(),
            table: self.table.clone(),
            tactic_mask: self.tactic_mask.to_vec(),
            def_task_calls: self.def_task_calls,
        };
        Checkpoint {
            meta: serde_json::to_string(&meta).expect("metadata serializes"),
            tensors: self.params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
        }
    }

    /// Rebuilds a model from a checkpoint. Every parameter must be present
    /// with its configured shape, except the definition table, whose row
    /// count may differ.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Model, ModelError> {
        let bad = |m: String| ModelError::BadCheckpoint(m);
        let meta: Meta = serde_json::from_str(&ck.meta).map_err(|e| bad(e.to_string()))?;
        if meta.kind != CHECKPOINT_KIND {
            return Err(bad(format!("kind {:?}", meta.kind)));
        }
        if meta.tactic_mask.len() != BaseTactic::COUNT {
            return Err(bad("tactic mask length".into()));
        }
        let mut model = Model::new(meta.config);
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            let name = model.params.name(id).to_string();
            let (_, t) = ck
                .tensors
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| bad(format!("missing tensor {name}")))?;
            let cur = model.params.get(id);
            let same_cols = t.cols == cur.cols;
            let ok = if id == model.ids.def_emb { same_cols } else { same_cols && t.rows == cur.rows };
            if !ok {
                return Err(bad(format!("shape of {name}")));
            }
            *model.params.get_mut(id) = t.clone();
        }
        if meta.table.live() > model.params.get(model.ids.def_emb).rows {
            return Err(bad("definition table larger than its tensor".into()));
        }
        model.table = meta.table;
        model.tactic_mask.copy_from_slice(&meta.tactic_mask);
        model.def_task_calls = meta.def_task_calls;
        Ok(model)
    }
}

fn state_name(s: RowState) -> &'static str {
    match s {
        RowState::Unset => "unset",
        RowState::Learned => "learned",
        RowState::Computed => "computed",
        RowState::FrozenRandom => "frozen",
    }
}

/// CSV of every definition with a usable row:
/// `def_id,name,state,e0,...,e{h-1}`.
pub fn export_embeddings(model: &Model, name: impl Fn(DefId) -> String) -> String {
    let mut out = String::from("def_id,name,state");
    for i in 0..model.h() {
        write!(out, ",e{i}").unwrap();
    }
    out.push('\n');
    for (d, row) in model.table.defs_with_rows() {
        let state = model.table.state(row);
        if state == RowState::Unset {
            continue;
        }
        let n = name(d).replace(['"', ','], "_");
        write!(out, "{},{},{}", d.0, n, state_name(state)).unwrap();
        for x in model.def_row(row) {
            write!(out, ",{x:e}").unwrap();
        }
        out.push('\n');
    }
    out
}
