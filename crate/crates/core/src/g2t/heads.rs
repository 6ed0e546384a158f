use rand::Rng;

use super::gnn::{dense, gnn_forward, mlp};
use super::{Model, ModelError, NAME_VOCAB};
use crate::autodiff::{Tape, Tensor, Var};
use crate::graph::{InputGraph, MessageGraph};
use crate::kernel::{BaseTactic, DefId};

/// A definition-cluster graph with its roots (local id, definition) and the
/// qualified names of the roots.
#[derive(Debug, Clone)]
pub struct DefinitionInput {
    pub graph: MessageGraph,
    pub roots: Vec<(u32, DefId)>,
    pub names: Vec<String>,
}

impl DefinitionInput {
    pub fn new(ig: InputGraph, names: Vec<String>) -> Self {
        let roots: Vec<(u32, DefId)> = ig
            .roots
            .iter()
            .map(|&r| match ig.labels[r as usize] {
                crate::graph::NodeLabel::DefNode(d) => (r, d),
                _ => panic!("definition roots are definition nodes"),
            })
            .collect();
        assert_eq!(names.len(), roots.len(), "one name per root");
        DefinitionInput { graph: ig.to_message_graph(), roots, names }
    }
}

/// Character-level bidirectional recurrent encoding of a qualified name.
pub fn encode_name(tape: &mut Tape, model: &Model, name: &str) -> Var {
    let ids = model.ids.names.expect("name encoder enabled");
    let h = model.h();
    let chars: Vec<usize> = name.bytes().map(|b| (b as usize) % NAME_VOCAB).collect();
    let run = |tape: &mut Tape, order: &mut dyn Iterator<Item = usize>, cell: super::Dense| {
        let mut state = tape.constant(Tensor::zeros(1, h));
        for c in order {
            let e = tape.gather_param(ids.chars, &[c]);
            let inp = tape.concat_cols(&[e, state]);
            let z = dense(tape, cell, inp);
            state = tape.tanh(z);
        }
        state
    };
    let f = run(tape, &mut chars.iter().copied(), ids.fwd);
    let b = run(tape, &mut chars.iter().rev().copied(), ids.bwd);
    let both = tape.concat_cols(&[f, b]);
    dense(tape, ids.out, both)
}

/// Unit-normalized embedding per root of a definition cluster.
pub fn definition_task(
    tape: &mut Tape,
    model: &Model,
    input: &DefinitionInput,
    training: bool,
    rng: &mut impl Rng,
) -> Result<Vec<Var>, ModelError> {
    let x = gnn_forward(tape, model, &input.graph, training, rng)?;
    let pool = tape.mean_rows(x);
    let mut out = Vec::with_capacity(input.roots.len());
    for (k, (local, _)) in input.roots.iter().enumerate() {
        let r = tape.gather(x, &[*local as usize]);
        let mut parts = vec![pool, r];
        if model.config.use_names {
            parts.push(encode_name(tape, model, &input.names[k]));
        }
        let c = tape.concat_cols(&parts);
        let y = mlp(tape, model.ids.def_head, c);
        out.push(tape.unit_normalize(y));
    }
    Ok(out)
}

/// A proof-state graph with its argument candidates.
#[derive(Debug, Clone)]
pub struct StateInput {
    pub graph: MessageGraph,
    /// Context-node local ids in hypothesis order and their positions.
    pub local_nodes: Vec<u32>,
    pub local_positions: Vec<u32>,
    /// Global candidates and their table rows.
    pub global_defs: Vec<DefId>,
    pub global_rows: Vec<usize>,
}

impl StateInput {
    /// Builds the input, keeping only global candidates that have a usable
    /// table row.
    pub fn new(ig: InputGraph, globals: &[DefId], model: &Model) -> Self {
        let (global_defs, global_rows): (Vec<DefId>, Vec<usize>) =
            globals.iter().filter_map(|d| model.table.usable_row(*d).map(|r| (*d, r))).unzip();
        StateInput {
            local_nodes: ig.context_nodes.clone(),
            local_positions: ig.context_positions.clone(),
            graph: ig.to_message_graph(),
            global_defs,
            global_rows,
        }
    }

    pub fn candidate_count(&self) -> usize {
        self.local_nodes.len() + self.global_defs.len()
    }
}

/// Forward results shared by every decoding step of one state.
pub struct StateOutputs {
    pub x: Var,
    pub pool: Var,
    /// Log-probabilities `[1, |tactics|]` over `tactics`.
    pub tactic_log_probs: Var,
    pub tactics: Vec<BaseTactic>,
}

impl Model {
    pub fn state_forward(
        &self,
        tape: &mut Tape,
        input: &StateInput,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<StateOutputs, ModelError> {
        let tactics = self.available_tactics();
        if tactics.is_empty() {
            return Err(ModelError::NoAvailableTactics);
        }
        let x = gnn_forward(tape, self, &input.graph, training, rng)?;
        let pool = tape.mean_rows(x);
        let q = mlp(tape, self.ids.tactic_head, pool);
        let ids: Vec<usize> = tactics.iter().map(|t| t.id()).collect();
        let table = tape.gather_param(self.ids.tactic_emb, &ids);
        let logits = tape.matmul_t(q, table);
        let tactic_log_probs = tape.log_softmax(logits);
        Ok(StateOutputs { x, pool, tactic_log_probs, tactics })
    }

    /// Log-probabilities `[1, locals + globals]` for each argument slot of
    /// `tactic`; `None` for slots with no candidate at all.
    pub fn argument_log_probs(
        &self,
        tape: &mut Tape,
        out: &StateOutputs,
        input: &StateInput,
        tactic: BaseTactic,
    ) -> Vec<Option<Var>> {
        let h = self.h();
        let t = tape.gather_param(self.ids.tactic_emb, &[tactic.id()]);
        let mut hidden = [t, t];
        let mut res = Vec::with_capacity(tactic.slots());
        for _ in 0..tactic.slots() {
            let mut x = out.pool;
            for (layer, state) in hidden.iter_mut().enumerate() {
                let inp = tape.concat_cols(&[x, *state]);
                let z = dense(tape, self.ids.rnn[layer], inp);
                let z = tape.relu(z);
                x = tape.slice_cols(z, 0, h);
                *state = tape.slice_cols(z, h, h);
            }
            let mut parts = Vec::new();
            if !input.local_nodes.is_empty() {
                let ql = mlp(tape, self.ids.local_query, x);
                let idx: Vec<usize> = input.local_nodes.iter().map(|&n| n as usize).collect();
                let locals = tape.gather(out.x, &idx);
                parts.push(tape.matmul_t(ql, locals));
            }
            if !input.global_rows.is_empty() {
                let qg = mlp(tape, self.ids.global_query, x);
                let qg = tape.unit_normalize(qg);
                let rows = tape.gather_param(self.ids.def_emb, &input.global_rows);
                let gl = tape.matmul_t(qg, rows);
                let raw = tape.param(self.ids.temperature);
                let temp = tape.softplus(raw);
                parts.push(tape.mul_scalar(gl, temp));
            }
            res.push(if parts.is_empty() {
                None
            } else {
                let logits = tape.concat_cols(&parts);
                Some(tape.log_softmax(logits))
            });
        }
        res
    }
}
