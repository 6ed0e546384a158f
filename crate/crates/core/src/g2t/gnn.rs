use rand::Rng;

use super::{Model, ModelError};
use crate::autodiff::{Tape, Var};
use crate::graph::{InputGraph, MessageGraph, NodeLabel};

/// Initial node embeddings: label rows for ordinary nodes, definition rows
/// for referenced definitions, zeros for definition-task roots.
pub fn initial_embeddings(tape: &mut Tape, model: &Model, ig: &InputGraph) -> Result<Var, ModelError> {
    let n = ig.node_count();
    let (mut label_pos, mut label_rows) = (Vec::new(), Vec::new());
    let (mut def_pos, mut def_rows) = (Vec::new(), Vec::new());
    for (i, l) in ig.labels.iter().enumerate() {
        match l {
            NodeLabel::DefNode(d) => {
                if ig.is_root(i as u32) {
                    continue;
                }
                let row = model.table.usable_row(*d).ok_or(ModelError::UnsetDefinitionRow(*d))?;
                def_pos.push(i as u32);
                def_rows.push(row);
            }
            other => {
                label_pos.push(i as u32);
                label_rows.push(other.embedding_row().expect("ordinary label"));
            }
        }
    }
    let mut parts = Vec::new();
    for (pos, rows, table) in [(label_pos, label_rows, model.ids.node_emb), (def_pos, def_rows, model.ids.def_emb)] {
        if pos.is_empty() {
            continue;
        }
        let g = tape.gather_param(table, &rows);
        let ones = vec![1.0; pos.len()];
        parts.push(tape.scatter_weighted(g, &pos, ones, n));
    }
    Ok(match parts.as_slice() {
        [] => tape.constant(crate::autodiff::Tensor::zeros(n, model.h())),
        [a] => *a,
        [a, b] => tape.add(*a, *b),
        _ => unreachable!(),
    })
}

/// Per-edge averaging weights `1/deg(dst)`.
pub(crate) fn edge_weights(model: &Model, mg: &MessageGraph) -> Vec<f64> {
    mg.dst
        .iter()
        .map(|&d| {
            let deg = mg.in_degree[d as usize] as f64;
            let deg = if model.config.deg_includes_self { deg } else { (deg - 1.0).max(1.0) };
            1.0 / deg
        })
        .collect()
}

/// Runs every hop and returns the final node embeddings `[n, h]`.
pub fn gnn_forward(
    tape: &mut Tape,
    model: &Model,
    mg: &MessageGraph,
    training: bool,
    rng: &mut impl Rng,
) -> Result<Var, ModelError> {
    let n = mg.node_count();
    let mut x = initial_embeddings(tape, model, &mg.graph)?;
    let weights = edge_weights(model, mg);
    let labels: Vec<usize> = mg.label.iter().map(|&l| l as usize).collect();
    let src: Vec<usize> = mg.src.iter().map(|&s| s as usize).collect();
    let edge_table = tape.param(model.ids.edge_emb);
    for hop in &model.ids.hops {
        // Dense([e; x_m]) = e W_edge + x_m W_node + b, evaluated per label and
        // per node before gathering per edge.
        let we = tape.param(hop.conv_edge);
        let wn = tape.param(hop.conv_node);
        let e_proj = tape.matmul(edge_table, we);
        let x_proj = tape.matmul(x, wn);
        let me = tape.gather(e_proj, &labels);
        let mx = tape.gather(x_proj, &src);
        let m = tape.add(me, mx);
        let b = tape.param(hop.conv_b);
        let m = tape.add_bias(m, b);
        let agg = tape.scatter_weighted(m, &mg.dst, weights.clone(), n);
        let xhat = tape.relu(agg);
        let y = mlp(tape, hop.mlp, xhat);
        let y = tape.dropout(y, model.config.dropout, training, rng);
        let z = tape.add(x, y);
        let (g, bb) = (tape.param(hop.ln_g), tape.param(hop.ln_b));
        x = tape.layernorm(z, g, bb);
    }
    Ok(x)
}

pub(crate) fn dense(tape: &mut Tape, d: super::Dense, x: Var) -> Var {
    let (w, b) = (tape.param(d.w), tape.param(d.b));
    tape.dense(x, w, b)
}

/// Dense, ReLU, Dense.
pub(crate) fn mlp(tape: &mut Tape, m: super::Mlp, x: Var) -> Var {
    let y = dense(tape, m.l1, x);
    let y = tape.relu(y);
    dense(tape, m.l2, y)
}
