use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{EdgeLabel, GraphError, MonoGraph, NodeId, NodeLabel};
use crate::kernel::DefId;

pub const DEFAULT_MAX_NODES: usize = 1024;

/// A pruned, root-anchored subgraph fed to the models. Local ids are BFS
/// discovery order from the root(s).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputGraph {
    pub labels: Vec<NodeLabel>,
    pub edges: Vec<(u32, EdgeLabel, u32)>,
    /// Definition roots (definition task only).
    pub roots: Vec<u32>,
    /// Proof-state root (prediction task only).
    pub state_root: Option<u32>,
    /// Context nodes in hypothesis order, paired with their hypothesis index.
    pub context_nodes: Vec<u32>,
    pub context_positions: Vec<u32>,
    /// Every kept `DefNode` with the definition it refers to.
    pub def_refs: Vec<(u32, DefId)>,
}

impl InputGraph {
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn is_root(&self, local: u32) -> bool {
        self.roots.contains(&local)
    }
}

impl MonoGraph {
    /// Forward closure from `root`, stopping at definition nodes, pruned to
    /// the first `max_nodes` nodes in BFS order.
    pub fn extract_subgraph(&self, root: NodeId, max_nodes: usize) -> Result<InputGraph, GraphError> {
        self.extract_roots(&[root], max_nodes)
    }

    /// Multi-root variant used for definition clusters.
    pub fn extract_roots(&self, roots: &[NodeId], max_nodes: usize) -> Result<InputGraph, GraphError> {
        for r in roots {
            if self.label(*r).is_none() {
                return Err(GraphError::UnknownNode(*r));
            }
        }
        let max_nodes = max_nodes.max(1);
        let mut local: HashMap<NodeId, u32> = HashMap::new();
        let mut order: Vec<NodeId> = Vec::new();
        let mut queue = VecDeque::new();
        for &r in roots {
            if order.len() < max_nodes && !local.contains_key(&r) {
                local.insert(r, order.len() as u32);
                order.push(r);
                queue.push_back(r);
            }
        }
        let mut edges = Vec::new();
        while let Some(n) = queue.pop_front() {
            let is_leaf = matches!(self.labels[n.index()], NodeLabel::DefNode(_)) && !roots.contains(&n);
            if is_leaf {
                continue;
            }
            for &(label, m) in self.out_edges(n) {
                let target = match local.get(&m) {
                    Some(&id) => Some(id),
                    None if order.len() < max_nodes => {
                        let id = order.len() as u32;
                        local.insert(m, id);
                        order.push(m);
                        queue.push_back(m);
                        Some(id)
                    }
                    None => None,
                };
                if let Some(t) = target {
                    edges.push((local[&n], label, t));
                }
            }
        }
        let labels: Vec<NodeLabel> = order.iter().map(|n| self.labels[n.index()]).collect();
        let def_refs = labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                NodeLabel::DefNode(d) => Some((i as u32, *d)),
                _ => None,
            })
            .collect();
        let first = roots.first().and_then(|r| local.get(r).copied());
        let (state_root, mut context_nodes, mut context_positions) = (None, Vec::new(), Vec::new());
        let state_root = match (first, roots.len()) {
            (Some(r), 1) if labels[r as usize] == NodeLabel::ProofStateRoot => {
                let hyps = self.out_edges(roots[0]).iter().filter(|(l, _)| *l == EdgeLabel::ContextElem);
                for (pos, (_, h)) in hyps.enumerate() {
                    if let Some(&id) = local.get(h) {
                        context_nodes.push(id);
                        context_positions.push(pos as u32);
                    }
                }
                Some(r)
            }
            _ => state_root,
        };
        let def_roots = if state_root.is_some() {
            Vec::new()
        } else {
            roots
                .iter()
                .filter_map(|r| match self.labels[r.index()] {
                    NodeLabel::DefNode(_) => local.get(r).copied(),
                    _ => None,
                })
                .collect()
        };
        Ok(InputGraph {
            labels,
            edges,
            roots: def_roots,
            state_root,
            context_nodes,
            context_positions,
            def_refs,
        })
    }
}

/// The symmetrized graph used for message passing: each edge in both
/// directions plus one self edge per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageGraph {
    pub graph: InputGraph,
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
    /// Message label ids in `0..2E+1`.
    pub label: Vec<u32>,
    /// Incoming edge count per node, self edge included.
    pub in_degree: Vec<u32>,
}

impl MessageGraph {
    pub fn edge_count(&self) -> usize {
        self.src.len()
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }
}

pub fn to_message_graph(ig: InputGraph) -> MessageGraph {
    let n = ig.node_count();
    let m = 2 * ig.edges.len() + n;
    let (mut src, mut dst, mut label) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
    for &(s, l, d) in &ig.edges {
        src.push(s);
        dst.push(d);
        label.push(l.id() as u32);
        src.push(d);
        dst.push(s);
        label.push(l.reverse_id() as u32);
    }
    for v in 0..n as u32 {
        src.push(v);
        dst.push(v);
        label.push(EdgeLabel::SELF_LABEL as u32);
    }
    let mut in_degree = vec![0u32; n];
    for &d in &dst {
        in_degree[d as usize] += 1;
    }
    MessageGraph { graph: ig, src, dst, label, in_degree }
}

impl InputGraph {
    pub fn to_message_graph(self) -> MessageGraph {
        to_message_graph(self)
    }
}
