//! The mono-graph: one hash-consed, labeled, directed graph holding every
//! definition and proof state.
//!
//! Applications are curried (`f a b` is `App(App(f, a), b)`), variables point
//! at their binder through a `BinderRef` edge, and every global reference is
//! an edge into the single `Def` node of that definition.

pub mod digest;
mod dump;
mod extract;
mod topo;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kernel::{DefId, DefKind, Definition, Formula, Hypothesis, PackageId, ProofState, Term};
use digest::{combine, def_leaf, fold64, formula_digest, tag, term_digest, Digest};

pub use dump::{dump_input_graph, parse_dump, DumpLine};
pub use extract::{InputGraph, MessageGraph, DEFAULT_MAX_NODES};
pub use topo::topo_order;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeLabel {
    ForallNode,
    ImpliesNode,
    EqNode,
    AppNode,
    VarNode,
    DefNode(DefId),
    ProofStateRoot,
    ContextHyp,
}

impl NodeLabel {
    /// Number of label kinds that draw from the node embedding table
    /// (everything except `DefNode`).
    pub const EMBEDDED_KINDS: usize = 7;

    /// Row in the node embedding table; `None` for definition nodes.
    pub fn embedding_row(self) -> Option<usize> {
        Some(match self {
            NodeLabel::ForallNode => 0,
            NodeLabel::ImpliesNode => 1,
            NodeLabel::EqNode => 2,
            NodeLabel::AppNode => 3,
            NodeLabel::VarNode => 4,
            NodeLabel::ProofStateRoot => 5,
            NodeLabel::ContextHyp => 6,
            NodeLabel::DefNode(_) => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeLabel::ForallNode => "Forall",
            NodeLabel::ImpliesNode => "Implies",
            NodeLabel::EqNode => "Eq",
            NodeLabel::AppNode => "App",
            NodeLabel::VarNode => "Var",
            NodeLabel::DefNode(_) => "Def",
            NodeLabel::ProofStateRoot => "ProofState",
            NodeLabel::ContextHyp => "ContextHyp",
        }
    }
}

/// Forward edge labels. `GoalEdge` links a proof-state root, a hypothesis or
/// a definition root to the proposition it carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeLabel {
    AppFun,
    AppArg,
    ForallBody,
    ImplPremise,
    ImplConclusion,
    EqLhs,
    EqRhs,
    BinderRef,
    ContextElem,
    GoalEdge,
}

impl EdgeLabel {
    pub const COUNT: usize = 10;
    /// Forward, reverse and self labels of the message graph.
    pub const MESSAGE_LABELS: usize = 2 * Self::COUNT + 1;
    pub const SELF_LABEL: usize = 2 * Self::COUNT;

    pub const ALL: [EdgeLabel; 10] = [
        EdgeLabel::AppFun,
        EdgeLabel::AppArg,
        EdgeLabel::ForallBody,
        EdgeLabel::ImplPremise,
        EdgeLabel::ImplConclusion,
        EdgeLabel::EqLhs,
        EdgeLabel::EqRhs,
        EdgeLabel::BinderRef,
        EdgeLabel::ContextElem,
        EdgeLabel::GoalEdge,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn reverse_id(self) -> usize {
        Self::COUNT + self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeLabel::AppFun => "AppFun",
            EdgeLabel::AppArg => "AppArg",
            EdgeLabel::ForallBody => "ForallBody",
            EdgeLabel::ImplPremise => "ImplPremise",
            EdgeLabel::ImplConclusion => "ImplConclusion",
            EdgeLabel::EqLhs => "EqLhs",
            EdgeLabel::EqRhs => "EqRhs",
            EdgeLabel::BinderRef => "BinderRef",
            EdgeLabel::ContextElem => "ContextElem",
            EdgeLabel::GoalEdge => "GoalEdge",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == s)
    }
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinitionCluster {
    pub roots: Vec<DefId>,
    pub dependencies: Vec<DefId>,
    pub package: PackageId,
}

impl DefinitionCluster {
    pub fn min_id(&self) -> DefId {
        *self.roots.iter().min().expect("cluster has at least one root")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("definition {0} references {1}, which is not interned yet")]
    DanglingReference(DefId, DefId),
    #[error("unknown node {0:?}")]
    UnknownNode(NodeId),
    #[error("cluster dependency cycle through {0}")]
    CycleDetected(DefId),
    #[error("malformed graph dump: {0}")]
    BadDump(String),
}

/// Hash-consing key: the de Bruijn digest plus the graph identity of every
/// free variable (binder nodes by index, then context nodes by position).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct NodeKey {
    digest: Digest,
    free: Vec<NodeId>,
}

#[derive(Debug, Clone, Default)]
pub struct MonoGraph {
    labels: Vec<NodeLabel>,
    out: Vec<Vec<(EdgeLabel, NodeId)>>,
    edge_count: usize,
    hashcons: HashMap<NodeKey, NodeId>,
    def_nodes: Vec<Option<NodeId>>,
    def_roots: BTreeMap<DefId, NodeId>,
    clusters: Vec<DefinitionCluster>,
}

/// Binder scope during interning: enclosing `Forall` nodes (outermost first)
/// and the context nodes of the enclosing proof state.
struct Scope<'a> {
    binders: Vec<NodeId>,
    ctx: &'a [NodeId],
}

impl MonoGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn label(&self, n: NodeId) -> Option<NodeLabel> {
        self.labels.get(n.index()).copied()
    }

    pub fn out_edges(&self, n: NodeId) -> &[(EdgeLabel, NodeId)] {
        &self.out[n.index()]
    }

    pub fn def_root(&self, d: DefId) -> Option<NodeId> {
        self.def_roots.get(&d).copied()
    }

    pub fn def_roots(&self) -> &BTreeMap<DefId, NodeId> {
        &self.def_roots
    }

    pub fn clusters(&self) -> &[DefinitionCluster] {
        &self.clusters
    }

    pub fn add_cluster(&mut self, cluster: DefinitionCluster) {
        self.clusters.push(cluster);
    }

    fn add_node(&mut self, label: NodeLabel) -> NodeId {
        let id = NodeId(self.labels.len() as u32);
        self.labels.push(label);
        self.out.push(Vec::new());
        id
    }

    fn add_edge(&mut self, src: NodeId, label: EdgeLabel, dst: NodeId) {
        self.out[src.index()].push((label, dst));
        self.edge_count += 1;
    }

    fn def_node(&mut self, d: DefId) -> NodeId {
        if self.def_nodes.len() <= d.index() {
            self.def_nodes.resize(d.index() + 1, None);
        }
        if let Some(n) = self.def_nodes[d.index()] {
            return n;
        }
        let n = self.add_node(NodeLabel::DefNode(d));
        self.def_nodes[d.index()] = Some(n);
        n
    }

    /// Interns a definition: its `Def` node plus, for equations and theorems,
    /// the statement (never the proof). Idempotent per `DefId`.
    pub fn intern_definition(&mut self, d: &Definition) -> Result<NodeId, GraphError> {
        if let Some(root) = self.def_root(d.id) {
            return Ok(root);
        }
        let mut refs = Vec::new();
        if let Some(stmt) = &d.statement {
            stmt.collect_defs(&mut refs);
        }
        if let Some(missing) = refs.into_iter().find(|r| *r != d.id && !self.def_roots.contains_key(r)) {
            return Err(GraphError::DanglingReference(d.id, missing));
        }
        let root = self.def_node(d.id);
        if let (Some(stmt), DefKind::DefiningEquation | DefKind::Theorem) = (&d.statement, d.kind) {
            let body = self.intern_formula(stmt);
            self.add_edge(root, EdgeLabel::GoalEdge, body);
        }
        self.def_roots.insert(d.id, root);
        Ok(root)
    }

    /// Interns a closed formula (references become leaf `Def` nodes).
    pub fn intern_formula(&mut self, f: &Formula) -> NodeId {
        let mut scope = Scope { binders: Vec::new(), ctx: &[] };
        self.formula(f, &mut scope)
    }

    /// Interns a proof state under a fresh root. Context nodes are unique to
    /// the state; closed subterms are shared with the rest of the graph.
    pub fn intern_state(&mut self, s: &ProofState) -> NodeId {
        let root = self.add_node(NodeLabel::ProofStateRoot);
        let ctx: Vec<NodeId> = s.context.iter().map(|_| self.add_node(NodeLabel::ContextHyp)).collect();
        for &c in &ctx {
            self.add_edge(root, EdgeLabel::ContextElem, c);
        }
        for (h, &c) in s.context.iter().zip(&ctx) {
            if let Hypothesis::Prop(f) = h {
                let mut scope = Scope { binders: Vec::new(), ctx: &ctx };
                let n = self.formula(f, &mut scope);
                self.add_edge(c, EdgeLabel::GoalEdge, n);
            }
        }
        let mut scope = Scope { binders: Vec::new(), ctx: &ctx };
        let goal = self.formula(&s.goal, &mut scope);
        self.add_edge(root, EdgeLabel::GoalEdge, goal);
        root
    }

    fn key(&self, digest: Digest, bound: &[u32], locals: &[u32], scope: &Scope) -> NodeKey {
        let mut free = Vec::with_capacity(bound.len() + locals.len());
        for &j in bound {
            let depth = scope.binders.len();
            // Dangling indices map to a sentinel; closed input never has them.
            free.push(if (j as usize) < depth { scope.binders[depth - 1 - j as usize] } else { NodeId(u32::MAX) });
        }
        for &i in locals {
            free.push(scope.ctx.get(i as usize).copied().unwrap_or(NodeId(u32::MAX)));
        }
        NodeKey { digest, free }
    }

    fn formula(&mut self, f: &Formula, scope: &mut Scope) -> NodeId {
        let (bound, locals) = free_vars_formula(f);
        let key = self.key(formula_digest(f), &bound, &locals, scope);
        if let Some(&n) = self.hashcons.get(&key) {
            return n;
        }
        let n = match f {
            Formula::Eq(l, r) => {
                let l = self.term(l, scope);
                let r = self.term(r, scope);
                let n = self.add_node(NodeLabel::EqNode);
                self.add_edge(n, EdgeLabel::EqLhs, l);
                self.add_edge(n, EdgeLabel::EqRhs, r);
                n
            }
            Formula::Implies(p, c) => {
                let p = self.formula(p, scope);
                let c = self.formula(c, scope);
                let n = self.add_node(NodeLabel::ImpliesNode);
                self.add_edge(n, EdgeLabel::ImplPremise, p);
                self.add_edge(n, EdgeLabel::ImplConclusion, c);
                n
            }
            Formula::Forall(b) => {
                let n = self.add_node(NodeLabel::ForallNode);
                scope.binders.push(n);
                let body = self.formula(b, scope);
                scope.binders.pop();
                self.add_edge(n, EdgeLabel::ForallBody, body);
                n
            }
        };
        self.hashcons.insert(key, n);
        n
    }

    fn term(&mut self, t: &Term, scope: &mut Scope) -> NodeId {
        match t {
            Term::Const(d) => self.def_node(*d),
            Term::Bound(_) | Term::Local(_) => {
                let (bound, locals) = free_vars_term(t);
                let key = self.key(term_digest(t), &bound, &locals, scope);
                if let Some(&n) = self.hashcons.get(&key) {
                    return n;
                }
                let binder = key.free[0];
                let n = self.add_node(NodeLabel::VarNode);
                if binder != NodeId(u32::MAX) {
                    self.add_edge(n, EdgeLabel::BinderRef, binder);
                }
                self.hashcons.insert(key, n);
                n
            }
            Term::App(f, args) => {
                let mut cur = self.def_node(*f);
                let mut digest = def_leaf(*f);
                let mut bound = Vec::new();
                let mut locals = Vec::new();
                for a in args {
                    let arg = self.term(a, scope);
                    digest = combine(tag::APP, &[], &[digest, term_digest(a)]);
                    let (b, l) = free_vars_term(a);
                    merge_sorted(&mut bound, &b);
                    merge_sorted(&mut locals, &l);
                    let key = self.key(digest, &bound, &locals, scope);
                    cur = match self.hashcons.get(&key) {
                        Some(&n) => n,
                        None => {
                            let n = self.add_node(NodeLabel::AppNode);
                            self.add_edge(n, EdgeLabel::AppFun, cur);
                            self.add_edge(n, EdgeLabel::AppArg, arg);
                            self.hashcons.insert(key, n);
                            n
                        }
                    };
                }
                cur
            }
        }
    }

    /// Decodes the formula rooted at `n`. Inverse of interning for closed
    /// formulas; context constants decode relative to `ctx`.
    pub fn decode_formula(&self, n: NodeId, ctx: &[NodeId]) -> Option<Formula> {
        let mut binders = Vec::new();
        self.decode_f(n, &mut binders, ctx)
    }

    fn child(&self, n: NodeId, label: EdgeLabel) -> Option<NodeId> {
        self.out[n.index()].iter().find(|(l, _)| *l == label).map(|(_, m)| *m)
    }

    fn decode_f(&self, n: NodeId, binders: &mut Vec<NodeId>, ctx: &[NodeId]) -> Option<Formula> {
        Some(match self.label(n)? {
            NodeLabel::EqNode => Formula::Eq(
                self.decode_t(self.child(n, EdgeLabel::EqLhs)?, binders, ctx)?,
                self.decode_t(self.child(n, EdgeLabel::EqRhs)?, binders, ctx)?,
            ),
            NodeLabel::ImpliesNode => Formula::implies(
                self.decode_f(self.child(n, EdgeLabel::ImplPremise)?, binders, ctx)?,
                self.decode_f(self.child(n, EdgeLabel::ImplConclusion)?, binders, ctx)?,
            ),
            NodeLabel::ForallNode => {
                binders.push(n);
                let body = self.decode_f(self.child(n, EdgeLabel::ForallBody)?, binders, ctx);
                binders.pop();
                Formula::forall(body?)
            }
            _ => return None,
        })
    }

    fn decode_t(&self, n: NodeId, binders: &[NodeId], ctx: &[NodeId]) -> Option<Term> {
        match self.label(n)? {
            NodeLabel::DefNode(d) => Some(Term::Const(d)),
            NodeLabel::VarNode => {
                let b = self.child(n, EdgeLabel::BinderRef)?;
                if let Some(pos) = binders.iter().rposition(|x| *x == b) {
                    Some(Term::Bound((binders.len() - 1 - pos) as u32))
                } else {
                    ctx.iter().position(|x| *x == b).map(|i| Term::Local(i as u32))
                }
            }
            NodeLabel::AppNode => {
                let mut args = Vec::new();
                let mut cur = n;
                while self.label(cur)? == NodeLabel::AppNode {
                    args.push(self.decode_t(self.child(cur, EdgeLabel::AppArg)?, binders, ctx)?);
                    cur = self.child(cur, EdgeLabel::AppFun)?;
                }
                let NodeLabel::DefNode(f) = self.label(cur)? else { return None };
                args.reverse();
                Some(Term::App(f, args))
            }
            _ => None,
        }
    }

    /// 64-bit digest of the de Bruijn tree reachable from `root`, with
    /// binder back-edges replaced by their depth. A definition root hashes
    /// its statement; references to itself hash as a fixed marker.
    pub fn graph_hash(&self, root: NodeId) -> Result<u64, GraphError> {
        let label = self.label(root).ok_or(GraphError::UnknownNode(root))?;
        let digest = match label {
            NodeLabel::DefNode(_) => {
                let children: Vec<Digest> =
                    self.out[root.index()].iter().map(|(_, m)| self.tree_digest(*m, &mut Vec::new(), &[], &[root])).collect();
                combine(tag::DEF_ROOT, &[children.len() as u64], &children)
            }
            _ => self.tree_digest(root, &mut Vec::new(), &[], &[]),
        };
        Ok(fold64(digest))
    }

    /// Per-root identity hashes of a definition cluster. References between
    /// roots of the cluster hash by position, so isomorphic clusters over the
    /// same dependencies collide and anything else (almost surely) does not.
    pub fn cluster_hashes(&self, env_kinds: &[(DefId, DefKind)]) -> Vec<u64> {
        let roots: Vec<NodeId> = env_kinds.iter().filter_map(|(d, _)| self.def_root(*d)).collect();
        let per_root: Vec<Digest> = env_kinds
            .iter()
            .zip(&roots)
            .map(|((_, kind), r)| {
                let kind_tag = match kind {
                    DefKind::FunctionSymbol { arity } => 1 + *arity as u64,
                    DefKind::DefiningEquation => 0x100,
                    DefKind::Theorem => 0x200,
                };
                let children: Vec<Digest> =
                    self.out[r.index()].iter().map(|(_, m)| self.tree_digest(*m, &mut Vec::new(), &[], &roots)).collect();
                combine(tag::DEF_ROOT, &[kind_tag], &children)
            })
            .collect();
        let cluster = combine(tag::CLUSTER, &[per_root.len() as u64], &per_root);
        (0..per_root.len()).map(|k| fold64(combine(tag::CLUSTER, &[k as u64], &[cluster]))).collect()
    }

    /// Mirrors `digest::formula_digest` / `term_digest` over the graph.
    fn tree_digest(&self, n: NodeId, binders: &mut Vec<NodeId>, ctx: &[NodeId], selves: &[NodeId]) -> Digest {
        let label = self.labels[n.index()];
        let child = |l| self.child(n, l).expect("well-formed node");
        match label {
            NodeLabel::DefNode(d) => match selves.iter().position(|s| *s == n) {
                Some(k) => combine(tag::SELF_ROOT, &[k as u64], &[]),
                None => def_leaf(d),
            },
            NodeLabel::VarNode => match self.child(n, EdgeLabel::BinderRef) {
                Some(b) => match binders.iter().rposition(|x| *x == b) {
                    Some(pos) => combine(tag::BOUND, &[(binders.len() - 1 - pos) as u64], &[]),
                    None => match ctx.iter().position(|x| *x == b) {
                        Some(i) => combine(tag::LOCAL, &[i as u64], &[]),
                        None => combine(tag::BOUND, &[u64::MAX], &[]),
                    },
                },
                None => combine(tag::BOUND, &[u64::MAX], &[]),
            },
            NodeLabel::AppNode => {
                let f = self.tree_digest(child(EdgeLabel::AppFun), binders, ctx, selves);
                let a = self.tree_digest(child(EdgeLabel::AppArg), binders, ctx, selves);
                combine(tag::APP, &[], &[f, a])
            }
            NodeLabel::EqNode => {
                let l = self.tree_digest(child(EdgeLabel::EqLhs), binders, ctx, selves);
                let r = self.tree_digest(child(EdgeLabel::EqRhs), binders, ctx, selves);
                combine(tag::EQ, &[], &[l, r])
            }
            NodeLabel::ImpliesNode => {
                let p = self.tree_digest(child(EdgeLabel::ImplPremise), binders, ctx, selves);
                let c = self.tree_digest(child(EdgeLabel::ImplConclusion), binders, ctx, selves);
                combine(tag::IMPLIES, &[], &[p, c])
            }
            NodeLabel::ForallNode => {
                binders.push(n);
                let b = self.tree_digest(child(EdgeLabel::ForallBody), binders, ctx, selves);
                binders.pop();
                combine(tag::FORALL, &[], &[b])
            }
            NodeLabel::ProofStateRoot => {
                let hyps: Vec<NodeId> = self.out[n.index()]
                    .iter()
                    .filter(|(l, _)| *l == EdgeLabel::ContextElem)
                    .map(|(_, m)| *m)
                    .collect();
                let mut children: Vec<Digest> = hyps
                    .iter()
                    .map(|h| match self.child(*h, EdgeLabel::GoalEdge) {
                        None => combine(tag::HYP_VAR, &[], &[]),
                        Some(f) => combine(tag::HYP_PROP, &[], &[self.tree_digest(f, &mut Vec::new(), &hyps, selves)]),
                    })
                    .collect();
                children.push(self.tree_digest(child(EdgeLabel::GoalEdge), &mut Vec::new(), &hyps, selves));
                combine(tag::STATE, &[hyps.len() as u64], &children)
            }
            NodeLabel::ContextHyp => match self.child(n, EdgeLabel::GoalEdge) {
                None => combine(tag::HYP_VAR, &[], &[]),
                Some(f) => combine(tag::HYP_PROP, &[], &[self.tree_digest(f, binders, ctx, selves)]),
            },
        }
    }
}

/// Free bound indices (sorted) and context constants (sorted) of a term.
fn free_vars_term(t: &Term) -> (Vec<u32>, Vec<u32>) {
    let mut bound = Vec::new();
    let mut locals = Vec::new();
    collect_term(t, 0, &mut bound, &mut locals);
    bound.sort_unstable();
    bound.dedup();
    locals.sort_unstable();
    locals.dedup();
    (bound, locals)
}

fn free_vars_formula(f: &Formula) -> (Vec<u32>, Vec<u32>) {
    fn go(f: &Formula, offset: u32, bound: &mut Vec<u32>, locals: &mut Vec<u32>) {
        match f {
            Formula::Eq(l, r) => {
                collect_term(l, offset, bound, locals);
                collect_term(r, offset, bound, locals);
            }
            Formula::Implies(p, c) => {
                go(p, offset, bound, locals);
                go(c, offset, bound, locals);
            }
            Formula::Forall(b) => go(b, offset + 1, bound, locals),
        }
    }
    let mut bound = Vec::new();
    let mut locals = Vec::new();
    go(f, 0, &mut bound, &mut locals);
    bound.sort_unstable();
    bound.dedup();
    locals.sort_unstable();
    locals.dedup();
    (bound, locals)
}

fn collect_term(t: &Term, offset: u32, bound: &mut Vec<u32>, locals: &mut Vec<u32>) {
    match t {
        Term::Bound(i) if *i >= offset => bound.push(i - offset),
        Term::Local(i) => locals.push(*i),
        Term::App(_, args) => args.iter().for_each(|a| collect_term(a, offset, bound, locals)),
        _ => {}
    }
}

fn merge_sorted(into: &mut Vec<u32>, from: &[u32]) {
    into.extend_from_slice(from);
    into.sort_unstable();
    into.dedup();
}
