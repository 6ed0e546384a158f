//! A six-definition environment and a scripted oracle of the
//! message-passing backbone, written directly from the layer definitions.

use g2t_core::autodiff::{Tape, Tensor};
use g2t_core::g2t::{ClusterInput, DefinitionInput, Model, ModelConfig, StateInput};
use g2t_core::graph::{EdgeLabel, InputGraph, MonoGraph, NodeLabel};
use g2t_core::kernel::{DefId, DefKind, Definition, Environment, Formula, Hypothesis, PackageId, ProofState, Term};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fx {
    pub env: Environment,
    pub g: MonoGraph,
    pub a: DefId,
    pub b: DefId,
    pub f: DefId,
    pub gg: DefId,
    pub eq_f: DefId,
    pub thm: DefId,
}

pub fn add(env: &mut Environment, name: &str, kind: DefKind, defines: Option<DefId>, stmt: Option<Formula>) -> DefId {
    let id = env.next_id();
    env.add(Definition { id, kind, statement: stmt, package: PackageId(0), name: name.into(), defines, proof: None })
        .unwrap()
}

/// Symbols `a b : 0`, `g : 2`, `f : 1` with `f x = g x x`, and the theorem
/// `f a = g a a`.
pub fn fixture() -> Fx {
    let mut env = Environment::new();
    let sym = |arity| DefKind::FunctionSymbol { arity };
    let a = add(&mut env, "a", sym(0), None, None);
    let b = add(&mut env, "b", sym(0), None, None);
    let gg = add(&mut env, "g", sym(2), None, None);
    let f = add(&mut env, "f", sym(1), None, None);
    let body = Formula::forall(Formula::eq(
        Term::App(f, vec![Term::Bound(0)]),
        Term::App(gg, vec![Term::Bound(0), Term::Bound(0)]),
    ));
    let eq_f = add(&mut env, "f_def", DefKind::DefiningEquation, Some(f), Some(body));
    let t = Formula::eq(Term::App(f, vec![Term::Const(a)]), Term::App(gg, vec![Term::Const(a), Term::Const(a)]));
    let thm = add(&mut env, "f_a", DefKind::Theorem, None, Some(t));
    let mut g = MonoGraph::new();
    for d in env.iter() {
        g.intern_definition(d).unwrap();
    }
    Fx { env, g, a, b, f, gg, eq_f, thm }
}

pub fn cluster(fx: &Fx, roots: &[DefId]) -> ClusterInput {
    let nodes: Vec<_> = roots.iter().map(|d| fx.g.def_root(*d).unwrap()).collect();
    let ig = fx.g.extract_roots(&nodes, 1024).unwrap();
    let kinds: Vec<_> = roots.iter().map(|d| (*d, fx.env.def(*d).kind)).collect();
    let names = roots.iter().map(|d| fx.env.def(*d).name.clone()).collect();
    ClusterInput { input: DefinitionInput::new(ig, names), hashes: fx.g.cluster_hashes(&kinds) }
}

pub fn config(h: usize, hops: usize) -> ModelConfig {
    ModelConfig { h, hops, def_capacity: 16, seed: 3, ..ModelConfig::default() }
}

/// A fresh model with learned rows for every fixture definition.
pub fn model(fx: &Fx, cfg: ModelConfig) -> Model {
    let mut m = Model::new(cfg);
    let ids: Vec<DefId> = fx.env.iter().map(|d| d.id).collect();
    m.init_training_rows(&ids);
    m
}

/// `h0 : x`, `h1 : f h0 = b` |- `g h0 a = f b`.
pub fn sample_state(fx: &Fx) -> ProofState {
    ProofState {
        context: vec![Hypothesis::Var, Hypothesis::Prop(Formula::eq(Term::App(fx.f, vec![Term::Local(0)]), Term::Const(fx.b)))],
        goal: Formula::eq(
            Term::App(fx.gg, vec![Term::Local(0), Term::Const(fx.a)]),
            Term::App(fx.f, vec![Term::Const(fx.b)]),
        ),
    }
}

pub fn state_graph(fx: &mut Fx, s: &ProofState) -> InputGraph {
    let root = fx.g.intern_state(s);
    fx.g.extract_subgraph(root, 1024).unwrap()
}

pub fn state_input(fx: &mut Fx, m: &Model) -> StateInput {
    let s = sample_state(fx);
    let ig = state_graph(fx, &s);
    StateInput::new(ig, &[fx.eq_f, fx.thm, fx.a], m)
}

pub fn eval<T>(model: &Model, f: impl FnOnce(&mut Tape) -> T) -> T {
    let mut tape = Tape::new(&model.params);
    f(&mut tape)
}

/// Randomizes biases and layer-norm affine parameters so the oracle
/// comparison exercises every term.
pub fn perturb(m: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = m.params.ids().collect();
    for id in ids {
        let name = m.params.name(id).to_string();
        if name.ends_with(".b") || name.ends_with(".g") {
            for v in &mut m.params.get_mut(id).data {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
    }
}

fn p<'a>(m: &'a Model, name: &str) -> &'a Tensor {
    m.params.get(m.params.id(name).unwrap_or_else(|| panic!("{name}")))
}

fn affine(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    (0..w.cols).map(|j| b.data[j] + (0..w.rows).map(|i| x[i] * w.get(i, j)).sum::<f64>()).collect()
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

/// Node states after `hops` rounds: for each node, the mean over incoming,
/// reversed-outgoing and self messages of `[edge label ; neighbour] W + b`
/// (full `[2h, h]` matrix), ReLU, a two-layer MLP, residual add and layer
/// normalization.
pub fn oracle_gnn(m: &Model, ig: &InputGraph) -> Vec<Vec<f64>> {
    let h = m.h();
    let mut x: Vec<Vec<f64>> = ig
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| match l {
            NodeLabel::DefNode(_) if ig.roots.contains(&(i as u32)) => vec![0.0; h],
            NodeLabel::DefNode(d) => m.def_embedding(*d).unwrap().to_vec(),
            other => p(m, "node_emb").row(other.embedding_row().unwrap()).to_vec(),
        })
        .collect();
    let edge = p(m, "edge_emb");
    for t in 0..m.config.hops {
        let (we, wn) = (p(m, &format!("hop{t}.conv.w_edge")), p(m, &format!("hop{t}.conv.w_node")));
        let mut w = Tensor::zeros(2 * h, h);
        for i in 0..h {
            for j in 0..h {
                w.data[i * h + j] = we.get(i, j);
                w.data[(h + i) * h + j] = wn.get(i, j);
            }
        }
        let b = p(m, &format!("hop{t}.conv.b"));
        let mut next = Vec::new();
        for v in 0..x.len() {
            let mut msgs: Vec<(usize, usize)> = Vec::new();
            for &(s, l, d) in &ig.edges {
                if d as usize == v {
                    msgs.push((l.id(), s as usize));
                }
                if s as usize == v {
                    msgs.push((EdgeLabel::COUNT + l.id(), d as usize));
                }
            }
            msgs.push((2 * EdgeLabel::COUNT, v));
            let mut agg = vec![0.0; h];
            for (lab, src) in &msgs {
                let inp: Vec<f64> = edge.row(*lab).iter().chain(&x[*src]).copied().collect();
                for (a, y) in agg.iter_mut().zip(affine(&inp, &w, b)) {
                    *a += y / msgs.len() as f64;
                }
            }
            let xhat = relu(agg);
            let l1 = relu(affine(&xhat, p(m, &format!("hop{t}.mlp.l1.w")), p(m, &format!("hop{t}.mlp.l1.b"))));
            let y = affine(&l1, p(m, &format!("hop{t}.mlp.l2.w")), p(m, &format!("hop{t}.mlp.l2.b")));
            let z: Vec<f64> = x[v].iter().zip(&y).map(|(a, b)| a + b).collect();
            let mean = z.iter().sum::<f64>() / h as f64;
            let var = z.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / h as f64;
            let (gm, bt) = (p(m, &format!("hop{t}.ln.g")), p(m, &format!("hop{t}.ln.b")));
            next.push((0..h).map(|k| (z[k] - mean) / (var + 1e-12).sqrt() * gm.data[k] + bt.data[k]).collect());
        }
        x = next;
    }
    x
}

pub fn max_diff(a: &[Vec<f64>], t: &Tensor) -> f64 {
    a.iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, x)| (x - t.get(i, j)).abs()))
        .fold(0.0, f64::max)
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = v.iter().map(|x| (x - m).exp()).sum::<f64>().ln() + m;
    v.iter().map(|x| x - z).collect()
}
