use std::collections::BTreeSet;
use std::time::Instant;

use g2t_core::autodiff::{grad_check, ParamStore, Tape, Tensor, Var};
use g2t_core::bench::pipeline::{cluster_inputs, intern_corpus, train_model, training_pairs, TrainConfig};
use g2t_core::corpus::{generate_corpus, CorpusSpec};
use g2t_core::g2t::{
    beam_search, definition_loss, gnn_forward, tactic_loss, ArgumentDistribution, Candidates, DefSample,
    InferenceMode, Model, ModelConfig, Prediction, StateInput, StateSample, Trainer,
};
use g2t_core::kernel::{Argument, BaseTactic, DefId, DefKind, Formula, TacticInvocation, Term};
use g2t_core::knn::state_input_graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixture::*;
use crate::Check;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    // Entries stay away from zero so ReLU kinks are never straddled.
    let data = (0..rows * cols)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(rows, cols, data)
}

/// Reduces `y` to a scalar through fixed random weights.
fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Var {
    let n = tape.value(y).len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = tape.mask(y, w);
    tape.sum(m)
}

fn primitive_errors() -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut out: Vec<(&'static str, f64)> = Vec::new();
    for trial in 0..3u64 {
        let (n, k, m) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5));
        let mut ps = ParamStore::new();
        let a = ps.add("a", random_tensor(&mut rng, n, k));
        let b = ps.add("b", random_tensor(&mut rng, k, m));
        let c = ps.add("c", random_tensor(&mut rng, n, k));
        let bias = ps.add("bias", random_tensor(&mut rng, 1, k));
        let bias_m = ps.add("bias_m", random_tensor(&mut rng, 1, m));
        let s = ps.add("s", random_tensor(&mut rng, 1, 1));
        let table = ps.add("table", random_tensor(&mut rng, 6, k));
        let mut check = |name: &'static str, f: &dyn Fn(&mut Tape) -> Var| out.push((name, grad_check(f, &ps, 1e-5)));
        check("matmul", &|t| {
            let (x, y) = (t.param(a), t.param(b));
            let z = t.matmul(x, y);
            weighted_sum(t, z, trial)
        });
        check("matmul_t", &|t| {
            let (x, y) = (t.param(a), t.param(c));
            let z = t.matmul_t(x, y);
            weighted_sum(t, z, trial)
        });
        check("dense", &|t| {
            let (x, w, bb) = (t.param(c), t.param(b), t.param(bias_m));
            let z = t.dense(x, w, bb);
            weighted_sum(t, z, trial)
        });
        check("add/scale/mul_scalar", &|t| {
            let (x, y, sc) = (t.param(a), t.param(c), t.param(s));
            let z = t.add(x, y);
            let z = t.scale(z, 0.7);
            let z = t.mul_scalar(z, sc);
            weighted_sum(t, z, trial)
        });
        check("relu/tanh/softplus", &|t| {
            let x = t.param(a);
            let r = t.relu(x);
            let h = t.tanh(x);
            let p = t.softplus(x);
            let z = t.concat_cols(&[r, h, p]);
            weighted_sum(t, z, trial)
        });
        check("layernorm", &|t| {
            let x = t.param(c);
            let g = t.param(bias);
            let bb = t.constant(Tensor::row_vector(vec![0.3; k]));
            let z = t.layernorm(x, g, bb);
            weighted_sum(t, z, trial)
        });
        check("dropout", &|t| {
            let x = t.param(a);
            let z = t.dropout(x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(9));
            weighted_sum(t, z, trial)
        });
        check("concat/slice", &|t| {
            let (x, y) = (t.param(a), t.param(c));
            let z = t.concat_cols(&[x, y]);
            let z = t.slice_cols(z, 1, k);
            weighted_sum(t, z, trial)
        });
        check("mean_rows", &|t| {
            let x = t.param(a);
            let z = t.mean_rows(x);
            weighted_sum(t, z, trial)
        });
        check("gather/scatter_mean", &|t| {
            let x = t.param(table);
            let g = t.gather(x, &[0, 3, 3, 5, 1]);
            let z = t.scatter_mean(g, &[1, 0, 1, 2, 1], 3);
            weighted_sum(t, z, trial)
        });
        check("gather_param", &|t| {
            let g = t.gather_param(table, &[2, 2, 4]);
            weighted_sum(t, g, trial)
        });
        check("unit_normalize", &|t| {
            let x = t.param(a);
            let z = t.unit_normalize(x);
            weighted_sum(t, z, trial)
        });
        check("log_softmax/cross_entropy", &|t| {
            let x = t.param(bias);
            let ls = t.log_softmax(x);
            let ce = t.softmax_cross_entropy(x, k - 1);
            let w = weighted_sum(t, ls, trial);
            t.add(w, ce)
        });
        check("cosine_loss", &|t| {
            let x = t.gather_param(table, &[0]);
            let y = t.gather_param(table, &[1]);
            t.cosine_loss(x, y)
        });
    }
    out
}

fn full_model_error() -> f64 {
    let mut fx = fixture();
    let mut m = model(&fx, config(4, 2));
    perturb(&mut m, 5);
    let input = state_input(&mut fx, &m);
    let target = TacticInvocation::new(BaseTactic::RewriteIn, vec![Argument::Global(fx.thm), Argument::Local(1)]);
    let s = StateSample::new(input, target, &m).unwrap();
    let d = DefSample { input: cluster(&fx, &[fx.f, fx.eq_f]).input };
    grad_check(
        |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let ld = definition_loss(t, &m, &d, false, &mut rng).unwrap();
            let lt = tactic_loss(t, &m, &s, false, &mut rng).unwrap();
            let ld = t.scale(ld, m.config.def_loss_weight);
            t.add(ld, lt)
        },
        &m.params,
        1e-4,
    )
}

pub fn gradient_correctness() -> Vec<Check> {
    let started = Instant::now();
    let prims = primitive_errors();
    let (worst_name, worst) = prims.iter().copied().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let full = full_model_error();
    let secs = started.elapsed().as_secs_f64();
    vec![Check::new(
        "gradient correctness",
        worst < 1e-4 && full < 1e-4 && secs < 120.0,
        format!(
            "{} primitive checks, worst rel err {worst:.1e} ({worst_name}); full model {full:.1e}; {secs:.1}s (< 1e-4, < 120s)",
            prims.len()
        ),
    )]
}

pub fn gnn_conformance() -> Vec<Check> {
    let mut out = Vec::new();
    for hops in [1, 8] {
        let mut fx = fixture();
        let mut m = model(&fx, config(8, hops));
        perturb(&mut m, hops as u64);
        let s = sample_state(&fx);
        let graphs = [state_graph(&mut fx, &s), cluster(&fx, &[fx.f, fx.eq_f]).input.graph.graph.clone()];
        let mut worst = 0.0f64;
        for ig in graphs {
            let mg = ig.clone().to_message_graph();
            let got = eval(&m, |t| {
                let v = gnn_forward(t, &m, &mg, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
                t.value(v).clone()
            });
            worst = worst.max(max_diff(&oracle_gnn(&m, &ig), &got));
        }
        let name = if hops == 1 { "gnn conformance (1 hop)" } else { "gnn conformance (8 hops)" };
        out.push(Check::new(name, worst < 1e-12, format!("max abs diff {worst:.1e} (< 1e-12)")));
    }
    out
}

/// `sum over roots (1 - cos(out, row)) / sqrt(n)` from the cluster outputs.
fn oracle_def_loss(m: &Model, c: &g2t_core::g2t::ClusterInput) -> f64 {
    let outs = m.compute_cluster(&c.input).unwrap();
    let nn = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let s: f64 = outs
        .iter()
        .zip(&c.input.roots)
        .map(|(o, (_, d))| {
            let e = m.def_embedding(*d).unwrap();
            1.0 - o.iter().zip(e).map(|(x, y)| x * y).sum::<f64>() / (nn(o) * nn(e))
        })
        .sum();
    s / (outs.len() as f64).sqrt()
}

pub fn loss_conformance() -> Vec<Check> {
    let mut fx = fixture();
    // A four-root cluster: a symbol with three defining equations.
    let h = add(&mut fx.env, "h", DefKind::FunctionSymbol { arity: 1 }, None, None);
    let mut roots = vec![h];
    for k in 0..3 {
        let rhs = [Term::Const(fx.a), Term::Const(fx.b), Term::Bound(0)][k].clone();
        let body = Formula::forall(Formula::eq(Term::App(h, vec![Term::App(fx.f, vec![Term::Bound(0)])]), rhs));
        roots.push(add(&mut fx.env, &format!("h_def{k}"), DefKind::DefiningEquation, Some(h), Some(body)));
    }
    for r in &roots {
        fx.g.intern_definition(&fx.env.def(*r).clone()).unwrap();
    }
    let m = model(&fx, config(8, 2));
    let input = state_input(&mut fx, &m);

    // Tactic loss against the hand-expanded chain of log probabilities.
    let (tactics, dists) = m.distributions(&input).unwrap();
    let cands = Model::candidates(&input);
    let lp_t = |t: BaseTactic| tactics.iter().find(|x| x.0 == t).unwrap().1;
    let lp_a = |t: BaseTactic, slot: usize, a: Argument| {
        let d = &dists.iter().find(|x| x.0 == t).unwrap().1;
        d.slots[slot].as_ref().unwrap()[cands.index_of(a).unwrap()]
    };
    let t1 = Argument::Global(fx.thm);
    let cases = [
        (TacticInvocation::new(BaseTactic::Apply, vec![t1]), -lp_t(BaseTactic::Apply) - lp_a(BaseTactic::Apply, 0, t1)),
        (
            TacticInvocation::new(BaseTactic::RewriteIn, vec![t1, Argument::Local(1)]),
            -lp_t(BaseTactic::RewriteIn) - lp_a(BaseTactic::RewriteIn, 0, t1) - lp_a(BaseTactic::RewriteIn, 1, Argument::Local(1)),
        ),
        (TacticInvocation::nullary(BaseTactic::Symmetry), -lp_t(BaseTactic::Symmetry)),
    ];
    let mut tactic_err = 0.0f64;
    for (target, want) in &cases {
        let s = StateSample::new(input.clone(), target.clone(), &m).unwrap();
        let got = eval(&m, |t| {
            let l = tactic_loss(t, &m, &s, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            t.value(l).item()
        });
        tactic_err = tactic_err.max((got - want).abs());
    }

    // Root-count scaling for one- and four-root clusters.
    let mut def_err = 0.0f64;
    for rs in [vec![fx.a], roots.clone()] {
        let c = cluster(&fx, &rs);
        let sample = DefSample { input: c.input.clone() };
        let got = eval(&m, |t| {
            let l = definition_loss(t, &m, &sample, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            t.value(l).item()
        });
        def_err = def_err.max((got - oracle_def_loss(&m, &c)).abs());
    }

    // Combined objective.
    let target = TacticInvocation::new(BaseTactic::Apply, vec![Argument::Global(fx.thm)]);
    let s = StateSample::new(input, target, &m).unwrap();
    let (c1, c2) = (cluster(&fx, &[fx.f, fx.eq_f]), cluster(&fx, &roots));
    let defs = [DefSample { input: c1.input.clone() }, DefSample { input: c2.input.clone() }];
    let lb = Trainer::new(m.clone()).evaluate(&[&defs[0], &defs[1]], &[&s]).unwrap();
    let l_def = (oracle_def_loss(&m, &c1) + oracle_def_loss(&m, &c2)) / 2.0;
    let l_tac = cases[0].1;
    let total_err = (lb.total - (1000.0 * l_def + l_tac)).abs();

    vec![
        Check::new("loss conformance: tactic chain", tactic_err < 1e-9, format!("max |diff| {tactic_err:.1e} over 3 targets (< 1e-9)")),
        Check::new("loss conformance: sqrt(n) scaling", def_err < 1e-9, format!("n in {{1,4}}: max |diff| {def_err:.1e} (< 1e-9)")),
        Check::new(
            "loss conformance: 1000*L_def+L_tac",
            total_err < 1e-9,
            format!("total {:.6} vs oracle {:.6}", lb.total, 1000.0 * l_def + l_tac),
        ),
    ]
}

/// Every complete sequence with its score, most probable first (ties by
/// tactic id, then argument indices).
fn enumerate(
    tactics: &[(BaseTactic, f64)],
    table: &[ArgumentDistribution],
    cands: &Candidates,
) -> Vec<Prediction> {
    let mut all: Vec<(f64, usize, Vec<usize>)> = Vec::new();
    for &(t, lp) in tactics {
        let d = &table[t.id()];
        let mut partial = vec![(lp, Vec::new())];
        for slot in 0..t.slots() {
            let Some(Some(probs)) = d.slots.get(slot) else {
                partial.clear();
                break;
            };
            partial = partial
                .into_iter()
                .flat_map(|(s, a)| {
                    probs.iter().enumerate().map(move |(j, l)| {
                        let mut a = a.clone();
                        a.push(j);
                        (s + l, a)
                    })
                })
                .collect();
        }
        all.extend(partial.into_iter().map(|(s, a)| (s, t.id(), a)));
    }
    all.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    all.into_iter()
        .map(|(s, t, a)| Prediction {
            tactic: TacticInvocation::new(BaseTactic::from_id(t).unwrap(), a.into_iter().map(|i| cands.argument(i)).collect()),
            log_prob: s,
        })
        .collect()
}

pub fn beam_equals_brute_force() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut spaces, mut mismatches, mut largest) = (0, 0, 0);
    for _ in 0..200 {
        let cands = Candidates {
            locals: (0..rng.gen_range(0..4)).collect(),
            globals: (0..rng.gen_range(0..12)).map(DefId).collect(),
        };
        let n = cands.len();
        // Quantized logits make exact ties common.
        let mut draw = |k: usize| log_softmax(&(0..k).map(|_| rng.gen_range(0..4) as f64 * 0.5).collect::<Vec<_>>());
        let tactics: Vec<(BaseTactic, f64)> = BaseTactic::ALL.iter().copied().zip(draw(BaseTactic::COUNT)).collect();
        let table: Vec<ArgumentDistribution> = BaseTactic::ALL
            .iter()
            .map(|t| ArgumentDistribution { slots: (0..t.slots()).map(|_| (n > 0).then(|| draw(n))).collect() })
            .collect();
        let want = enumerate(&tactics, &table, &cands);
        if want.len() > 1000 {
            continue;
        }
        spaces += 1;
        largest = largest.max(want.len());
        let dists = |t: BaseTactic| table[t.id()].clone();
        for width in [want.len().max(1), 1000] {
            if beam_search(&tactics, &dists, &cands, width) != want {
                mismatches += 1;
            }
        }
    }
    vec![Check::new(
        "beam = brute force",
        mismatches == 0 && spaces >= 100,
        format!("{spaces} spaces (up to {largest} sequences), {mismatches} mismatches"),
    )]
}

pub fn online_mode_accounting() -> Vec<Check> {
    // Hand-built package: three unseen clusters plus one structural copy of
    // a training definition.
    let mut fx = fixture();
    let train: Vec<_> = [vec![fx.a], vec![fx.b], vec![fx.gg], vec![fx.f, fx.eq_f], vec![fx.thm]]
        .iter()
        .map(|r| cluster(&fx, r))
        .collect();
    let c = add(&mut fx.env, "c", DefKind::FunctionSymbol { arity: 1 }, None, None);
    let body = Formula::forall(Formula::eq(Term::App(c, vec![Term::Bound(0)]), Term::Const(fx.a)));
    let c_def = add(&mut fx.env, "c_def", DefKind::DefiningEquation, Some(c), Some(body));
    let stmt = Formula::eq(Term::App(c, vec![Term::Const(fx.b)]), Term::Const(fx.a));
    let thm2 = add(&mut fx.env, "c_b", DefKind::Theorem, None, Some(stmt));
    let k = add(&mut fx.env, "k", DefKind::FunctionSymbol { arity: 2 }, None, None);
    let copy = add(&mut fx.env, "b_copy", DefKind::FunctionSymbol { arity: 0 }, None, None);
    for d in [c, c_def, thm2, k, copy] {
        fx.g.intern_definition(&fx.env.def(d).clone()).unwrap();
    }
    let test: Vec<_> = [vec![c, c_def], vec![thm2], vec![k], vec![copy]].iter().map(|r| cluster(&fx, r)).collect();
    let mut base = Model::new(config(8, 2));
    base.init_training_rows(&fx.env.iter().map(|d| d.id).filter(|d| d.0 <= fx.thm.0).collect::<Vec<_>>());
    base.register_known(&train);
    // `k` has the same shape as `g` (binary symbol), `b_copy` as `a`/`b`.
    let mut out = accounting(&base, &train, &test, "fixture");

    // The same on every test package of a generated corpus.
    let spec = CorpusSpec { packages: 8, symbols_per_package: 4, theorems_per_package: 6, seed: 5, ..CorpusSpec::default() };
    let corpus = generate_corpus(&spec).unwrap();
    let split = corpus.split(0.7, 1).unwrap();
    let graph = intern_corpus(&corpus).unwrap();
    let cfg = TrainConfig { model: ModelConfig { h: 8, hops: 2, max_nodes: 256, ..ModelConfig::default() }, steps: 0, max_states: None };
    let (base, _) = train_model(&corpus, &graph, &split, &cfg, |_, _| {}).unwrap();
    let train = cluster_inputs(&corpus, &graph, &split.train, 256).unwrap();
    let test = cluster_inputs(&corpus, &graph, &split.test, 256).unwrap();
    out.extend(accounting(&base, &train, &test, "corpus"));
    out
}

fn accounting(
    base: &Model,
    train: &[g2t_core::g2t::ClusterInput],
    test: &[g2t_core::g2t::ClusterInput],
    label: &str,
) -> Vec<Check> {
    // Unseen: some root's identity hash matches no training definition.
    let known: BTreeSet<u64> = train.iter().flat_map(|c| c.hashes.clone()).collect();
    let unseen = test.iter().filter(|c| c.hashes.iter().any(|h| !known.contains(h))).count();
    let mut frozen = base.clone();
    let fs = frozen.update_definition_table(test, InferenceMode::Frozen).unwrap();
    let mut update = base.clone();
    let us = update.update_definition_table(test, InferenceMode::Update).unwrap();
    let again = update.update_definition_table(test, InferenceMode::Update).unwrap();
    let mut recalc = base.clone();
    let rs = recalc.update_definition_table(test, InferenceMode::Recalc).unwrap();
    let mut idle = base.clone();
    idle.update_definition_table(&[], InferenceMode::Update).unwrap();
    let same_empty = idle.to_checkpoint().to_bytes() == base.to_checkpoint().to_bytes();
    idle.update_definition_table(train, InferenceMode::Update).unwrap();
    let same_train = idle.to_checkpoint().to_bytes() == base.to_checkpoint().to_bytes();
    let ok = fs.def_task_calls == 0
        && frozen.def_task_calls == 0
        && us.def_task_calls == unseen as u64
        && again.def_task_calls == 0
        && rs.def_task_calls == test.len() as u64
        && same_empty
        && same_train;
    vec![Check::new(
        if label == "fixture" { "online-mode accounting (fixture)" } else { "online-mode accounting (corpus)" },
        ok,
        format!(
            "{} clusters, {unseen} unseen: frozen {} calls, update {} (+{} repeat), recalc {}; idle update bit-identical: {}",
            test.len(),
            fs.def_task_calls,
            us.def_task_calls,
            again.def_task_calls,
            rs.def_task_calls,
            same_empty && same_train
        ),
    )]
}

pub fn overfit_sanity() -> Vec<Check> {
    let spec = CorpusSpec { packages: 4, symbols_per_package: 3, theorems_per_package: 6, seed: 2, ..CorpusSpec::default() };
    let corpus = generate_corpus(&spec).unwrap();
    let split = corpus.split(0.7, 0).unwrap();
    let cfg = ModelConfig { h: 16, hops: 2, dropout: 0.0, definition_task: false, seed: 1, ..ModelConfig::default() };
    let mut model = Model::new(cfg);
    let train_defs: Vec<DefId> = corpus.defs_of(&split.train).into_iter().collect();
    model.init_training_rows(&train_defs);
    model.config.adam.lr = 1e-2;
    // The first ten distinct training states with expressible targets.
    let mut samples: Vec<StateSample> = Vec::new();
    for (state, inv, t) in training_pairs(&corpus, &split) {
        let ig = state_input_graph(&state, 1024);
        if samples.iter().any(|s| s.input.graph.graph == ig) {
            continue;
        }
        let input = StateInput::new(ig, &corpus.available_globals(t), &model);
        if let Some(s) = StateSample::new(input, inv, &model) {
            samples.push(s);
        }
        if samples.len() == 10 {
            break;
        }
    }
    let refs: Vec<&StateSample> = samples.iter().collect();
    let mut tr = Trainer::new(model);
    for _ in 0..200 {
        tr.train_step(&[], &refs).unwrap();
    }
    let hits = samples.iter().filter(|s| tr.model.predict(&s.input, 64).unwrap()[0].tactic == s.target).count();
    vec![Check::new(
        "overfit sanity",
        samples.len() == 10 && hits == 10,
        format!("{hits}/{} greedy top-1 after 200 steps", samples.len()),
    )]
}
