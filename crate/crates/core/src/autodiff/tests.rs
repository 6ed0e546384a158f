use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    // Keep entries away from zero so ReLU kinks are never straddled.
    Tensor::new(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| {
                let v: f64 = rng.gen_range(0.05..1.0);
                if rng.gen_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect(),
    )
}

/// Reduces `y` to a scalar through fixed random weights so every output
/// coordinate gets a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Var {
    let n = tape.value(y).len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = tape.mask(y, w);
    tape.sum(m)
}

fn check(name: &str, params: &ParamStore, f: impl Fn(&mut Tape) -> Var) {
    let err = grad_check(f, params, 1e-5);
    assert!(err < 1e-4, "{name}: relative error {err}");
}

#[test]
fn relu_example() {
    let mut ps = ParamStore::new();
    let x = ps.add("x", Tensor::row_vector(vec![-1.0, 2.0]));
    let mut tape = Tape::new(&ps);
    let xv = tape.param(x);
    let y = tape.relu(xv);
    assert_eq!(tape.value(y).data, vec![0.0, 2.0]);
    let s = tape.sum(y);
    let g = tape.backward(s);
    assert_eq!(g.get(x).unwrap().data, vec![0.0, 1.0]);
}

#[test]
fn unit_normalize_and_cosine_definitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ps = ParamStore::new();
    for _ in 0..20 {
        let mut tape = Tape::new(&ps);
        let x = tape.constant(random_tensor(&mut rng, 1, 7));
        let u = tape.unit_normalize(x);
        let n: f64 = tape.value(u).data.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
        let l = tape.cosine_loss(u, u);
        assert!(tape.value(l).item().abs() < 1e-12);
    }
}

#[test]
fn layernorm_standardizes_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ps = ParamStore::new();
    let g = ps.add("g", Tensor::row_vector(vec![1.0; 6]));
    let b = ps.add("b", Tensor::zeros(1, 6));
    let mut tape = Tape::new(&ps);
    let x = tape.constant(random_tensor(&mut rng, 4, 6));
    let (gv, bv) = (tape.param(g), tape.param(b));
    let y = tape.layernorm(x, gv, bv);
    for r in 0..4 {
        let row = tape.value(y).row(r);
        let mean = row.iter().sum::<f64>() / 6.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
    }
}

#[test]
fn quadratic_gradient_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ps = ParamStore::new();
    let w = ps.add("w", random_tensor(&mut rng, 1, 5));
    let err = grad_check(
        |t| {
            let v = t.param(w);
            let sq = t.matmul_t(v, v);
            t.sum(sq)
        },
        &ps,
        1e-5,
    );
    assert!(err < 1e-8, "{err}");
}

#[test]
fn every_primitive_passes_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..3 {
        let (n, k, m) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5));
        let mut ps = ParamStore::new();
        let a = ps.add("a", random_tensor(&mut rng, n, k));
        let b = ps.add("b", random_tensor(&mut rng, k, m));
        let c = ps.add("c", random_tensor(&mut rng, n, k));
        let bias = ps.add("bias", random_tensor(&mut rng, 1, k));
        let bias_m = ps.add("bias_m", random_tensor(&mut rng, 1, m));
        let s = ps.add("s", random_tensor(&mut rng, 1, 1));
        let table = ps.add("table", random_tensor(&mut rng, 6, k));
        let seed = trial as u64;
        check("matmul", &ps, |t| {
            let (x, y) = (t.param(a), t.param(b));
            let z = t.matmul(x, y);
            weighted_sum(t, z, seed)
        });
        check("matmul_t", &ps, |t| {
            let (x, y) = (t.param(a), t.param(c));
            let z = t.matmul_t(x, y);
            weighted_sum(t, z, seed)
        });
        check("dense", &ps, |t| {
            let (x, w, bb) = (t.param(c), t.param(b), t.param(bias_m));
            let z = t.dense(x, w, bb);
            weighted_sum(t, z, seed)
        });
        check("add/scale/mul_scalar", &ps, |t| {
            let (x, y, sc) = (t.param(a), t.param(c), t.param(s));
            let z = t.add(x, y);
            let z = t.scale(z, 0.7);
            let z = t.mul_scalar(z, sc);
            weighted_sum(t, z, seed)
        });
        check("relu/tanh/softplus", &ps, |t| {
            let x = t.param(a);
            let r = t.relu(x);
            let h = t.tanh(x);
            let p = t.softplus(x);
            let z = t.concat_cols(&[r, h, p]);
            weighted_sum(t, z, seed)
        });
        check("layernorm", &ps, |t| {
            let x = t.param(c);
            let g = t.param(bias);
            let bb = t.constant(Tensor::row_vector(vec![0.3; k]));
            let z = t.layernorm(x, g, bb);
            weighted_sum(t, z, seed)
        });
        check("dropout mask", &ps, |t| {
            let x = t.param(a);
            let mut r = ChaCha8Rng::seed_from_u64(9);
            let z = t.dropout(x, 0.5, true, &mut r);
            weighted_sum(t, z, seed)
        });
        check("concat/slice", &ps, |t| {
            let (x, y) = (t.param(a), t.param(c));
            let z = t.concat_cols(&[x, y]);
            let z = t.slice_cols(z, 1, k);
            weighted_sum(t, z, seed)
        });
        check("mean_rows", &ps, |t| {
            let x = t.param(a);
            let z = t.mean_rows(x);
            weighted_sum(t, z, seed)
        });
        check("gather/scatter", &ps, |t| {
            let x = t.param(table);
            let g = t.gather(x, &[0, 3, 3, 5, 1]);
            let z = t.scatter_mean(g, &[1, 0, 1, 2, 1], 3);
            weighted_sum(t, z, seed)
        });
        check("gather_param", &ps, |t| {
            let g = t.gather_param(table, &[2, 2, 4]);
            weighted_sum(t, g, seed)
        });
        check("unit_normalize", &ps, |t| {
            let x = t.param(a);
            let z = t.unit_normalize(x);
            weighted_sum(t, z, seed)
        });
        check("log_softmax/cross_entropy", &ps, |t| {
            let x = t.param(bias);
            let ls = t.log_softmax(x);
            let ce = t.softmax_cross_entropy(x, k - 1);
            let w = weighted_sum(t, ls, seed);
            t.add(w, ce)
        });
        check("cosine_loss", &ps, |t| {
            let x = t.gather_param(table, &[0]);
            let y = t.gather_param(table, &[1]);
            t.cosine_loss(x, y)
        });
    }
}

#[test]
fn adam_zero_gradient_zero_l2_is_identity() {
    let mut ps = ParamStore::new();
    let w = ps.add("w", Tensor::row_vector(vec![0.5, -2.0]));
    let before = ps.clone();
    let mut opt = Adam::new(AdamConfig { l2: 0.0, ..AdamConfig::default() }, &ps);
    opt.step(&mut ps, &Gradients::zeros_like(&before)).unwrap();
    assert_eq!(ps.get(w), before.get(w));
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut ps = ParamStore::new();
    let w = ps.add("w", Tensor::scalar(0.0));
    let mut opt = Adam::new(AdamConfig::default(), &ps);
    let grads = {
        let mut t = Tape::new(&ps);
        let v = t.param(w);
        let l = t.sum(v);
        t.backward(l)
    };
    opt.step(&mut ps, &grads).unwrap();
    // m_hat = v_hat = 1, so the step is lr / (1 + eps).
    assert!((ps.get(w).item() + 3e-4 / (1.0 + 1e-8)).abs() < 1e-15);
}

#[test]
fn adam_decreases_convex_quadratic() {
    let mut ps = ParamStore::new();
    let w = ps.add("w", Tensor::row_vector(vec![1.0, -0.8, 0.6]));
    let coef = Tensor::row_vector(vec![1.0, 2.0, 3.0]);
    let mut opt = Adam::new(AdamConfig { lr: 3e-3, ..AdamConfig::default() }, &ps);
    let mut losses = Vec::new();
    for _ in 0..200 {
        let (loss, grads) = {
            let mut t = Tape::new(&ps);
            let v = t.param(w);
            let sq = t.mask(v, ps.get(w).data.clone());
            let z = t.mask(sq, coef.data.clone());
            let l = t.sum(z);
            (t.value(l).item(), t.backward(l))
        };
        losses.push(loss);
        opt.step(&mut ps, &grads).unwrap();
    }
    // The mask trick above treats one factor as constant; the true gradient
    // of sum(c w^2) is twice that, which only rescales Adam's step inputs.
    for pair in losses[5..].windows(2) {
        assert!(pair[1] < pair[0]);
    }
}

#[test]
fn adam_rejects_mismatched_gradients() {
    let mut ps = ParamStore::new();
    ps.add("w", Tensor::zeros(2, 2));
    let mut opt = Adam::new(AdamConfig::default(), &ps);
    let bad = Gradients { grads: vec![Some(Tensor::zeros(1, 1))] };
    assert!(matches!(opt.step(&mut ps, &bad), Err(AutodiffError::ShapeMismatch(_))));
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ck = Checkpoint {
        meta: "{\"h\":4}".into(),
        tensors: vec![("a".into(), random_tensor(&mut rng, 3, 2)), ("b".into(), Tensor::scalar(-1.5))],
    };
    let bytes = ck.to_bytes();
    assert_eq!(&bytes[..8], MAGIC);
    let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
    assert_eq!(back, ck);
    let mut broken = bytes.clone();
    broken[0] = b'X';
    assert!(Checkpoint::read_from(broken.as_slice()).is_err());
    assert!(Checkpoint::read_from(&bytes[..bytes.len() - 3]).is_err());
}
