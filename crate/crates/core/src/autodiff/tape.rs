use std::collections::BTreeMap;

use rand::Rng;

use super::tensor::{matmul_into, matmul_t_into, t_matmul_into, Tensor};

pub const LAYERNORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, t: Tensor) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(t);
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, p: ParamId) -> &Tensor {
        &self.tensors[p.0]
    }

    pub fn get_mut(&mut self, p: ParamId) -> &mut Tensor {
        &mut self.tensors[p.0]
    }

    pub fn name(&self, p: ParamId) -> &str {
        &self.names[p.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }
}

/// Per-parameter gradient accumulators; `None` means zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Gradients { grads: vec![None; params.len()] }
    }

    pub fn get(&self, p: ParamId) -> Option<&Tensor> {
        self.grads.get(p.0).and_then(Option::as_ref)
    }

    fn slot(&mut self, p: ParamId, rows: usize, cols: usize) -> &mut Tensor {
        if self.grads.len() <= p.0 {
            self.grads.resize(p.0 + 1, None);
        }
        self.grads[p.0].get_or_insert_with(|| Tensor::zeros(rows, cols))
    }

    /// Adds `scale * other` into these gradients.
    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                let dst = self.grads[i].get_or_insert_with(|| Tensor::zeros(g.rows, g.cols));
                for (a, b) in dst.data.iter_mut().zip(&g.data) {
                    *a += scale * b;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    GatherParam(ParamId, Vec<usize>),
    Gather(Var, Vec<usize>),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    Relu(Var),
    Tanh(Var),
    Softplus(Var),
    Mask(Var, Vec<f64>),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    MeanRows(Var),
    Sum(Var),
    ScatterMean { x: Var, dst: Vec<u32>, weight: Vec<f64> },
    UnitNormalize { x: Var, norms: Vec<f64> },
    LogSoftmax(Var),
    Pick(Var, usize, usize),
    CosineLoss(Var, Var),
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

struct Node {
    value: Value,
    op: Op,
}

/// Reverse-mode tape. Nodes are appended in evaluation order; `backward`
/// walks them in exact reverse.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(p) => self.params.get(*p),
        }
    }

    fn push(&mut self, t: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Value::Owned(t), op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Const)
    }

    pub fn param(&mut self, p: ParamId) -> Var {
        self.nodes.push(Node { value: Value::Param(p), op: Op::Param(p) });
        Var(self.nodes.len() - 1)
    }

    /// Rows `idx` of a parameter table, without materializing the table.
    pub fn gather_param(&mut self, p: ParamId, idx: &[usize]) -> Var {
        let t = self.params.get(p);
        let mut data = Vec::with_capacity(idx.len() * t.cols);
        for &i in idx {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::new(idx.len(), t.cols, data);
        self.push(out, Op::GatherParam(p, idx.to_vec()))
    }

    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Var {
        let t = self.value(x);
        let mut data = Vec::with_capacity(idx.len() * t.cols);
        for &i in idx {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::new(idx.len(), t.cols, data);
        self.push(out, Op::Gather(x, idx.to_vec()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols, y.rows, "matmul shape mismatch");
        let mut out = Tensor::zeros(x.rows, y.cols);
        matmul_into(&x.data, &y.data, &mut out.data, x.rows, x.cols, y.cols);
        self.push(out, Op::MatMul(a, b))
    }

    /// `a * b^T`: inner products of every row of `a` with every row of `b`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols, y.cols, "matmul_t shape mismatch");
        let mut out = Tensor::zeros(x.rows, y.rows);
        matmul_t_into(&x.data, &y.data, &mut out.data, x.rows, x.cols, y.rows);
        self.push(out, Op::MatMulT(a, b))
    }

    /// Adds a `1 x m` bias to every row.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (t, bias) = (self.value(x), self.value(b));
        assert_eq!((bias.rows, bias.cols), (1, t.cols), "bias shape mismatch");
        let mut out = t.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        self.push(out, Op::AddBias(x, b))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        self.push(out, Op::Scale(x, c))
    }

    /// Multiplies every entry of `x` by the `1 x 1` value `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Var {
        let c = self.value(s).item();
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        self.push(out, Op::MulScalar(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = v.tanh());
        self.push(out, Op::Tanh(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = softplus(*v));
        self.push(out, Op::Softplus(x))
    }

    /// Inverted dropout: zeroes entries with probability `p` and rescales the
    /// rest by `1/(1-p)`. Identity when not training.
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, rng: &mut impl Rng) -> Var {
        if !training || p == 0.0 {
            return x;
        }
        let n = self.value(x).len();
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        self.mask(x, mask)
    }

    pub fn mask(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let mut out = self.value(x).clone();
        assert_eq!(mask.len(), out.len());
        for (o, m) in out.data.iter_mut().zip(&mask) {
            *o *= m;
        }
        self.push(out, Op::Mask(x, mask))
    }

    /// Per-row standardization followed by a learned affine map.
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let t = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        assert_eq!((g.rows, g.cols, b.rows, b.cols), (1, t.cols, 1, t.cols), "layernorm shape mismatch");
        let (rows, cols) = (t.rows, t.cols);
        let mut xhat = vec![0.0; t.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let row = t.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LAYERNORM_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[r * cols + c] = h;
                out.data[r * cols + c] = h * g.data[c] + b.data[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Var {
        let rows = self.value(xs[0]).rows;
        let cols: usize = xs.iter().map(|v| self.value(*v).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for v in xs {
                let t = self.value(*v);
                assert_eq!(t.rows, rows, "concat row mismatch");
                out.data[r * cols + off..r * cols + off + t.cols].copy_from_slice(t.row(r));
                off += t.cols;
            }
        }
        self.push(out, Op::Concat(xs.to_vec()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        assert!(start + len <= t.cols, "slice out of range");
        let mut out = Tensor::zeros(t.rows, len);
        for r in 0..t.rows {
            out.row_mut(r).copy_from_slice(&t.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(x, start))
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let mut out = Tensor::zeros(1, t.cols);
        for r in 0..t.rows {
            for (o, v) in out.data.iter_mut().zip(t.row(r)) {
                *o += v;
            }
        }
        let n = t.rows as f64;
        out.data.iter_mut().for_each(|v| *v /= n);
        self.push(out, Op::MeanRows(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// `out[dst[e]] += weight[e] * x[e]` over `n` output rows.
    pub fn scatter_weighted(&mut self, x: Var, dst: &[u32], weight: Vec<f64>, n: usize) -> Var {
        let t = self.value(x);
        assert_eq!(t.rows, dst.len());
        let mut out = Tensor::zeros(n, t.cols);
        for (e, &d) in dst.iter().enumerate() {
            let w = weight[e];
            let src = t.row(e);
            for (o, v) in out.row_mut(d as usize).iter_mut().zip(src) {
                *o += w * v;
            }
        }
        self.push(out, Op::ScatterMean { x, dst: dst.to_vec(), weight })
    }

    /// Mean of incoming rows per destination: `weight = 1/deg(dst)`.
    pub fn scatter_mean(&mut self, x: Var, dst: &[u32], n: usize) -> Var {
        let mut deg = vec![0.0f64; n];
        for &d in dst {
            deg[d as usize] += 1.0;
        }
        let weight = dst.iter().map(|&d| 1.0 / deg[d as usize]).collect();
        self.scatter_weighted(x, dst, weight, n)
    }

    pub fn unit_normalize(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        let mut norms = Vec::with_capacity(out.rows);
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            norms.push(n);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        self.push(out, Op::UnitNormalize { x, norms })
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push(out, Op::LogSoftmax(x))
    }

    pub fn pick(&mut self, x: Var, r: usize, c: usize) -> Var {
        let v = self.value(x).get(r, c);
        self.push(Tensor::scalar(v), Op::Pick(x, r, c))
    }

    /// `-log softmax(logits)[target]` for a single row of logits.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let ls = self.log_softmax(logits);
        let p = self.pick(ls, 0, target);
        self.scale(p, -1.0)
    }

    /// `1 - a.b / (|a| |b|)` for two row vectors.
    pub fn cosine_loss(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "cosine shape mismatch");
        let dot: f64 = x.data.iter().zip(&y.data).map(|(p, q)| p * q).sum();
        let nx = x.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.push(Tensor::scalar(1.0 - dot / (nx * ny)), Op::CosineLoss(a, b))
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut pg = Gradients::zeros_like(self.params);
        self.backward_into(loss, 1.0, &mut pg);
        pg
    }

    /// Accumulates `seed * d loss / d params` into `pg`.
    pub fn backward_into(&self, loss: Var, seed: f64, pg: &mut Gradients) {
        assert_eq!(self.value(loss).len(), 1, "backward from a non-scalar");
        let mut g: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        g[loss.0] = Some(Tensor::scalar(seed));
        for i in (0..=loss.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            let out = match &node.value {
                Value::Owned(t) => t,
                Value::Param(p) => self.params.get(*p),
            };
            match &node.op {
                Op::Const => {}
                Op::Param(p) => pg.slot(*p, gi.rows, gi.cols).add_assign(&gi),
                Op::GatherParam(p, idx) => {
                    let t = self.params.get(*p);
                    let dst = pg.slot(*p, t.rows, t.cols);
                    for (k, &r) in idx.iter().enumerate() {
                        for (d, s) in dst.row_mut(r).iter_mut().zip(gi.row(k)) {
                            *d += s;
                        }
                    }
                }
                Op::Gather(x, idx) => {
                    let t = self.value(*x);
                    let dst = grad_slot(&mut g, *x, t.rows, t.cols);
                    for (k, &r) in idx.iter().enumerate() {
                        for (d, s) in dst.row_mut(r).iter_mut().zip(gi.row(k)) {
                            *d += s;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let ga = grad_slot(&mut g, *a, x.rows, x.cols);
                    matmul_t_into(&gi.data, &y.data, &mut ga.data, x.rows, y.cols, x.cols);
                    let gb = grad_slot(&mut g, *b, y.rows, y.cols);
                    t_matmul_into(&x.data, &gi.data, &mut gb.data, x.rows, x.cols, y.cols);
                }
                Op::MatMulT(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let ga = grad_slot(&mut g, *a, x.rows, x.cols);
                    matmul_into(&gi.data, &y.data, &mut ga.data, x.rows, y.rows, x.cols);
                    let gb = grad_slot(&mut g, *b, y.rows, y.cols);
                    t_matmul_into(&gi.data, &x.data, &mut gb.data, x.rows, y.rows, x.cols);
                }
                Op::AddBias(x, b) => {
                    grad_slot(&mut g, *x, gi.rows, gi.cols).add_assign(&gi);
                    let gb = grad_slot(&mut g, *b, 1, gi.cols);
                    for r in 0..gi.rows {
                        for (d, s) in gb.data.iter_mut().zip(gi.row(r)) {
                            *d += s;
                        }
                    }
                }
                Op::Add(a, b) => {
                    grad_slot(&mut g, *a, gi.rows, gi.cols).add_assign(&gi);
                    grad_slot(&mut g, *b, gi.rows, gi.cols).add_assign(&gi);
                }
                Op::Scale(x, c) => {
                    let d = grad_slot(&mut g, *x, gi.rows, gi.cols);
                    for (d, s) in d.data.iter_mut().zip(&gi.data) {
                        *d += c * s;
                    }
                }
                Op::MulScalar(x, s) => {
                    let c = self.value(*s).item();
                    let xv = self.value(*x);
                    let ds: f64 = xv.data.iter().zip(&gi.data).map(|(a, b)| a * b).sum();
                    let d = grad_slot(&mut g, *x, gi.rows, gi.cols);
                    for (d, v) in d.data.iter_mut().zip(&gi.data) {
                        *d += c * v;
                    }
                    grad_slot(&mut g, *s, 1, 1).data[0] += ds;
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let d = grad_slot(&mut g, *x, gi.rows, gi.cols);
                    for ((d, s), v) in d.data.iter_mut().zip(&gi.data).zip(&xv.data) {
                        if *v > 0.0 {
                            *d += s;
                        }
                    }
                }
                Op::Tanh(x) => {
                    let d = grad_slot(&mut g, *x, gi.rows, gi.cols);
                    for ((d, s), y) in d.data.iter_mut().zip(&gi.data).zip(&out.data) {
                        *d += s * (1.0 - y * y);
                    }
                }
                Op::Softplus(x) => {
                    let xv = self.value(*x);
                    let d = grad_slot(&mut g, *x, gi.rows, gi.cols);
                    for ((d, s), v) in d.data.iter_mut().zip(&gi.data).zip(&xv.data) {
                        *d += s * sigmoid(*v);
                    }
                }
                Op::Mask(x, m) => {
                    let d = grad_slot(&mut g, *x, gi.rows, gi.cols);
                    for ((d, s), m) in d.data.iter_mut().zip(&gi.data).zip(m) {
                        *d += s * m;
                    }
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let cols = gi.cols;
                    let gam = self.value(*gamma).data.clone();
                    {
                        let gg = grad_slot(&mut g, *gamma, 1, cols);
                        for r in 0..gi.rows {
                            for c in 0..cols {
                                gg.data[c] += gi.data[r * cols + c] * xhat[r * cols + c];
                            }
                        }
                    }
                    {
                        let gb = grad_slot(&mut g, *beta, 1, cols);
                        for r in 0..gi.rows {
                            for c in 0..cols {
                                gb.data[c] += gi.data[r * cols + c];
                            }
                        }
                    }
                    let gx = grad_slot(&mut g, *x, gi.rows, cols);
                    let n = cols as f64;
                    for r in 0..gi.rows {
                        let dxhat: Vec<f64> = (0..cols).map(|c| gi.data[r * cols + c] * gam[c]).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / n;
                        let mean_dx = (0..cols).map(|c| dxhat[c] * xhat[r * cols + c]).sum::<f64>() / n;
                        for c in 0..cols {
                            gx.data[r * cols + c] +=
                                inv_std[r] * (dxhat[c] - mean_d - xhat[r * cols + c] * mean_dx);
                        }
                    }
                }
                Op::Concat(xs) => {
                    let mut off = 0;
                    for v in xs {
                        let c = self.value(*v).cols;
                        let d = grad_slot(&mut g, *v, gi.rows, c);
                        for r in 0..gi.rows {
                            for (dd, s) in d.row_mut(r).iter_mut().zip(&gi.row(r)[off..off + c]) {
                                *dd += s;
                            }
                        }
                        off += c;
                    }
                }
                Op::SliceCols(x, start) => {
                    let t = self.value(*x);
                    let d = grad_slot(&mut g, *x, t.rows, t.cols);
                    for r in 0..gi.rows {
                        for (dd, s) in d.row_mut(r)[*start..*start + gi.cols].iter_mut().zip(gi.row(r)) {
                            *dd += s;
                        }
                    }
                }
                Op::MeanRows(x) => {
                    let t = self.value(*x);
                    let n = t.rows as f64;
                    let d = grad_slot(&mut g, *x, t.rows, t.cols);
                    for r in 0..t.rows {
                        for (dd, s) in d.row_mut(r).iter_mut().zip(&gi.data) {
                            *dd += s / n;
                        }
                    }
                }
                Op::Sum(x) => {
                    let t = self.value(*x);
                    let s = gi.item();
                    let d = grad_slot(&mut g, *x, t.rows, t.cols);
                    d.data.iter_mut().for_each(|v| *v += s);
                }
                Op::ScatterMean { x, dst, weight } => {
                    let t = self.value(*x);
                    let d = grad_slot(&mut g, *x, t.rows, t.cols);
                    for (e, &n) in dst.iter().enumerate() {
                        let w = weight[e];
                        for (dd, s) in d.row_mut(e).iter_mut().zip(gi.row(n as usize)) {
                            *dd += w * s;
                        }
                    }
                }
                Op::UnitNormalize { x, norms } => {
                    let d = grad_slot(&mut g, *x, gi.rows, gi.cols);
                    for r in 0..gi.rows {
                        let n = norms[r];
                        if n == 0.0 {
                            continue;
                        }
                        let y = out.row(r);
                        let gr = gi.row(r);
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (c, dd) in d.row_mut(r).iter_mut().enumerate() {
                            *dd += (gr[c] - y[c] * dot) / n;
                        }
                    }
                }
                Op::LogSoftmax(x) => {
                    let d = grad_slot(&mut g, *x, gi.rows, gi.cols);
                    for r in 0..gi.rows {
                        let gr = gi.row(r);
                        let total: f64 = gr.iter().sum();
                        for (c, dd) in d.row_mut(r).iter_mut().enumerate() {
                            *dd += gr[c] - out.get(r, c).exp() * total;
                        }
                    }
                }
                Op::Pick(x, r, c) => {
                    let t = self.value(*x);
                    let d = grad_slot(&mut g, *x, t.rows, t.cols);
                    d.data[r * t.cols + c] += gi.item();
                }
                Op::CosineLoss(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let s = gi.item();
                    let dot: f64 = x.data.iter().zip(&y.data).map(|(p, q)| p * q).sum();
                    let nx = x.data.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let ny = y.data.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let (xd, yd) = (x.data.clone(), y.data.clone());
                    let cos = dot / (nx * ny);
                    let ga = grad_slot(&mut g, *a, x.rows, x.cols);
                    for (k, dd) in ga.data.iter_mut().enumerate() {
                        *dd -= s * (yd[k] / (nx * ny) - cos * xd[k] / (nx * nx));
                    }
                    let gb = grad_slot(&mut g, *b, y.rows, y.cols);
                    for (k, dd) in gb.data.iter_mut().enumerate() {
                        *dd -= s * (xd[k] / (nx * ny) - cos * yd[k] / (ny * ny));
                    }
                }
            }
        }
    }
}

fn grad_slot(g: &mut [Option<Tensor>], v: Var, rows: usize, cols: usize) -> &mut Tensor {
    g[v.0].get_or_insert_with(|| Tensor::zeros(rows, cols))
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_inverse(y: f64) -> f64 {
    y.exp_m1().ln()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
