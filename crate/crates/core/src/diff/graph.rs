use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::array::{matmul, matmul_nt, matmul_tn};
use super::params::{Gradients, ParamId, ParamStore};
use super::Array;
use crate::error::{Error, Result};

/// Forward-pass mode. Dropout is active only in `Train`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a value recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn node_id(self) -> usize {
        self.0
    }
}

/// How the right operand of a binary op is broadcast against the left.
#[derive(Clone, Copy, Debug)]
enum Bcast {
    Same,
    Scalar,
    Row,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Lookup { param: ParamId, idx: Vec<usize> },
    Gather { src: usize, idx: Vec<usize> },
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize, Bcast),
    Sub(usize, usize, Bcast),
    Mul(usize, usize, Bcast),
    Scale(usize, f64),
    AddScalar(usize),
    Concat(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols { src: usize, start: usize },
    Relu(usize),
    Sigmoid(usize),
    Softmax(usize),
    LayerNorm { src: usize, inv_std: Vec<f64> },
    Dropout { src: usize, mask: Vec<f64> },
    ScatterAdd { acc: Option<usize>, rows: usize, dest: Vec<usize> },
    Sum(usize),
    Mean(usize),
    SumRows(usize),
    CrossEntropy { logits: usize, target: usize, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Array,
    op: Op,
}

/// Computation record for one forward pass.
///
/// Ops are recorded eagerly; [`Graph::backward`] walks the record in reverse
/// and accumulates parameter gradients into a [`Gradients`] buffer. The
/// record is dropped with the graph.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    mode: Mode,
    rng: ChaCha8Rng,
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore, mode: Mode, seed: u64) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a `[1, 1]` var.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Array, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Array) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Array::zeros(rows, cols))
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Array::scalar(value))
    }

    /// Whole parameter as a tracked leaf.
    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.value(id).clone();
        self.push(value, Op::Param(id))
    }

    /// Embedding-row lookup straight from a parameter table.
    pub fn lookup(&mut self, id: ParamId, idx: &[usize]) -> Result<Var> {
        let table = self.store.value(id);
        let out = gather_rows(table, idx, "lookup")?;
        Ok(self.push(
            out,
            Op::Lookup {
                param: id,
                idx: idx.to_vec(),
            },
        ))
    }

    /// Row selection from a recorded value.
    pub fn gather(&mut self, src: Var, idx: &[usize]) -> Result<Var> {
        let out = gather_rows(&self.nodes[src.0].value, idx, "gather")?;
        Ok(self.push(
            out,
            Op::Gather {
                src: src.0,
                idx: idx.to_vec(),
            },
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.cols() != bv.rows() {
            return Err(Error::Shape {
                op: "matmul",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let out = matmul(av, bv);
        Ok(self.push(out, Op::MatMul(a.0, b.0)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.transpose();
        self.push(out, Op::Transpose(a.0))
    }

    fn bcast(&self, op: &'static str, a: Var, b: Var) -> Result<Bcast> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(Bcast::Same)
        } else if sb == [1, 1] {
            Ok(Bcast::Scalar)
        } else if sb[0] == 1 && sb[1] == sa[1] {
            Ok(Bcast::Row)
        } else {
            Err(Error::Shape {
                op,
                left: sa,
                right: sb,
            })
        }
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: fn(f64, f64) -> f64) -> Result<(Array, Bcast)> {
        let mode = self.bcast(name, a, b)?;
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mut out = av.clone();
        let cols = av.cols();
        match mode {
            Bcast::Same => {
                for (o, &y) in out.data_mut().iter_mut().zip(bv.data()) {
                    *o = f(*o, y);
                }
            }
            Bcast::Scalar => {
                let y = bv.item();
                out.data_mut().iter_mut().for_each(|o| *o = f(*o, y));
            }
            Bcast::Row => {
                let brow = bv.data();
                for (i, o) in out.data_mut().iter_mut().enumerate() {
                    *o = f(*o, brow[i % cols]);
                }
            }
        }
        Ok((out, mode))
    }

    /// Elementwise `a + b`; `b` may be the same shape, `[1, 1]`, or a `[1, cols]` row.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, m) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a.0, b.0, m)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, m) = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a.0, b.0, m)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, m) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a.0, b.0, m)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.scale_in_place(factor);
        self.push(out, Op::Scale(a.0, factor))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.data_mut().iter_mut().for_each(|v| *v += c);
        self.push(out, Op::AddScalar(a.0))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0])[0];
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[0] != rows {
                return Err(Error::Shape {
                    op: "concat",
                    left: self.shape(parts[0]),
                    right: s,
                });
            }
            cols += s[1];
        }
        let mut out = Array::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.row(r);
                out.row_mut(r)[c0..c0 + src.len()].copy_from_slice(src);
                c0 += src.len();
            }
        }
        Ok(self.push(out, Op::Concat(parts.iter().map(|p| p.0).collect())))
    }

    /// Stacks row blocks on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0])[1];
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = &self.nodes[p.0].value;
            if v.cols() != cols {
                return Err(Error::Shape {
                    op: "concat_rows",
                    left: self.shape(parts[0]),
                    right: v.shape(),
                });
            }
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        let out = Array::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.iter().map(|p| p.0).collect())))
    }

    /// Columns `start..end` of every row.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let src = &self.nodes[a.0].value;
        if start > end || end > src.cols() {
            return Err(Error::Index {
                op: "slice_cols",
                index: end,
                len: src.cols(),
            });
        }
        let mut out = Array::zeros(src.rows(), end - start);
        for r in 0..src.rows() {
            out.row_mut(r).copy_from_slice(&src.row(r)[start..end]);
        }
        Ok(self.push(out, Op::SliceCols { src: a.0, start }))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        self.push(out, Op::Sigmoid(a.0))
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::Softmax(a.0))
    }

    /// Parameter-free layer normalisation over the last axis (population variance).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        let cols = out.cols() as f64;
        let mut inv_std = Vec::with_capacity(out.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let mean = row.iter().sum::<f64>() / cols;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols;
            let is = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        self.push(out, Op::LayerNorm { src: a.0, inv_std })
    }

    /// Inverted dropout. Identity in eval mode or when `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if self.mode == Mode::Eval || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 - rate;
        let n = self.nodes[a.0].value.len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mut out = self.nodes[a.0].value.clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        Ok(self.push(out, Op::Dropout { src: a.0, mask }))
    }

    /// Sums row `i` of `rows` into output row `dest[i]` of a fresh `[out_rows, d]` array.
    pub fn scatter_add(&mut self, rows: Var, dest: &[usize], out_rows: usize) -> Result<Var> {
        let cols = self.shape(rows)[1];
        let acc = Array::zeros(out_rows, cols);
        let out = scatter_into(acc, &self.nodes[rows.0].value, dest)?;
        Ok(self.push(
            out,
            Op::ScatterAdd {
                acc: None,
                rows: rows.0,
                dest: dest.to_vec(),
            },
        ))
    }

    /// Like [`Graph::scatter_add`] but accumulates onto a copy of `acc`, in row order.
    pub fn scatter_add_into(&mut self, acc: Var, rows: Var, dest: &[usize]) -> Result<Var> {
        if self.shape(acc)[1] != self.shape(rows)[1] {
            return Err(Error::Shape {
                op: "scatter_add",
                left: self.shape(acc),
                right: self.shape(rows),
            });
        }
        let base = self.nodes[acc.0].value.clone();
        let out = scatter_into(base, &self.nodes[rows.0].value, dest)?;
        Ok(self.push(
            out,
            Op::ScatterAdd {
                acc: Some(acc.0),
                rows: rows.0,
                dest: dest.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data().iter().sum();
        self.push(Array::scalar(s), Op::Sum(a.0))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let s = v.data().iter().sum::<f64>() / v.len().max(1) as f64;
        self.push(Array::scalar(s), Op::Mean(a.0))
    }

    /// Column sums: `[n, d] -> [1, d]`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let mut out = Array::zeros(1, v.cols());
        for r in 0..v.rows() {
            for (o, x) in out.data_mut().iter_mut().zip(v.row(r)) {
                *o += x;
            }
        }
        self.push(out, Op::SumRows(a.0))
    }

    /// Softmax cross-entropy of a single `[1, C]` logit row against class `target`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let v = &self.nodes[logits.0].value;
        if v.rows() != 1 {
            return Err(Error::Shape {
                op: "cross_entropy",
                left: v.shape(),
                right: [1, v.cols()],
            });
        }
        if target >= v.cols() {
            return Err(Error::Index {
                op: "cross_entropy",
                index: target,
                len: v.cols(),
            });
        }
        let row = v.row(0);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let loss = lse - row[target];
        let probs = row.iter().map(|x| (x - lse).exp()).collect();
        Ok(self.push(
            Array::scalar(loss),
            Op::CrossEntropy {
                logits: logits.0,
                target,
                probs,
            },
        ))
    }

    /// Reverse-mode pass from a scalar `loss`, accumulating into `grads`.
    pub fn backward(&self, loss: Var, grads: &mut Gradients) -> Result<()> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut g: Vec<Option<Array>> = Vec::with_capacity(loss.0 + 1);
        g.resize_with(loss.0 + 1, || None);
        g[loss.0] = Some(Array::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(dy) = g[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads.get_mut(*id).add_assign(&dy),
                Op::Lookup { param, idx } => {
                    let target = grads.get_mut(*param);
                    for (r, &k) in idx.iter().enumerate() {
                        for (t, d) in target.row_mut(k).iter_mut().zip(dy.row(r)) {
                            *t += d;
                        }
                    }
                }
                Op::Gather { src, idx } => {
                    let s = self.nodes[*src].value.shape();
                    let acc = slot(&mut g, *src, s);
                    for (r, &k) in idx.iter().enumerate() {
                        for (t, d) in acc.row_mut(k).iter_mut().zip(dy.row(r)) {
                            *t += d;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let da = matmul_nt(&dy, bv);
                    let db = matmul_tn(av, &dy);
                    slot(&mut g, *a, av.shape()).add_assign(&da);
                    slot(&mut g, *b, bv.shape()).add_assign(&db);
                }
                Op::Transpose(a) => {
                    let s = self.nodes[*a].value.shape();
                    slot(&mut g, *a, s).add_assign(&dy.transpose());
                }
                Op::Add(a, b, m) | Op::Sub(a, b, m) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let sa = self.nodes[*a].value.shape();
                    slot(&mut g, *a, sa).add_assign(&dy);
                    let sb = self.nodes[*b].value.shape();
                    let db = reduce_bcast(&dy, *m, sb, |d, _| sign * d, None);
                    slot(&mut g, *b, sb).add_assign(&db);
                }
                Op::Mul(a, b, m) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let mut da = dy.clone();
                    let cols = da.cols();
                    match m {
                        Bcast::Same => {
                            for (d, y) in da.data_mut().iter_mut().zip(bv.data()) {
                                *d *= y;
                            }
                        }
                        Bcast::Scalar => da.scale_in_place(bv.item()),
                        Bcast::Row => {
                            for (k, d) in da.data_mut().iter_mut().enumerate() {
                                *d *= bv.data()[k % cols];
                            }
                        }
                    }
                    let db = reduce_bcast(&dy, *m, bv.shape(), |d, x| d * x, Some(av));
                    slot(&mut g, *a, av.shape()).add_assign(&da);
                    slot(&mut g, *b, bv.shape()).add_assign(&db);
                }
                Op::Scale(a, f) => {
                    let mut d = dy.clone();
                    d.scale_in_place(*f);
                    slot(&mut g, *a, d.shape()).add_assign(&d);
                }
                Op::AddScalar(a) => slot(&mut g, *a, dy.shape()).add_assign(&dy),
                Op::Concat(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let s = self.nodes[p].value.shape();
                        let acc = slot(&mut g, p, s);
                        for r in 0..s[0] {
                            for (t, d) in acc.row_mut(r).iter_mut().zip(&dy.row(r)[c0..c0 + s[1]]) {
                                *t += d;
                            }
                        }
                        c0 += s[1];
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let s = self.nodes[p].value.shape();
                        let n = s[0] * s[1];
                        let acc = slot(&mut g, p, s);
                        for (t, d) in acc.data_mut().iter_mut().zip(&dy.data()[off..off + n]) {
                            *t += d;
                        }
                        off += n;
                    }
                }
                Op::SliceCols { src, start } => {
                    let s = self.nodes[*src].value.shape();
                    let w = dy.cols();
                    let acc = slot(&mut g, *src, s);
                    for r in 0..s[0] {
                        for (t, d) in acc.row_mut(r)[*start..*start + w].iter_mut().zip(dy.row(r)) {
                            *t += d;
                        }
                    }
                }
                Op::Relu(a) => {
                    let x = &self.nodes[*a].value;
                    let mut d = dy.clone();
                    for (dv, xv) in d.data_mut().iter_mut().zip(x.data()) {
                        if *xv <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                    slot(&mut g, *a, d.shape()).add_assign(&d);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let mut d = dy.clone();
                    for (dv, yv) in d.data_mut().iter_mut().zip(y.data()) {
                        *dv *= yv * (1.0 - yv);
                    }
                    slot(&mut g, *a, d.shape()).add_assign(&d);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut d = dy.clone();
                    for r in 0..d.rows() {
                        let yr = y.row(r);
                        let dot: f64 = dy.row(r).iter().zip(yr).map(|(a, b)| a * b).sum();
                        for (dv, yv) in d.row_mut(r).iter_mut().zip(yr) {
                            *dv = yv * (*dv - dot);
                        }
                    }
                    slot(&mut g, *a, d.shape()).add_assign(&d);
                }
                Op::LayerNorm { src, inv_std } => {
                    let y = &node.value;
                    let n = y.cols() as f64;
                    let mut d = dy.clone();
                    for (r, &istd) in inv_std.iter().enumerate() {
                        let yr = y.row(r);
                        let dr = dy.row(r);
                        let mean_d = dr.iter().sum::<f64>() / n;
                        let mean_dy = dr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((dv, &g0), &yv) in d.row_mut(r).iter_mut().zip(dr).zip(yr) {
                            *dv = istd * (g0 - mean_d - yv * mean_dy);
                        }
                    }
                    slot(&mut g, *src, d.shape()).add_assign(&d);
                }
                Op::Dropout { src, mask } => {
                    let mut d = dy.clone();
                    for (dv, m) in d.data_mut().iter_mut().zip(mask) {
                        *dv *= m;
                    }
                    slot(&mut g, *src, d.shape()).add_assign(&d);
                }
                Op::ScatterAdd { acc, rows, dest } => {
                    if let Some(a) = acc {
                        slot(&mut g, *a, dy.shape()).add_assign(&dy);
                    }
                    let s = self.nodes[*rows].value.shape();
                    let target = slot(&mut g, *rows, s);
                    for (r, &k) in dest.iter().enumerate() {
                        for (t, d) in target.row_mut(r).iter_mut().zip(dy.row(k)) {
                            *t += d;
                        }
                    }
                }
                Op::Sum(a) => {
                    let s = self.nodes[*a].value.shape();
                    let d = Array::filled(s[0], s[1], dy.item());
                    slot(&mut g, *a, s).add_assign(&d);
                }
                Op::Mean(a) => {
                    let s = self.nodes[*a].value.shape();
                    let n = (s[0] * s[1]).max(1) as f64;
                    let d = Array::filled(s[0], s[1], dy.item() / n);
                    slot(&mut g, *a, s).add_assign(&d);
                }
                Op::SumRows(a) => {
                    let s = self.nodes[*a].value.shape();
                    let acc = slot(&mut g, *a, s);
                    for r in 0..s[0] {
                        for (t, d) in acc.row_mut(r).iter_mut().zip(dy.row(0)) {
                            *t += d;
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    target,
                    probs,
                } => {
                    let up = dy.item();
                    let mut d = Array::row_vector(probs.iter().map(|p| p * up).collect());
                    d.data_mut()[*target] -= up;
                    slot(&mut g, *logits, d.shape()).add_assign(&d);
                }
            }
        }
        Ok(())
    }
}

fn slot(g: &mut [Option<Array>], i: usize, shape: [usize; 2]) -> &mut Array {
    g[i].get_or_insert_with(|| Array::zeros(shape[0], shape[1]))
}

/// Reduces an upstream gradient to the right operand's broadcast shape.
fn reduce_bcast(
    dy: &Array,
    mode: Bcast,
    shape: [usize; 2],
    f: impl Fn(f64, f64) -> f64,
    other: Option<&Array>,
) -> Array {
    let x = |k: usize| other.map_or(0.0, |a| a.data()[k]);
    match mode {
        Bcast::Same => {
            let data = dy.data().iter().enumerate().map(|(k, &d)| f(d, x(k))).collect();
            Array::from_vec(shape[0], shape[1], data).expect("same shape")
        }
        Bcast::Scalar => {
            let s = dy.data().iter().enumerate().map(|(k, &d)| f(d, x(k))).sum();
            Array::scalar(s)
        }
        Bcast::Row => {
            let cols = shape[1];
            let mut out = Array::zeros(1, cols);
            for (k, &d) in dy.data().iter().enumerate() {
                out.data_mut()[k % cols] += f(d, x(k));
            }
            out
        }
    }
}

fn gather_rows(table: &Array, idx: &[usize], op: &'static str) -> Result<Array> {
    let cols = table.cols();
    let mut out = Array::zeros(idx.len(), cols);
    for (r, &k) in idx.iter().enumerate() {
        if k >= table.rows() {
            return Err(Error::Index {
                op,
                index: k,
                len: table.rows(),
            });
        }
        out.row_mut(r).copy_from_slice(table.row(k));
    }
    Ok(out)
}

fn scatter_into(mut acc: Array, rows: &Array, dest: &[usize]) -> Result<Array> {
    if dest.len() != rows.rows() {
        return Err(Error::invalid(format!(
            "scatter_add: {} destinations for {} rows",
            dest.len(),
            rows.rows()
        )));
    }
    for (r, &k) in dest.iter().enumerate() {
        if k >= acc.rows() {
            return Err(Error::Index {
                op: "scatter_add",
                index: k,
                len: acc.rows(),
            });
        }
        for (t, v) in acc.row_mut(k).iter_mut().zip(rows.row(r)) {
            *t += v;
        }
    }
    Ok(acc)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}
