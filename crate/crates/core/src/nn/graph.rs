//! Reverse-mode tape over dense `f64` buffers.
//!
//! Nodes are appended in evaluation order, so a reverse sweep is a valid
//! topological order for backpropagation. Parameter nodes read their values
//! straight from the borrowed [`ParamSet`].

use std::collections::HashMap;

use rand::Rng;

use super::gemm::{gemm, View};
use super::tensor::{Gradients, ParamSet};
use crate::error::{Error, Result};
use crate::par::{map_range, Parallelism};
use crate::util::{sigmoid, softplus};

/// Additive bias applied to masked attention keys.
pub const MASK_BIAS: f64 = -1e9;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    AddBroadcast { x: Var, c: Var },
    Embedding { table: Var, ids: Vec<usize> },
    ScalarEmbed { x: Var, w: Var, b: Var },
    Concat1 { a: Var, b: Var },
    PrependRow { row: Var, x: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Relu(Var),
    Scale { x: Var, mask: Vec<f64> },
    Attention { q: Var, k: Var, v: Var, heads: usize, probs: Vec<f64> },
    SelectFirst(Var),
    Reshape(Var),
    Bce { logits: Var, labels: Vec<f64> },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_nodes: HashMap<usize, Var>,
    parallelism: Parallelism,
    backward_done: bool,
}

fn shape_err(msg: String) -> Error {
    Error::TensorShape(msg)
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            parallelism: Parallelism::default(),
            backward_done: false,
        }
    }

    pub fn with_parallelism(mut self, p: Parallelism) -> Self {
        self.parallelism = p;
        self
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => &self.params.tensor(id).data,
            _ => &self.nodes[v.0].value,
        }
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    /// Attention probabilities `[batch, heads, seq, seq]` of an attention node.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn input(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(shape_err(format!("input shape {shape:?} vs {} values", data.len())));
        }
        Ok(self.push(shape.to_vec(), data, Op::Input, false))
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        let id = self.params.id(name)?;
        if let Some(&v) = self.param_nodes.get(&id) {
            return Ok(v);
        }
        let shape = self.params.tensor(id).shape.clone();
        let v = self.push(shape, Vec::new(), Op::Param(id), true);
        self.param_nodes.insert(id, v);
        Ok(v)
    }

    /// `x · w + b` over the last axis; `x: [.., in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 || xs.last() != Some(&ws[0]) {
            return Err(shape_err(format!("linear: x {xs:?} with w {ws:?}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[1]] {
                return Err(shape_err(format!("linear: bias {:?} for out {}", self.shape(b), ws[1])));
            }
        }
        let (inp, out) = (ws[0], ws[1]);
        let n = self.value(x).len() / inp.max(1);
        let mut y = vec![0.0; n * out];
        if let Some(b) = b {
            let bv = self.value(b);
            for row in y.chunks_mut(out) {
                row.copy_from_slice(bv);
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        gemm(
            n,
            inp,
            out,
            1.0,
            self.value(x),
            View::row_major(0, inp),
            self.value(w),
            View::row_major(0, out),
            beta,
            &mut y,
            View::row_major(0, out),
        );
        let mut shape = xs;
        *shape.last_mut().expect("non-empty") = out;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(shape, y, Op::Linear { x, w, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(format!("add: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let y = self.value(a).iter().zip(self.value(b)).map(|(p, q)| p + q).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), y, Op::Add(a, b), rg))
    }

    /// `x: [B, ..rest]` plus `c: [..rest]` broadcast over the leading axis.
    pub fn add_broadcast(&mut self, x: Var, c: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 || xs[1..] != *self.shape(c) {
            return Err(shape_err(format!("add_broadcast: {xs:?} vs {:?}", self.shape(c))));
        }
        let cv = self.value(c);
        let y = self
            .value(x)
            .chunks(cv.len().max(1))
            .flat_map(|row| row.iter().zip(cv).map(|(p, q)| p + q))
            .collect();
        let rg = self.rg(x) || self.rg(c);
        Ok(self.push(xs, y, Op::AddBroadcast { x, c }, rg))
    }

    /// Rows of `table: [V, d]` gathered by `ids`, shaped `out_shape ++ [d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], out_shape: &[usize]) -> Result<Var> {
        let ts = self.shape(table).to_vec();
        if ts.len() != 2 || out_shape.iter().product::<usize>() != ids.len() {
            return Err(shape_err(format!("embedding: table {ts:?}, {} ids for {out_shape:?}", ids.len())));
        }
        let (vocab, d) = (ts[0], ts[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(shape_err(format!("embedding id {bad} out of range {vocab}")));
        }
        let tv = self.value(table);
        let mut y = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            y.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let mut shape = out_shape.to_vec();
        shape.push(d);
        let rg = self.rg(table);
        Ok(self.push(shape, y, Op::Embedding { table, ids: ids.to_vec() }, rg))
    }

    /// Each scalar of `x` becomes `x * w + b` with `w, b: [d]`.
    pub fn scalar_embed(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let d = self.shape(w).iter().product::<usize>();
        if self.shape(b) != self.shape(w) || self.shape(w).len() != 1 {
            return Err(shape_err("scalar_embed: w and b must be [d]".into()));
        }
        let (wv, bv) = (self.value(w), self.value(b));
        let y = self
            .value(x)
            .iter()
            .flat_map(|&s| wv.iter().zip(bv).map(move |(wi, bi)| s * wi + bi))
            .collect();
        let mut shape = self.shape(x).to_vec();
        shape.push(d);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(shape, y, Op::ScalarEmbed { x, w, b }, rg))
    }

    /// Concatenate `[B, S1, d]` and `[B, S2, d]` along the sequence axis.
    pub fn concat_seq(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[2] {
            return Err(shape_err(format!("concat_seq: {sa:?} vs {sb:?}")));
        }
        let (bsz, d) = (sa[0], sa[2]);
        let (la, lb) = (sa[1] * d, sb[1] * d);
        let (av, bv) = (self.value(a), self.value(b));
        let mut y = Vec::with_capacity(bsz * (la + lb));
        for i in 0..bsz {
            y.extend_from_slice(&av[i * la..(i + 1) * la]);
            y.extend_from_slice(&bv[i * lb..(i + 1) * lb]);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![bsz, sa[1] + sb[1], d], y, Op::Concat1 { a, b }, rg))
    }

    /// Put `row: [d]` in front of every sequence of `x: [B, S, d]`.
    pub fn prepend_row(&mut self, row: Var, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || self.shape(row) != [xs[2]] {
            return Err(shape_err(format!("prepend_row: {:?} before {xs:?}", self.shape(row))));
        }
        let (bsz, s, d) = (xs[0], xs[1], xs[2]);
        let (rv, xv) = (self.value(row), self.value(x));
        let mut y = Vec::with_capacity(bsz * (s + 1) * d);
        for i in 0..bsz {
            y.extend_from_slice(rv);
            y.extend_from_slice(&xv[i * s * d..(i + 1) * s * d]);
        }
        let rg = self.rg(row) || self.rg(x);
        Ok(self.push(vec![bsz, s + 1, d], y, Op::PrependRow { row, x }, rg))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let d = *self.shape(x).last().ok_or_else(|| shape_err("layer_norm on scalar".into()))?;
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(shape_err("layer_norm: gain/bias must be [d]".into()));
        }
        let xv = self.value(x);
        let (gv, bv) = (self.value(gain), self.value(bias));
        let rows = xv.len() / d;
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        let mut y = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                y[r * d + j] = h * gv[j] + bv[j];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, y, Op::LayerNorm { x, gain, bias, xhat, inv_std }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), y, Op::Relu(x), rg)
    }

    /// Inverted dropout with keep-probability `1 - p`.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let y = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), y, Op::Scale { x, mask }, rg)
    }

    /// Multi-head scaled dot-product attention.
    ///
    /// `q, k, v: [B, S, d]`, `key_mask: [B * S]` with 1 for visible keys.
    /// Masked keys get [`MASK_BIAS`] added before the softmax, so they
    /// receive exactly zero weight.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, key_mask: &[f64], heads: usize) -> Result<Var> {
        let s = self.shape(q).to_vec();
        if s.len() != 3 || self.shape(k) != s.as_slice() || self.shape(v) != s.as_slice() {
            return Err(shape_err("attention: q, k, v must share [B, S, d]".into()));
        }
        let (bsz, seq, d) = (s[0], s[1], s[2]);
        if heads == 0 || d % heads != 0 {
            return Err(shape_err(format!("d_model {d} not divisible by {heads} heads")));
        }
        if key_mask.len() != bsz * seq {
            return Err(shape_err(format!("mask has {} entries for [{bsz}, {seq}]", key_mask.len())));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let per_batch = map_range(bsz, self.parallelism, |b| {
            let base = b * seq * d;
            let mask = &key_mask[b * seq..(b + 1) * seq];
            let mut out = vec![0.0; seq * d];
            let mut probs = vec![0.0; heads * seq * seq];
            for h in 0..heads {
                let p = &mut probs[h * seq * seq..(h + 1) * seq * seq];
                gemm(
                    seq,
                    dh,
                    seq,
                    scale,
                    qv,
                    View { offset: base + h * dh, rs: d, cs: 1 },
                    kv,
                    View { offset: base + h * dh, rs: 1, cs: d },
                    0.0,
                    p,
                    View::row_major(0, seq),
                );
                for row in p.chunks_mut(seq) {
                    softmax_masked(row, mask);
                }
                gemm(
                    seq,
                    seq,
                    dh,
                    1.0,
                    p,
                    View::row_major(0, seq),
                    vv,
                    View { offset: base + h * dh, rs: d, cs: 1 },
                    0.0,
                    &mut out,
                    View { offset: h * dh, rs: d, cs: 1 },
                );
            }
            (out, probs)
        });
        let mut y = Vec::with_capacity(bsz * seq * d);
        let mut probs = Vec::with_capacity(bsz * heads * seq * seq);
        for (o, p) in per_batch {
            y.extend(o);
            probs.extend(p);
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        Ok(self.push(s, y, Op::Attention { q, k, v, heads, probs }, rg))
    }

    /// `[B, S, d] -> [B, d]`, the first position of each sequence.
    pub fn select_first(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || xs[1] == 0 {
            return Err(shape_err(format!("select_first on {xs:?}")));
        }
        let (bsz, s, d) = (xs[0], xs[1], xs[2]);
        let xv = self.value(x);
        let y = (0..bsz).flat_map(|b| xv[b * s * d..b * s * d + d].iter().copied()).collect();
        let rg = self.rg(x);
        Ok(self.push(vec![bsz, d], y, Op::SelectFirst(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(shape_err(format!("reshape {:?} -> {shape:?}", self.shape(x))));
        }
        let y = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape.to_vec(), y, Op::Reshape(x), rg))
    }

    /// Mean binary cross-entropy on logits, in the stable
    /// `softplus(z) - y * z` form.
    pub fn bce_loss(&mut self, logits: Var, labels: &[f64]) -> Result<Var> {
        let z = self.value(logits);
        if z.len() != labels.len() || z.is_empty() {
            return Err(shape_err(format!("bce: {} logits vs {} labels", z.len(), labels.len())));
        }
        let loss = z.iter().zip(labels).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / z.len() as f64;
        let rg = self.rg(logits);
        Ok(self.push(vec![1], vec![loss], Op::Bce { logits, labels: labels.to_vec() }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.rg(x);
        self.push(vec![1], vec![s], Op::Sum(x), rg)
    }

    /// Backpropagate from a scalar node. Returns the gradient of every
    /// parameter in the set (zero where the loss does not depend on it).
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::Graph("backward already ran on this graph".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Graph("backward needs a scalar loss".into()));
        }
        self.backward_done = true;
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        grads[loss.0] = vec![1.0];
        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() || !self.nodes[i].requires_grad {
                continue;
            }
            let dy = std::mem::take(&mut grads[i]);
            self.backprop_node(i, &dy, &mut grads);
            grads[i] = dy;
        }
        let mut out: Vec<Vec<f64>> = (0..self.params.len())
            .map(|id| vec![0.0; self.params.tensor(id).len()])
            .collect();
        for (&id, &v) in &self.param_nodes {
            if !grads[v.0].is_empty() {
                out[id].copy_from_slice(&grads[v.0]);
            }
        }
        Ok(Gradients(out))
    }

    fn backprop_node(&self, i: usize, dy: &[f64], grads: &mut [Vec<f64>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let ws = self.shape(*w);
                let (inp, out) = (ws[0], ws[1]);
                let n = dy.len() / out;
                if self.rg(*x) {
                    let gx = grad_buf(grads, *x, n * inp);
                    gemm(n, out, inp, 1.0, dy, View::row_major(0, out), self.value(*w), View::transposed(0, out), 1.0, gx, View::row_major(0, inp));
                }
                if self.rg(*w) {
                    let xv = self.value(*x);
                    let gw = grad_buf(grads, *w, inp * out);
                    gemm(inp, n, out, 1.0, xv, View::transposed(0, inp), dy, View::row_major(0, out), 1.0, gw, View::row_major(0, out));
                }
                if let Some(b) = b {
                    if self.rg(*b) {
                        let gb = grad_buf(grads, *b, out);
                        for row in dy.chunks(out) {
                            for (g, d) in gb.iter_mut().zip(row) {
                                *g += d;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.rg(*v) {
                        add_into(grad_buf(grads, *v, dy.len()), dy);
                    }
                }
            }
            Op::AddBroadcast { x, c } => {
                if self.rg(*x) {
                    add_into(grad_buf(grads, *x, dy.len()), dy);
                }
                if self.rg(*c) {
                    let n = self.value(*c).len();
                    let gc = grad_buf(grads, *c, n);
                    for row in dy.chunks(n) {
                        add_into(gc, row);
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let d = self.shape(*table)[1];
                let n = self.value(*table).len();
                let gt = grad_buf(grads, *table, n);
                for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut gt[id * d..(id + 1) * d], &dy[r * d..(r + 1) * d]);
                }
            }
            Op::ScalarEmbed { x, w, b } => {
                let d = self.value(*w).len();
                let xv = self.value(*x);
                if self.rg(*x) {
                    let wv = self.value(*w);
                    let gx = grad_buf(grads, *x, xv.len());
                    for (r, g) in gx.iter_mut().enumerate() {
                        *g += dot(&dy[r * d..(r + 1) * d], wv);
                    }
                }
                if self.rg(*w) {
                    let gw = grad_buf(grads, *w, d);
                    for (r, &s) in xv.iter().enumerate() {
                        for (g, dv) in gw.iter_mut().zip(&dy[r * d..(r + 1) * d]) {
                            *g += s * dv;
                        }
                    }
                }
                if self.rg(*b) {
                    let gb = grad_buf(grads, *b, d);
                    for row in dy.chunks(d) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Concat1 { a, b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (bsz, d) = (sa[0], sa[2]);
                let (la, lb) = (sa[1] * d, sb[1] * d);
                if self.rg(*a) {
                    let ga = grad_buf(grads, *a, bsz * la);
                    for r in 0..bsz {
                        add_into(&mut ga[r * la..(r + 1) * la], &dy[r * (la + lb)..r * (la + lb) + la]);
                    }
                }
                if self.rg(*b) {
                    let gb = grad_buf(grads, *b, bsz * lb);
                    for r in 0..bsz {
                        add_into(&mut gb[r * lb..(r + 1) * lb], &dy[r * (la + lb) + la..(r + 1) * (la + lb)]);
                    }
                }
            }
            Op::PrependRow { row, x } => {
                let xs = self.shape(*x);
                let (bsz, s, d) = (xs[0], xs[1], xs[2]);
                let stride = (s + 1) * d;
                if self.rg(*row) {
                    let gr = grad_buf(grads, *row, d);
                    for b in 0..bsz {
                        add_into(gr, &dy[b * stride..b * stride + d]);
                    }
                }
                if self.rg(*x) {
                    let gx = grad_buf(grads, *x, bsz * s * d);
                    for b in 0..bsz {
                        add_into(&mut gx[b * s * d..(b + 1) * s * d], &dy[b * stride + d..(b + 1) * stride]);
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let d = self.value(*gain).len();
                let gv = self.value(*gain);
                if self.rg(*gain) {
                    let gg = grad_buf(grads, *gain, d);
                    for (dyr, hr) in dy.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            gg[j] += dyr[j] * hr[j];
                        }
                    }
                }
                if self.rg(*bias) {
                    let gb = grad_buf(grads, *bias, d);
                    for row in dy.chunks(d) {
                        add_into(gb, row);
                    }
                }
                if self.rg(*x) {
                    let gx = grad_buf(grads, *x, dy.len());
                    let mut dxhat = vec![0.0; d];
                    for (r, &inv) in inv_std.iter().enumerate() {
                        let dyr = &dy[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        for j in 0..d {
                            dxhat[j] = dyr[j] * gv[j];
                        }
                        let m1 = dxhat.iter().sum::<f64>() / d as f64;
                        let m2 = dot(&dxhat, hr) / d as f64;
                        for j in 0..d {
                            gx[r * d + j] += inv * (dxhat[j] - m1 - hr[j] * m2);
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let yv = &node.value;
                let gx = grad_buf(grads, *x, dy.len());
                for ((g, d), &y) in gx.iter_mut().zip(dy).zip(yv) {
                    if y > 0.0 {
                        *g += d;
                    }
                }
            }
            Op::Scale { x, mask } => {
                let gx = grad_buf(grads, *x, dy.len());
                for ((g, d), m) in gx.iter_mut().zip(dy).zip(mask) {
                    *g += d * m;
                }
            }
            Op::Attention { q, k, v, heads, probs } => self.backprop_attention(*q, *k, *v, *heads, probs, dy, grads),
            Op::SelectFirst(x) => {
                let xs = self.shape(*x);
                let (bsz, s, d) = (xs[0], xs[1], xs[2]);
                let gx = grad_buf(grads, *x, bsz * s * d);
                for b in 0..bsz {
                    add_into(&mut gx[b * s * d..b * s * d + d], &dy[b * d..(b + 1) * d]);
                }
            }
            Op::Reshape(x) => add_into(grad_buf(grads, *x, dy.len()), dy),
            Op::Bce { logits, labels } => {
                let z = self.value(*logits);
                let n = z.len() as f64;
                let gz = grad_buf(grads, *logits, z.len());
                for ((g, &zi), &yi) in gz.iter_mut().zip(z).zip(labels) {
                    *g += dy[0] * (sigmoid(zi) - yi) / n;
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                let gx = grad_buf(grads, *x, n);
                for g in gx.iter_mut() {
                    *g += dy[0];
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_attention(&self, q: Var, k: Var, v: Var, heads: usize, probs: &[f64], dy: &[f64], grads: &mut [Vec<f64>]) {
        let s = self.shape(q);
        let (bsz, seq, d) = (s[0], s[1], s[2]);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let per_batch = map_range(bsz, self.parallelism, |b| {
            let base = b * seq * d;
            let mut dq = vec![0.0; seq * d];
            let mut dk = vec![0.0; seq * d];
            let mut dv = vec![0.0; seq * d];
            let mut dp = vec![0.0; seq * seq];
            for h in 0..heads {
                let p = &probs[(b * heads + h) * seq * seq..(b * heads + h + 1) * seq * seq];
                let head = View { offset: base + h * dh, rs: d, cs: 1 };
                let local = View { offset: h * dh, rs: d, cs: 1 };
                // dV = Pᵀ dO
                gemm(seq, seq, dh, 1.0, p, View::transposed(0, seq), dy, head, 0.0, &mut dv, local);
                // dP = dO Vᵀ
                gemm(seq, dh, seq, 1.0, dy, head, vv, View { offset: base + h * dh, rs: 1, cs: d }, 0.0, &mut dp, View::row_major(0, seq));
                // softmax backward
                for (prow, drow) in p.chunks(seq).zip(dp.chunks_mut(seq)) {
                    let inner = dot(prow, drow);
                    for (dv, &pv) in drow.iter_mut().zip(prow) {
                        *dv = pv * (*dv - inner);
                    }
                }
                // dQ = dS K * scale, dK = dSᵀ Q * scale
                gemm(seq, seq, dh, scale, &dp, View::row_major(0, seq), kv, head, 0.0, &mut dq, local);
                gemm(seq, seq, dh, scale, &dp, View::transposed(0, seq), qv, head, 0.0, &mut dk, local);
            }
            (dq, dk, dv)
        });
        let n = bsz * seq * d;
        for (which, var) in [(0usize, q), (1, k), (2, v)] {
            if !self.rg(var) {
                continue;
            }
            let g = grad_buf(grads, var, n);
            for (b, parts) in per_batch.iter().enumerate() {
                let src = match which {
                    0 => &parts.0,
                    1 => &parts.1,
                    _ => &parts.2,
                };
                add_into(&mut g[b * seq * d..(b + 1) * seq * d], src);
            }
        }
    }
}

fn grad_buf(grads: &mut [Vec<f64>], v: Var, n: usize) -> &mut [f64] {
    let g = &mut grads[v.0];
    if g.is_empty() {
        *g = vec![0.0; n];
    }
    g
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax_masked(row: &mut [f64], mask: &[f64]) {
    for (v, &m) in row.iter_mut().zip(mask) {
        if m == 0.0 {
            *v += MASK_BIAS;
        }
    }
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
