//! Reverse-mode automatic differentiation over vectors of `f64`.
//!
//! Parameters are never copied onto the tape: ops that read a weight refer
//! to it by tensor index, and the backward pass accumulates straight into a
//! [`Grads`] buffer shaped like the parameters.

use super::params::ModelParams;

pub(crate) type Var = usize;

/// Gradient buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn zeros_like(params: &ModelParams) -> Grads {
        Grads(params.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().flatten().for_each(|x| *x *= k);
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Embed {
        table: usize,
        row: usize,
    },
    /// `W x (+ b)`.
    Affine {
        w: usize,
        b: Option<usize>,
        x: Var,
    },
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Sigmoid(Var),
    Tanh(Var),
    Mul(Var, Var),
    Add(Var, Var),
    /// Dot product of `query` with each key.
    Scores {
        query: Var,
        keys: Vec<Var>,
    },
    /// Scalars gathered into one vector.
    Stack(Vec<Var>),
    Softmax(Var),
    WeightedSum {
        weights: Var,
        items: Vec<Var>,
    },
    /// `-log softmax(x)[index]`.
    NegLogSoftmax {
        x: Var,
        index: usize,
    },
    Scale(Var, f64),
    /// Sum of scalars.
    Sum(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub(crate) struct Tape<'p> {
    params: &'p ModelParams,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        Tape { params, nodes: Vec::with_capacity(1024) }
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn embed(&mut self, table: usize, row: usize) -> Var {
        let t = &self.params.tensors()[table];
        let value = t.data[row * t.cols..(row + 1) * t.cols].to_vec();
        self.push(value, Op::Embed { table, row })
    }

    pub fn affine(&mut self, w: usize, b: Option<usize>, x: Var) -> Var {
        let tw = &self.params.tensors()[w];
        let xv = &self.nodes[x].value;
        debug_assert_eq!(tw.cols, xv.len(), "affine shape mismatch on {}", tw.name);
        let mut out = match b {
            Some(b) => self.params.tensors()[b].data.clone(),
            None => vec![0.0; tw.rows],
        };
        for (r, o) in out.iter_mut().enumerate() {
            let row = &tw.data[r * tw.cols..(r + 1) * tw.cols];
            *o += row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
        }
        self.push(out, Op::Affine { w, b, x })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let value = parts.iter().flat_map(|&p| self.nodes[p].value.iter().copied()).collect();
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.nodes[x].value[start..start + len].to_vec();
        self.push(value, Op::Slice { x, start })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.nodes[x].value.iter().map(|&v| sigmoid(v)).collect();
        self.push(value, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.nodes[x].value.iter().map(|v| v.tanh()).collect();
        self.push(value, Op::Tanh(x))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.nodes[a].value.iter().zip(&self.nodes[b].value).map(|(x, y)| x * y).collect();
        self.push(value, Op::Mul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.nodes[a].value.iter().zip(&self.nodes[b].value).map(|(x, y)| x + y).collect();
        self.push(value, Op::Add(a, b))
    }

    pub fn scores(&mut self, query: Var, keys: &[Var]) -> Var {
        let q = &self.nodes[query].value;
        let value = keys.iter().map(|&k| self.nodes[k].value.iter().zip(q).map(|(a, b)| a * b).sum()).collect();
        self.push(value, Op::Scores { query, keys: keys.to_vec() })
    }

    pub fn stack(&mut self, scalars: &[Var]) -> Var {
        let value = scalars.iter().map(|&s| self.nodes[s].value[0]).collect();
        self.push(value, Op::Stack(scalars.to_vec()))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let value = softmax(&self.nodes[x].value);
        self.push(value, Op::Softmax(x))
    }

    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        let w = &self.nodes[weights].value;
        let mut out = vec![0.0; self.nodes[items[0]].value.len()];
        for (wi, &item) in w.iter().zip(items) {
            for (o, v) in out.iter_mut().zip(&self.nodes[item].value) {
                *o += wi * v;
            }
        }
        self.push(out, Op::WeightedSum { weights, items: items.to_vec() })
    }

    pub fn neg_log_softmax(&mut self, x: Var, index: usize) -> Var {
        let xv = &self.nodes[x].value;
        let value = vec![log_sum_exp(xv) - xv[index]];
        self.push(value, Op::NegLogSoftmax { x, index })
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let value = self.nodes[x].value.iter().map(|v| v * k).collect();
        self.push(value, Op::Scale(x, k))
    }

    pub fn sum(&mut self, scalars: &[Var]) -> Var {
        let value = vec![scalars.iter().map(|&s| self.nodes[s].value[0]).sum()];
        self.push(value, Op::Sum(scalars.to_vec()))
    }

    /// Accumulates `d root / d θ` into `grads`. `root` must be a scalar.
    pub fn backward(&self, root: Var, grads: &mut Grads) {
        let mut g: Vec<Vec<f64>> = vec![Vec::new(); root + 1];
        g[root] = vec![1.0];
        fn acc(slot: &mut Vec<f64>, len: usize) -> &mut Vec<f64> {
            if slot.is_empty() {
                slot.resize(len, 0.0);
            }
            slot
        }
        for v in (0..=root).rev() {
            if g[v].is_empty() {
                continue;
            }
            let gv = std::mem::take(&mut g[v]);
            let node = &self.nodes[v];
            match &node.op {
                Op::Input => {}
                Op::Embed { table, row } => {
                    let cols = self.params.tensors()[*table].cols;
                    for (d, x) in grads.0[*table][row * cols..(row + 1) * cols].iter_mut().zip(&gv) {
                        *d += x;
                    }
                }
                Op::Affine { w, b, x } => {
                    let tw = &self.params.tensors()[*w];
                    let xv = &self.nodes[*x].value;
                    let gw = &mut grads.0[*w];
                    for (r, gr) in gv.iter().enumerate() {
                        if *gr != 0.0 {
                            for (d, xc) in gw[r * tw.cols..(r + 1) * tw.cols].iter_mut().zip(xv) {
                                *d += gr * xc;
                            }
                        }
                    }
                    if let Some(b) = b {
                        for (d, x) in grads.0[*b].iter_mut().zip(&gv) {
                            *d += x;
                        }
                    }
                    let gx = acc(&mut g[*x], tw.cols);
                    for (r, gr) in gv.iter().enumerate() {
                        if *gr != 0.0 {
                            for (d, wv) in gx.iter_mut().zip(&tw.data[r * tw.cols..(r + 1) * tw.cols]) {
                                *d += gr * wv;
                            }
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p].value.len();
                        let gp = acc(&mut g[p], len);
                        for (d, x) in gp.iter_mut().zip(&gv[offset..offset + len]) {
                            *d += x;
                        }
                        offset += len;
                    }
                }
                Op::Slice { x, start } => {
                    let len = self.nodes[*x].value.len();
                    let gx = acc(&mut g[*x], len);
                    for (d, v) in gx[*start..start + gv.len()].iter_mut().zip(&gv) {
                        *d += v;
                    }
                }
                Op::Sigmoid(x) => {
                    let gx = acc(&mut g[*x], gv.len());
                    for ((d, y), gi) in gx.iter_mut().zip(&node.value).zip(&gv) {
                        *d += gi * y * (1.0 - y);
                    }
                }
                Op::Tanh(x) => {
                    let gx = acc(&mut g[*x], gv.len());
                    for ((d, y), gi) in gx.iter_mut().zip(&node.value).zip(&gv) {
                        *d += gi * (1.0 - y * y);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let n = gv.len();
                    let ga = acc(&mut g[*a], n);
                    for ((d, y), gi) in ga.iter_mut().zip(bv).zip(&gv) {
                        *d += gi * y;
                    }
                    let gb = acc(&mut g[*b], n);
                    for ((d, y), gi) in gb.iter_mut().zip(av).zip(&gv) {
                        *d += gi * y;
                    }
                }
                Op::Add(a, b) => {
                    for p in [*a, *b] {
                        let gp = acc(&mut g[p], gv.len());
                        for (d, x) in gp.iter_mut().zip(&gv) {
                            *d += x;
                        }
                    }
                }
                Op::Scores { query, keys } => {
                    let q = self.nodes[*query].value.clone();
                    let mut gq = vec![0.0; q.len()];
                    for (&k, gi) in keys.iter().zip(&gv) {
                        let kv = &self.nodes[k].value;
                        for (d, x) in gq.iter_mut().zip(kv) {
                            *d += gi * x;
                        }
                        let gk = acc(&mut g[k], q.len());
                        for (d, x) in gk.iter_mut().zip(&q) {
                            *d += gi * x;
                        }
                    }
                    for (d, x) in acc(&mut g[*query], q.len()).iter_mut().zip(&gq) {
                        *d += x;
                    }
                }
                Op::Stack(scalars) => {
                    for (&s, gi) in scalars.iter().zip(&gv) {
                        acc(&mut g[s], 1)[0] += gi;
                    }
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let dot: f64 = y.iter().zip(&gv).map(|(a, b)| a * b).sum();
                    let gx = acc(&mut g[*x], y.len());
                    for ((d, yi), gi) in gx.iter_mut().zip(y).zip(&gv) {
                        *d += yi * (gi - dot);
                    }
                }
                Op::WeightedSum { weights, items } => {
                    let w = self.nodes[*weights].value.clone();
                    let mut gw = vec![0.0; w.len()];
                    for (i, &item) in items.iter().enumerate() {
                        let iv = &self.nodes[item].value;
                        gw[i] = iv.iter().zip(&gv).map(|(a, b)| a * b).sum();
                        let gi = acc(&mut g[item], gv.len());
                        for (d, x) in gi.iter_mut().zip(&gv) {
                            *d += w[i] * x;
                        }
                    }
                    for (d, x) in acc(&mut g[*weights], w.len()).iter_mut().zip(&gw) {
                        *d += x;
                    }
                }
                Op::NegLogSoftmax { x, index } => {
                    let p = softmax(&self.nodes[*x].value);
                    let gx = acc(&mut g[*x], p.len());
                    for (i, (d, pi)) in gx.iter_mut().zip(&p).enumerate() {
                        let target = if i == *index { 1.0 } else { 0.0 };
                        *d += gv[0] * (pi - target);
                    }
                }
                Op::Scale(x, k) => {
                    let gx = acc(&mut g[*x], gv.len());
                    for (d, v) in gx.iter_mut().zip(&gv) {
                        *d += k * v;
                    }
                }
                Op::Sum(scalars) => {
                    for &s in scalars {
                        acc(&mut g[s], 1)[0] += gv[0];
                    }
                }
            }
        }
    }
}
