//! Reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Tape`] records every operation of one forward evaluation. Parameter
//! leaves borrow their tensors, so binding a model to a tape costs nothing.
//! Recurrent cells are single fused nodes whose backward pass is written out
//! by hand; everything else is ordinary elementwise and affine algebra.

use std::borrow::Cow;

use super::gru::{gru_step_backward, gru_step_raw, GruCache, GruWeights};
use super::lstm::{lstm_step_backward, lstm_step_raw, LstmCache, LstmWeights};
use super::matrix::{matvec, matvec_t_acc, outer_acc, sigmoid, DenseMatrix};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Square(Var),
    Sum(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Affine { w: Var, x: Var, b: Option<Var> },
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Mse { pred: Var, target: Vec<f64> },
    WeightedSum(Vec<(Var, f64)>),
    Gru(Box<GruNode>),
    Lstm(Box<LstmNode>),
}

struct GruNode {
    params: [Var; 9],
    x: Var,
    h_prev: Var,
    cache: GruCache,
}

struct LstmNode {
    params: [Var; 12],
    x: Var,
    /// `[h; c]` of the previous step.
    state: Var,
    cache: LstmCache,
}

struct Node<'p> {
    value: Cow<'p, [f64]>,
    rows: usize,
    cols: usize,
    op: Op,
}

/// Recording of one forward evaluation.
#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, value: Cow<'p, [f64]>, rows: usize, cols: usize, op: Op) -> Var {
        self.nodes.push(Node { value, rows, cols, op });
        Var(self.nodes.len() - 1)
    }

    fn vec_len(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    /// A borrowed parameter tensor.
    pub fn param(&mut self, m: &'p DenseMatrix) -> Var {
        self.push(Cow::Borrowed(&m.data), m.rows, m.cols, Op::Leaf)
    }

    /// An owned constant column vector.
    pub fn constant(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.push(Cow::Owned(values), n, 1, Op::Leaf)
    }

    fn same_len(&self, a: Var, b: Var, what: &str) -> Result<usize> {
        let (la, lb) = (self.vec_len(a), self.vec_len(b));
        if la != lb {
            return Err(Error::Shape(format!("{what}: lengths {la} and {lb} differ")));
        }
        Ok(la)
    }

    fn elementwise2(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let n = self.same_len(a, b, what)?;
        let value: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok(self.push(Cow::Owned(value), n, 1, op))
    }

    fn elementwise1(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value: Vec<f64> = self.value(a).iter().map(|x| f(*x)).collect();
        let n = value.len();
        self.push(Cow::Owned(value), n, 1, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.elementwise1(a, |x| k * x, Op::Scale(a, k))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.elementwise1(a, |x| x * x, Op::Square(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.elementwise1(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.elementwise1(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.elementwise1(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(Cow::Owned(vec![s]), 1, 1, Op::Sum(a))
    }

    /// `W x (+ b)`.
    pub fn affine(&mut self, w: Var, x: Var, b: Option<Var>) -> Result<Var> {
        let (rows, cols) = self.shape(w);
        if self.vec_len(x) != cols {
            return Err(Error::Shape(format!(
                "affine: weight is {rows}x{cols}, input has length {}",
                self.vec_len(x)
            )));
        }
        if let Some(b) = b {
            if self.vec_len(b) != rows {
                return Err(Error::Shape(format!(
                    "affine: bias length {} for {rows} outputs",
                    self.vec_len(b)
                )));
            }
        }
        let mut out = vec![0.0; rows];
        matvec(self.value(w), rows, cols, self.value(x), &mut out);
        if let Some(b) = b {
            out.iter_mut().zip(self.value(b)).for_each(|(o, bi)| *o += bi);
        }
        Ok(self.push(Cow::Owned(out), rows, 1, Op::Affine { w, x, b }))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::with_capacity(parts.iter().map(|&p| self.vec_len(p)).sum());
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        let n = out.len();
        self.push(Cow::Owned(out), n, 1, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.vec_len(src);
        if start + len > n {
            return Err(Error::Shape(format!("slice {start}..{} of length {n}", start + len)));
        }
        let out = self.value(src)[start..start + len].to_vec();
        Ok(self.push(Cow::Owned(out), len, 1, Op::Slice { src, start }))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: Vec<f64>) -> Result<Var> {
        let n = self.vec_len(pred);
        if n == 0 || n != target.len() {
            return Err(Error::Shape(format!(
                "mse: prediction length {n}, target length {}",
                target.len()
            )));
        }
        let loss = self
            .value(pred)
            .iter()
            .zip(&target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n as f64;
        Ok(self.push(Cow::Owned(vec![loss]), 1, 1, Op::Mse { pred, target }))
    }

    /// `sum_i w_i * x_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut s = 0.0;
        for &(v, w) in terms {
            if self.vec_len(v) != 1 {
                return Err(Error::Shape("weighted_sum: terms must be scalars".into()));
            }
            s += w * self.scalar(v);
        }
        Ok(self.push(Cow::Owned(vec![s]), 1, 1, Op::WeightedSum(terms.to_vec())))
    }

    fn gru_weights(&self, params: &[Var; 9]) -> Result<GruWeights<'_>> {
        let (hidden, input) = self.shape(params[0]);
        let w = GruWeights {
            input,
            hidden,
            w_z: self.value(params[0]),
            w_r: self.value(params[1]),
            w_h: self.value(params[2]),
            u_z: self.value(params[3]),
            u_r: self.value(params[4]),
            u_h: self.value(params[5]),
            b_z: self.value(params[6]),
            b_r: self.value(params[7]),
            b_h: self.value(params[8]),
        };
        w.check()?;
        Ok(w)
    }

    /// One GRU step. `params` order: `W_z, W_r, W_h, U_z, U_r, U_h, b_z, b_r, b_h`.
    pub fn gru_step(&mut self, params: [Var; 9], x: Var, h_prev: Var) -> Result<Var> {
        let cache = {
            let w = self.gru_weights(&params)?;
            if self.vec_len(x) != w.input || self.vec_len(h_prev) != w.hidden {
                return Err(Error::Shape(format!(
                    "gru step: expected x of {} and h of {}, got {} and {}",
                    w.input,
                    w.hidden,
                    self.vec_len(x),
                    self.vec_len(h_prev)
                )));
            }
            gru_step_raw(&w, self.value(x), self.value(h_prev))
        };
        let h = cache.h.clone();
        let n = h.len();
        Ok(self.push(
            Cow::Owned(h),
            n,
            1,
            Op::Gru(Box::new(GruNode {
                params,
                x,
                h_prev,
                cache,
            })),
        ))
    }

    fn lstm_weights(&self, params: &[Var; 12]) -> Result<LstmWeights<'_>> {
        let (hidden, input) = self.shape(params[0]);
        let w = LstmWeights {
            input,
            hidden,
            w: [0, 1, 2, 3].map(|k| self.value(params[k])),
            u: [4, 5, 6, 7].map(|k| self.value(params[k])),
            b: [8, 9, 10, 11].map(|k| self.value(params[k])),
        };
        w.check()?;
        Ok(w)
    }

    /// One LSTM step over a packed `[h; c]` state; returns the new packed state.
    /// `params` order: `W_i, W_f, W_o, W_g, U_i, U_f, U_o, U_g, b_i, b_f, b_o, b_g`.
    pub fn lstm_step(&mut self, params: [Var; 12], x: Var, state: Var) -> Result<Var> {
        let cache = {
            let w = self.lstm_weights(&params)?;
            if self.vec_len(x) != w.input || self.vec_len(state) != 2 * w.hidden {
                return Err(Error::Shape(format!(
                    "lstm step: expected x of {} and state of {}, got {} and {}",
                    w.input,
                    2 * w.hidden,
                    self.vec_len(x),
                    self.vec_len(state)
                )));
            }
            let s = self.value(state);
            lstm_step_raw(&w, self.value(x), &s[..w.hidden], &s[w.hidden..])
        };
        let mut packed = cache.h.clone();
        packed.extend_from_slice(&cache.c);
        let n = packed.len();
        Ok(self.push(
            Cow::Owned(packed),
            n,
            1,
            Op::Lstm(Box::new(LstmNode {
                params,
                x,
                state,
                cache,
            })),
        ))
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.vec_len(root) != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar root, node has {} values",
                self.vec_len(root)
            )));
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); root.0 + 1];
        grads[root.0] = vec![1.0];

        for id in (0..=root.0).rev() {
            if grads[id].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[id]);
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(&mut grads, self, *a, |d| add_into(d, &g));
                    acc(&mut grads, self, *b, |d| add_into(d, &g));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, self, *a, |d| add_into(d, &g));
                    acc(&mut grads, self, *b, |d| {
                        d.iter_mut().zip(&g).for_each(|(o, gi)| *o -= gi)
                    });
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    acc(&mut grads, self, *a, |d| {
                        d.iter_mut().zip(&g).zip(vb).for_each(|((o, gi), y)| *o += gi * y)
                    });
                    acc(&mut grads, self, *b, |d| {
                        d.iter_mut().zip(&g).zip(va).for_each(|((o, gi), x)| *o += gi * x)
                    });
                }
                Op::Scale(a, k) => {
                    acc(&mut grads, self, *a, |d| {
                        d.iter_mut().zip(&g).for_each(|(o, gi)| *o += k * gi)
                    });
                }
                Op::Square(a) => {
                    let va = self.value(*a);
                    acc(&mut grads, self, *a, |d| {
                        d.iter_mut().zip(&g).zip(va).for_each(|((o, gi), x)| *o += 2.0 * x * gi)
                    });
                }
                Op::Sum(a) => {
                    acc(&mut grads, self, *a, |d| d.iter_mut().for_each(|o| *o += g[0]));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut grads, self, *a, |d| {
                        d.iter_mut()
                            .zip(&g)
                            .zip(y.iter())
                            .for_each(|((o, gi), s)| *o += gi * s * (1.0 - s))
                    });
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut grads, self, *a, |d| {
                        d.iter_mut()
                            .zip(&g)
                            .zip(y.iter())
                            .for_each(|((o, gi), t)| *o += gi * (1.0 - t * t))
                    });
                }
                Op::Relu(a) => {
                    let va = self.value(*a);
                    acc(&mut grads, self, *a, |d| {
                        d.iter_mut().zip(&g).zip(va).for_each(|((o, gi), x)| {
                            if *x > 0.0 {
                                *o += gi
                            }
                        })
                    });
                }
                Op::Affine { w, x, b } => {
                    let (_, cols) = self.shape(*w);
                    let (vw, vx) = (self.value(*w), self.value(*x));
                    acc(&mut grads, self, *w, |d| outer_acc(d, cols, &g, vx));
                    acc(&mut grads, self, *x, |d| matvec_t_acc(vw, cols, &g, d));
                    if let Some(b) = b {
                        acc(&mut grads, self, *b, |d| add_into(d, &g));
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.vec_len(p);
                        acc(&mut grads, self, p, |d| add_into(d, &g[offset..offset + n]));
                        offset += n;
                    }
                }
                Op::Slice { src, start } => {
                    acc(&mut grads, self, *src, |d| {
                        add_into(&mut d[*start..*start + g.len()], &g)
                    });
                }
                Op::Mse { pred, target } => {
                    let vp = self.value(*pred);
                    let k = 2.0 * g[0] / target.len() as f64;
                    acc(&mut grads, self, *pred, |d| {
                        d.iter_mut()
                            .zip(vp)
                            .zip(target)
                            .for_each(|((o, p), t)| *o += k * (p - t))
                    });
                }
                Op::WeightedSum(terms) => {
                    for &(v, w) in terms {
                        acc(&mut grads, self, v, |d| d[0] += w * g[0]);
                    }
                }
                Op::Gru(n) => {
                    let w = self.gru_weights(&n.params)?;
                    let mut pg: [Vec<f64>; 9] = std::array::from_fn(|k| take_grad(&mut grads, self, n.params[k]));
                    let mut dx = vec![0.0; w.input];
                    let mut dh = vec![0.0; w.hidden];
                    gru_step_backward(
                        &w,
                        self.value(n.x),
                        self.value(n.h_prev),
                        &n.cache,
                        &g,
                        &mut pg,
                        &mut dx,
                        &mut dh,
                    );
                    for (k, buf) in pg.into_iter().enumerate() {
                        grads[n.params[k].0] = buf;
                    }
                    acc(&mut grads, self, n.x, |d| add_into(d, &dx));
                    acc(&mut grads, self, n.h_prev, |d| add_into(d, &dh));
                }
                Op::Lstm(n) => {
                    let w = self.lstm_weights(&n.params)?;
                    let hidden = w.hidden;
                    let mut pg: [Vec<f64>; 12] = std::array::from_fn(|k| take_grad(&mut grads, self, n.params[k]));
                    let mut dx = vec![0.0; w.input];
                    let mut dstate = vec![0.0; 2 * hidden];
                    let s = self.value(n.state);
                    let (dh_prev, dc_prev) = dstate.split_at_mut(hidden);
                    lstm_step_backward(
                        &w,
                        self.value(n.x),
                        &s[..hidden],
                        &s[hidden..],
                        &n.cache,
                        &g[..hidden],
                        &g[hidden..],
                        &mut pg,
                        &mut dx,
                        dh_prev,
                        dc_prev,
                    );
                    for (k, buf) in pg.into_iter().enumerate() {
                        grads[n.params[k].0] = buf;
                    }
                    acc(&mut grads, self, n.x, |d| add_into(d, &dx));
                    acc(&mut grads, self, n.state, |d| add_into(d, &dstate));
                }
            }
            // leaves keep their gradient so callers can read it back
            if matches!(node.op, Op::Leaf) {
                grads[id] = g;
            }
        }
        Ok(Gradients { grads })
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn take_grad(grads: &mut [Vec<f64>], tape: &Tape<'_>, v: Var) -> Vec<f64> {
    let mut buf = std::mem::take(&mut grads[v.0]);
    if buf.is_empty() {
        buf = vec![0.0; tape.vec_len(v)];
    }
    buf
}

fn acc(grads: &mut [Vec<f64>], tape: &Tape<'_>, v: Var, f: impl FnOnce(&mut [f64])) {
    let slot = &mut grads[v.0];
    if slot.is_empty() {
        *slot = vec![0.0; tape.vec_len(v)];
    }
    f(slot);
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient of a leaf, or `None` when the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).filter(|g| !g.is_empty()).map(|g| g.as_slice())
    }

    /// Gradient of a leaf with zeros for unreachable nodes.
    pub fn wrt(&self, tape: &Tape<'_>, v: Var) -> Vec<f64> {
        self.get(v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; tape.vec_len(v)])
    }

    /// Adds the gradients of `vars` into `sink`, which is aligned with them.
    pub fn accumulate_into(&self, vars: &[Var], sink: &mut [Vec<f64>]) {
        for (v, dst) in vars.iter().zip(sink.iter_mut()) {
            if let Some(g) = self.get(*v) {
                add_into(dst, g);
            }
        }
    }
}
