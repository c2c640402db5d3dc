//! Gated recurrent units and the stacked bidirectional encoder built on them.
//!
//! ```text
//! z  = sigmoid(W_z x + U_z h + b_z)
//! r  = sigmoid(W_r x + U_r h + b_r)
//! h~ = tanh(W_h x + U_h (r * h) + b_h)
//! h' = (1 - z) * h~ + z * h
//! ```

use rand::Rng;

use super::matrix::{matvec_acc, matvec_t_acc, outer_acc, prefixed, sigmoid, DenseMatrix, Parameters};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_z: DenseMatrix,
    pub w_r: DenseMatrix,
    pub w_h: DenseMatrix,
    pub u_z: DenseMatrix,
    pub u_r: DenseMatrix,
    pub u_h: DenseMatrix,
    pub b_z: DenseMatrix,
    pub b_r: DenseMatrix,
    pub b_h: DenseMatrix,
}

const GRU_NAMES: [&str; 9] = ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"];

impl GruLayerParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let w = || DenseMatrix::zeros(hidden_size, input_size);
        let u = || DenseMatrix::zeros(hidden_size, hidden_size);
        let b = || DenseMatrix::zeros(hidden_size, 1);
        Self {
            input_size,
            hidden_size,
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    /// Fan-in uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_size, hidden_size);
        for m in [&mut p.w_z, &mut p.w_r, &mut p.w_h] {
            *m = DenseMatrix::uniform_fan_in(hidden_size, input_size, input_size, rng);
        }
        for m in [&mut p.u_z, &mut p.u_r, &mut p.u_h] {
            *m = DenseMatrix::uniform_fan_in(hidden_size, hidden_size, hidden_size, rng);
        }
        p
    }

    pub(crate) fn weights(&self) -> GruWeights<'_> {
        GruWeights {
            input: self.input_size,
            hidden: self.hidden_size,
            w_z: &self.w_z.data,
            w_r: &self.w_r.data,
            w_h: &self.w_h.data,
            u_z: &self.u_z.data,
            u_r: &self.u_r.data,
            u_h: &self.u_h.data,
            b_z: &self.b_z.data,
            b_r: &self.b_r.data,
            b_h: &self.b_h.data,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in self.tensors() {
            t.validate()?;
        }
        self.weights().check()
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> [Var; 9] {
        let t = self.tensors();
        std::array::from_fn(|k| tape.param(t[k]))
    }
}

impl Parameters for GruLayerParams {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        vec![
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z, &self.b_r, &self.b_h,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        vec![
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }

    fn names(&self) -> Vec<String> {
        GRU_NAMES.iter().map(|s| s.to_string()).collect()
    }
}

/// Borrowed view of one layer's weights.
pub(crate) struct GruWeights<'a> {
    pub input: usize,
    pub hidden: usize,
    pub w_z: &'a [f64],
    pub w_r: &'a [f64],
    pub w_h: &'a [f64],
    pub u_z: &'a [f64],
    pub u_r: &'a [f64],
    pub u_h: &'a [f64],
    pub b_z: &'a [f64],
    pub b_r: &'a [f64],
    pub b_h: &'a [f64],
}

impl GruWeights<'_> {
    pub fn check(&self) -> Result<()> {
        let (i, h) = (self.input, self.hidden);
        let ok = [self.w_z, self.w_r, self.w_h].iter().all(|w| w.len() == h * i)
            && [self.u_z, self.u_r, self.u_h].iter().all(|u| u.len() == h * h)
            && [self.b_z, self.b_r, self.b_h].iter().all(|b| b.len() == h);
        if ok && h > 0 && i > 0 {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "inconsistent GRU layer shapes (input {i}, hidden {h})"
            )))
        }
    }
}

pub(crate) struct GruCache {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    /// r * h_prev
    pub rh: Vec<f64>,
    pub cand: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn gru_step_raw(w: &GruWeights<'_>, x: &[f64], h_prev: &[f64]) -> GruCache {
    let (i, hs) = (w.input, w.hidden);
    let mut z = w.b_z.to_vec();
    matvec_acc(w.w_z, i, x, &mut z);
    matvec_acc(w.u_z, hs, h_prev, &mut z);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));

    let mut r = w.b_r.to_vec();
    matvec_acc(w.w_r, i, x, &mut r);
    matvec_acc(w.u_r, hs, h_prev, &mut r);
    r.iter_mut().for_each(|v| *v = sigmoid(*v));

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut cand = w.b_h.to_vec();
    matvec_acc(w.w_h, i, x, &mut cand);
    matvec_acc(w.u_h, hs, &rh, &mut cand);
    cand.iter_mut().for_each(|v| *v = v.tanh());

    let h = (0..hs).map(|k| (1.0 - z[k]) * cand[k] + z[k] * h_prev[k]).collect();
    GruCache { z, r, rh, cand, h }
}

/// Accumulates parameter gradients into `pg` (in [`GRU_NAMES`] order) and
/// input/state gradients into `dx`, `dh_prev`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gru_step_backward(
    w: &GruWeights<'_>,
    x: &[f64],
    h_prev: &[f64],
    c: &GruCache,
    dh: &[f64],
    pg: &mut [Vec<f64>; 9],
    dx: &mut [f64],
    dh_prev: &mut [f64],
) {
    let (i, hs) = (w.input, w.hidden);
    let mut da_h = vec![0.0; hs];
    let mut da_z = vec![0.0; hs];
    for k in 0..hs {
        dh_prev[k] += dh[k] * c.z[k];
        let dcand = dh[k] * (1.0 - c.z[k]);
        da_h[k] = dcand * (1.0 - c.cand[k] * c.cand[k]);
        let dz = dh[k] * (h_prev[k] - c.cand[k]);
        da_z[k] = dz * c.z[k] * (1.0 - c.z[k]);
    }

    // candidate path
    outer_acc(&mut pg[2], i, &da_h, x);
    outer_acc(&mut pg[5], hs, &da_h, &c.rh);
    pg[8].iter_mut().zip(&da_h).for_each(|(g, d)| *g += d);
    matvec_t_acc(w.w_h, i, &da_h, dx);
    let mut drh = vec![0.0; hs];
    matvec_t_acc(w.u_h, hs, &da_h, &mut drh);

    let mut da_r = vec![0.0; hs];
    for k in 0..hs {
        dh_prev[k] += drh[k] * c.r[k];
        let dr = drh[k] * h_prev[k];
        da_r[k] = dr * c.r[k] * (1.0 - c.r[k]);
    }

    for (gate, da) in [(0usize, &da_z), (1, &da_r)] {
        let (wm, um) = if gate == 0 { (w.w_z, w.u_z) } else { (w.w_r, w.u_r) };
        outer_acc(&mut pg[gate], i, da, x);
        outer_acc(&mut pg[gate + 3], hs, da, h_prev);
        pg[gate + 6].iter_mut().zip(da.iter()).for_each(|(g, d)| *g += d);
        matvec_t_acc(wm, i, da, dx);
        matvec_t_acc(um, hs, da, dh_prev);
    }
}

/// One GRU step.
pub fn gru_cell_forward(p: &GruLayerParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    let w = p.weights();
    w.check()?;
    if x.len() != p.input_size || h_prev.len() != p.hidden_size {
        return Err(Error::Shape(format!(
            "gru cell expects x of {} and h of {}, got {} and {}",
            p.input_size,
            p.hidden_size,
            x.len(),
            h_prev.len()
        )));
    }
    Ok(gru_step_raw(&w, x, h_prev).h)
}

/// Forward and backward GRU of one bidirectional layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGruLayer {
    pub fwd: GruLayerParams,
    pub bwd: GruLayerParams,
}

/// Stacked bidirectional GRU. Layer k > 0 reads the per-timestep
/// concatenation `[fwd; bwd]` of layer k - 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGruStack {
    pub layers: Vec<BiGruLayer>,
}

impl BiGruStack {
    pub fn zeros(input_size: usize, hidden_size: usize, num_layers: usize) -> Self {
        Self::build(input_size, hidden_size, num_layers, GruLayerParams::zeros)
    }

    pub fn init<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, num_layers: usize, rng: &mut R) -> Self {
        Self::build(input_size, hidden_size, num_layers, |i, h| {
            GruLayerParams::init(i, h, rng)
        })
    }

    fn build(
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
        mut make: impl FnMut(usize, usize) -> GruLayerParams,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|l| {
                let inp = if l == 0 { input_size } else { 2 * hidden_size };
                BiGruLayer {
                    fwd: make(inp, hidden_size),
                    bwd: make(inp, hidden_size),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn hidden_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.fwd.hidden_size)
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.fwd.input_size)
    }

    /// Length of the encoded feature: `2 * hidden_size`.
    pub fn output_size(&self) -> usize {
        2 * self.hidden_size()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("bi-GRU stack has no layers".into()));
        }
        let h = self.hidden_size();
        for (l, layer) in self.layers.iter().enumerate() {
            for p in [&layer.fwd, &layer.bwd] {
                p.validate()?;
                let expect_in = if l == 0 { self.input_size() } else { 2 * h };
                if p.hidden_size != h || p.input_size != expect_in {
                    return Err(Error::Shape(format!("bi-GRU layer {l} does not chain")));
                }
            }
        }
        Ok(())
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> Vec<[[Var; 9]; 2]> {
        self.layers
            .iter()
            .map(|l| [l.fwd.bind(tape), l.bwd.bind(tape)])
            .collect()
    }
}

impl Parameters for BiGruStack {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        self.layers
            .iter()
            .flat_map(|l| l.fwd.tensors().into_iter().chain(l.bwd.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.fwd.tensors_mut().into_iter().chain(l.bwd.tensors_mut()))
            .collect()
    }

    fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(prefixed(&format!("l{i}.fwd"), l.fwd.names()));
            out.extend(prefixed(&format!("l{i}.bwd"), l.bwd.names()));
        }
        out
    }
}

fn check_seq(seq: &[Vec<f64>], input: usize) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::Shape("empty sequence".into()));
    }
    if let Some(x) = seq.iter().find(|x| x.len() != input) {
        return Err(Error::Shape(format!(
            "sequence element of length {} for input size {input}",
            x.len()
        )));
    }
    Ok(())
}

/// Encodes a sequence into `[fwd_last(T-1); bwd_last(0)]` of the top layer.
pub fn bigru_forward(stack: &BiGruStack, seq: &[Vec<f64>]) -> Result<Vec<f64>> {
    stack.validate()?;
    check_seq(seq, stack.input_size())?;
    let h = stack.hidden_size();
    let t_len = seq.len();
    let mut inputs: Vec<Vec<f64>> = seq.to_vec();
    let mut feature = Vec::new();
    for layer in &stack.layers {
        let (fw, bw) = (layer.fwd.weights(), layer.bwd.weights());
        let mut fwd_states = Vec::with_capacity(t_len);
        let mut state = vec![0.0; h];
        for x in &inputs {
            state = gru_step_raw(&fw, x, &state).h;
            fwd_states.push(state.clone());
        }
        let mut bwd_states = vec![Vec::new(); t_len];
        let mut state = vec![0.0; h];
        for t in (0..t_len).rev() {
            state = gru_step_raw(&bw, &inputs[t], &state).h;
            bwd_states[t] = state.clone();
        }
        feature = fwd_states[t_len - 1].clone();
        feature.extend_from_slice(&bwd_states[0]);
        inputs = fwd_states
            .into_iter()
            .zip(bwd_states)
            .map(|(mut f, b)| {
                f.extend(b);
                f
            })
            .collect();
    }
    Ok(feature)
}

/// Tape version of [`bigru_forward`]; `seq` holds per-timestep input nodes.
pub fn bigru_on_tape(tape: &mut Tape<'_>, vars: &[[[Var; 9]; 2]], hidden: usize, seq: &[Var]) -> Result<Var> {
    if seq.is_empty() {
        return Err(Error::Shape("empty sequence".into()));
    }
    let t_len = seq.len();
    let mut inputs = seq.to_vec();
    let mut feature = None;
    for [fw, bw] in vars {
        let zero = tape.constant(vec![0.0; hidden]);
        let mut fwd = Vec::with_capacity(t_len);
        let mut state = zero;
        for &x in &inputs {
            state = tape.gru_step(*fw, x, state)?;
            fwd.push(state);
        }
        let mut bwd = vec![zero; t_len];
        let mut state = zero;
        for t in (0..t_len).rev() {
            state = tape.gru_step(*bw, inputs[t], state)?;
            bwd[t] = state;
        }
        feature = Some(tape.concat(&[fwd[t_len - 1], bwd[0]]));
        inputs = fwd.iter().zip(&bwd).map(|(&f, &b)| tape.concat(&[f, b])).collect();
    }
    feature.ok_or_else(|| Error::Shape("bi-GRU stack has no layers".into()))
}
