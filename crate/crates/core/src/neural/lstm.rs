//! Unidirectional stacked LSTM. The encoder output is the top layer's final
//! cell state, not its hidden state.

use rand::Rng;

use super::matrix::{matvec_acc, matvec_t_acc, outer_acc, prefixed, sigmoid, DenseMatrix, Parameters};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Gate order everywhere is input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w: [DenseMatrix; 4],
    pub u: [DenseMatrix; 4],
    pub b: [DenseMatrix; 4],
}

const GATES: [&str; 4] = ["i", "f", "o", "g"];

impl LstmLayerParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            w: std::array::from_fn(|_| DenseMatrix::zeros(hidden_size, input_size)),
            u: std::array::from_fn(|_| DenseMatrix::zeros(hidden_size, hidden_size)),
            b: std::array::from_fn(|_| DenseMatrix::zeros(hidden_size, 1)),
        }
    }

    pub fn init<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_size, hidden_size);
        for m in &mut p.w {
            *m = DenseMatrix::uniform_fan_in(hidden_size, input_size, input_size, rng);
        }
        for m in &mut p.u {
            *m = DenseMatrix::uniform_fan_in(hidden_size, hidden_size, hidden_size, rng);
        }
        p
    }

    pub(crate) fn weights(&self) -> LstmWeights<'_> {
        LstmWeights {
            input: self.input_size,
            hidden: self.hidden_size,
            w: std::array::from_fn(|k| self.w[k].data.as_slice()),
            u: std::array::from_fn(|k| self.u[k].data.as_slice()),
            b: std::array::from_fn(|k| self.b[k].data.as_slice()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in self.tensors() {
            t.validate()?;
        }
        self.weights().check()
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> [Var; 12] {
        let t = self.tensors();
        std::array::from_fn(|k| tape.param(t[k]))
    }
}

impl Parameters for LstmLayerParams {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        self.w.iter().chain(&self.u).chain(&self.b).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.w.iter_mut().chain(&mut self.u).chain(&mut self.b).collect()
    }

    fn names(&self) -> Vec<String> {
        ["w", "u", "b"]
            .iter()
            .flat_map(|m| GATES.iter().map(move |g| format!("{m}_{g}")))
            .collect()
    }
}

pub(crate) struct LstmWeights<'a> {
    pub input: usize,
    pub hidden: usize,
    pub w: [&'a [f64]; 4],
    pub u: [&'a [f64]; 4],
    pub b: [&'a [f64]; 4],
}

impl LstmWeights<'_> {
    pub fn check(&self) -> Result<()> {
        let (i, h) = (self.input, self.hidden);
        let ok = self.w.iter().all(|w| w.len() == h * i)
            && self.u.iter().all(|u| u.len() == h * h)
            && self.b.iter().all(|b| b.len() == h);
        if ok && h > 0 && i > 0 {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "inconsistent LSTM layer shapes (input {i}, hidden {h})"
            )))
        }
    }
}

pub(crate) struct LstmCache {
    /// Activated gates i, f, o, g.
    pub gates: [Vec<f64>; 4],
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn lstm_step_raw(w: &LstmWeights<'_>, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmCache {
    let (i, hs) = (w.input, w.hidden);
    let gates: [Vec<f64>; 4] = std::array::from_fn(|k| {
        let mut a = w.b[k].to_vec();
        matvec_acc(w.w[k], i, x, &mut a);
        matvec_acc(w.u[k], hs, h_prev, &mut a);
        if k == 3 {
            a.iter_mut().for_each(|v| *v = v.tanh());
        } else {
            a.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
        a
    });
    let [gi, gf, go, gg] = &gates;
    let c: Vec<f64> = (0..hs).map(|k| gf[k] * c_prev[k] + gi[k] * gg[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h = (0..hs).map(|k| go[k] * tanh_c[k]).collect();
    LstmCache { gates, c, tanh_c, h }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_step_backward(
    w: &LstmWeights<'_>,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    cache: &LstmCache,
    dh: &[f64],
    dc: &[f64],
    pg: &mut [Vec<f64>; 12],
    dx: &mut [f64],
    dh_prev: &mut [f64],
    dc_prev: &mut [f64],
) {
    let (i, hs) = (w.input, w.hidden);
    let [gi, gf, go, gg] = &cache.gates;
    let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hs]);
    for k in 0..hs {
        let tc = cache.tanh_c[k];
        let dct = dc[k] + dh[k] * go[k] * (1.0 - tc * tc);
        dc_prev[k] += dct * gf[k];
        da[0][k] = dct * gg[k] * gi[k] * (1.0 - gi[k]);
        da[1][k] = dct * c_prev[k] * gf[k] * (1.0 - gf[k]);
        da[2][k] = dh[k] * tc * go[k] * (1.0 - go[k]);
        da[3][k] = dct * gi[k] * (1.0 - gg[k] * gg[k]);
    }
    for (k, d) in da.iter().enumerate() {
        outer_acc(&mut pg[k], i, d, x);
        outer_acc(&mut pg[4 + k], hs, d, h_prev);
        pg[8 + k].iter_mut().zip(d).for_each(|(g, v)| *g += v);
        matvec_t_acc(w.w[k], i, d, dx);
        matvec_t_acc(w.u[k], hs, d, dh_prev);
    }
}

/// One LSTM step, returning `(h, c)`.
pub fn lstm_cell_forward(
    p: &LstmLayerParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = p.weights();
    w.check()?;
    if x.len() != p.input_size || h_prev.len() != p.hidden_size || c_prev.len() != p.hidden_size {
        return Err(Error::Shape(format!(
            "lstm cell expects x of {} and states of {}",
            p.input_size, p.hidden_size
        )));
    }
    let c = lstm_step_raw(&w, x, h_prev, c_prev);
    Ok((c.h, c.c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmStack {
    pub layers: Vec<LstmLayerParams>,
}

impl LstmStack {
    pub fn zeros(input_size: usize, hidden_size: usize, num_layers: usize) -> Self {
        Self {
            layers: (0..num_layers)
                .map(|l| LstmLayerParams::zeros(if l == 0 { input_size } else { hidden_size }, hidden_size))
                .collect(),
        }
    }

    pub fn init<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, num_layers: usize, rng: &mut R) -> Self {
        Self {
            layers: (0..num_layers)
                .map(|l| LstmLayerParams::init(if l == 0 { input_size } else { hidden_size }, hidden_size, rng))
                .collect(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.hidden_size)
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("LSTM stack has no layers".into()));
        }
        let h = self.hidden_size();
        for (l, p) in self.layers.iter().enumerate() {
            p.validate()?;
            let expect_in = if l == 0 { self.input_size() } else { h };
            if p.hidden_size != h || p.input_size != expect_in {
                return Err(Error::Shape(format!("LSTM layer {l} does not chain")));
            }
        }
        Ok(())
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> Vec<[Var; 12]> {
        self.layers.iter().map(|l| l.bind(tape)).collect()
    }
}

impl Parameters for LstmStack {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }

    fn names(&self) -> Vec<String> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("l{i}"), l.names()).collect::<Vec<_>>())
            .collect()
    }
}

/// Runs the stack from zero states and returns the top layer's final cell state.
pub fn lstm_forward(stack: &LstmStack, seq: &[Vec<f64>]) -> Result<Vec<f64>> {
    stack.validate()?;
    if seq.is_empty() {
        return Err(Error::Shape("empty sequence".into()));
    }
    if let Some(x) = seq.iter().find(|x| x.len() != stack.input_size()) {
        return Err(Error::Shape(format!(
            "sequence element of length {} for input size {}",
            x.len(),
            stack.input_size()
        )));
    }
    let hs = stack.hidden_size();
    let mut inputs = seq.to_vec();
    let mut last_c = Vec::new();
    for layer in &stack.layers {
        let w = layer.weights();
        let (mut h, mut c) = (vec![0.0; hs], vec![0.0; hs]);
        let mut outs = Vec::with_capacity(inputs.len());
        for x in &inputs {
            let step = lstm_step_raw(&w, x, &h, &c);
            h = step.h;
            c = step.c;
            outs.push(h.clone());
        }
        last_c = c;
        inputs = outs;
    }
    Ok(last_c)
}

/// Tape version of [`lstm_forward`].
pub fn lstm_on_tape(tape: &mut Tape<'_>, vars: &[[Var; 12]], hidden: usize, seq: &[Var]) -> Result<Var> {
    if seq.is_empty() {
        return Err(Error::Shape("empty sequence".into()));
    }
    let mut inputs = seq.to_vec();
    let mut last = None;
    for params in vars {
        let mut state = tape.constant(vec![0.0; 2 * hidden]);
        let mut outs = Vec::with_capacity(inputs.len());
        for &x in &inputs {
            state = tape.lstm_step(*params, x, state)?;
            outs.push(tape.slice(state, 0, hidden)?);
        }
        last = Some(state);
        inputs = outs;
    }
    let state = last.ok_or_else(|| Error::Shape("LSTM stack has no layers".into()))?;
    tape.slice(state, hidden, hidden)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_halve_cell_state() {
        let p = LstmLayerParams::zeros(1, 1);
        let (h, c) = lstm_cell_forward(&p, &[0.9], &[0.0], &[1.0]).unwrap();
        assert_eq!(c, vec![0.5]);
        assert!((h[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.231059).abs() < 1e-6);
    }

    #[test]
    fn zero_params_from_zero_state_stay_zero() {
        let stack = LstmStack::zeros(1, 3, 2);
        let one = lstm_forward(&stack, &[vec![0.4]]).unwrap();
        let two = lstm_forward(&stack, &[vec![0.4], vec![-1.0]]).unwrap();
        assert_eq!(one, vec![0.0; 3]);
        assert_eq!(one, two);
        assert!(matches!(lstm_forward(&stack, &[]), Err(Error::Shape(_))));
    }

    #[test]
    fn tape_matches_plain_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let stack = LstmStack::init(1, 5, 2, &mut rng);
        let seq = [0.9, 0.95, 0.93, 0.91, 0.9];
        let plain = lstm_forward(&stack, &seq.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
        let mut tape = Tape::new();
        let vars = stack.bind(&mut tape);
        let xs: Vec<Var> = seq.iter().map(|&x| tape.constant(vec![x])).collect();
        let out = lstm_on_tape(&mut tape, &vars, 5, &xs).unwrap();
        assert_eq!(tape.value(out), plain.as_slice());
    }

    #[test]
    fn names_align_with_tensors() {
        let stack = LstmStack::zeros(1, 2, 2);
        assert_eq!(stack.names().len(), stack.tensors().len());
        assert_eq!(stack.names()[0], "l0.w_i");
        assert_eq!(stack.names()[23], "l1.b_g");
    }
}
