//! Fully connected regressor: ReLU hidden layers, linear output.

use rand::Rng;

use super::matrix::{matvec_acc, DenseMatrix, Parameters};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    /// `sizes` lists the output width of each layer, e.g. `[100, 50, 1]`.
    pub fn zeros(input_size: usize, sizes: &[usize]) -> Self {
        let mut fan_in = input_size;
        let layers = sizes
            .iter()
            .map(|&out| {
                let l = DenseLayer {
                    weight: DenseMatrix::zeros(out, fan_in),
                    bias: DenseMatrix::zeros(out, 1),
                };
                fan_in = out;
                l
            })
            .collect();
        Self { layers }
    }

    pub fn init<R: Rng + ?Sized>(input_size: usize, sizes: &[usize], rng: &mut R) -> Self {
        let mut p = Self::zeros(input_size, sizes);
        for l in &mut p.layers {
            let (rows, cols) = l.weight.shape();
            l.weight = DenseMatrix::uniform_fan_in(rows, cols, cols, rng);
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.cols)
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.rows)
    }

    /// Output width of every layer.
    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.weight.rows).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("MLP has no layers".into()));
        }
        let mut fan_in = self.input_size();
        for (i, l) in self.layers.iter().enumerate() {
            l.weight.validate()?;
            l.bias.validate()?;
            if l.weight.cols != fan_in || l.bias.rows != l.weight.rows || l.bias.cols != 1 {
                return Err(Error::Shape(format!("MLP layer {i} does not chain")));
            }
            fan_in = l.weight.rows;
        }
        Ok(())
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> Vec<(Var, Var)> {
        self.layers
            .iter()
            .map(|l| (tape.param(&l.weight), tape.param(&l.bias)))
            .collect()
    }
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("l{i}.weight"), format!("l{i}.bias")])
            .collect()
    }
}

pub fn mlp_forward(p: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    p.validate()?;
    if x.len() != p.input_size() {
        return Err(Error::Shape(format!(
            "MLP expects input of {}, got {}",
            p.input_size(),
            x.len()
        )));
    }
    let last = p.layers.len() - 1;
    let mut act = x.to_vec();
    for (i, l) in p.layers.iter().enumerate() {
        let mut out = l.bias.data.clone();
        matvec_acc(&l.weight.data, l.weight.cols, &act, &mut out);
        if i < last {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        act = out;
    }
    Ok(act)
}

pub fn mlp_on_tape(tape: &mut Tape<'_>, vars: &[(Var, Var)], x: Var) -> Result<Var> {
    let last = vars
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::Shape("MLP has no layers".into()))?;
    let mut act = x;
    for (i, &(w, b)) in vars.iter().enumerate() {
        act = tape.affine(w, act, Some(b))?;
        if i < last {
            act = tape.relu(act);
        }
    }
    Ok(act)
}
