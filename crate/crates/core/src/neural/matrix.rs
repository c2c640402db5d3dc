use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`. Vectors are `n x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn column(data: Vec<f64>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let m = Self { rows, cols, data };
        m.validate()?;
        Ok(m)
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn uniform_fan_in<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| dist.sample(rng)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.data.len() != self.rows * self.cols {
            return Err(Error::Shape(format!(
                "matrix {}x{} holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite entry at flat index {i}")));
        }
        Ok(())
    }
}

/// Anything that owns an ordered list of trainable tensors.
///
/// The order of [`tensors`](Parameters::tensors), [`tensors_mut`](Parameters::tensors_mut)
/// and [`names`](Parameters::names) must agree; gradients and optimizer
/// state are indexed by it.
pub trait Parameters {
    fn tensors(&self) -> Vec<&DenseMatrix>;
    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix>;
    fn names(&self) -> Vec<String>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Overwrites every entry (biases included) with N(0, std) draws.
    fn randomize_normal<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R)
    where
        Self: Sized,
    {
        let dist = Normal::new(0.0, std).expect("valid std");
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = dist.sample(rng));
        }
    }

    fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.tensors().iter().map(|t| vec![0.0; t.len()]).collect()
    }
}

impl Parameters for DenseMatrix {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        vec![self]
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        vec![self]
    }

    fn names(&self) -> Vec<String> {
        vec!["value".into()]
    }
}

pub(crate) fn prefixed(prefix: &str, names: Vec<String>) -> impl Iterator<Item = String> + '_ {
    names.into_iter().map(move |n| format!("{prefix}.{n}"))
}

/// out = W x
#[inline]
pub(crate) fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// out += W x
#[inline]
pub(crate) fn matvec_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// out += W^T g
#[inline]
pub(crate) fn matvec_t_acc(w: &[f64], cols: usize, g: &[f64], out: &mut [f64]) {
    for (gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += gi * a;
        }
    }
}

/// grad += g x^T
#[inline]
pub(crate) fn outer_acc(grad: &mut [f64], cols: usize, g: &[f64], x: &[f64]) {
    for (gi, row) in g.iter().zip(grad.chunks_exact_mut(cols)) {
        if *gi == 0.0 {
            continue;
        }
        for (o, xj) in row.iter_mut().zip(x) {
            *o += gi * xj;
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
