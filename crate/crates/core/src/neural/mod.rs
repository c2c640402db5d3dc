//! Differentiable building blocks: GRU, bidirectional GRU stacks, LSTM, MLP,
//! MSE, a reverse-mode tape, Adam and finite-difference gradient checking.
//!
//! Every recurrent block has two forward routes: a plain one used for
//! inference and finite differences, and a tape one used for training. Their
//! values agree bit for bit.

mod adam;
mod gradcheck;
mod gru;
mod lstm;
mod matrix;
mod mlp;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use gru::{bigru_forward, bigru_on_tape, gru_cell_forward, BiGruLayer, BiGruStack, GruLayerParams};
pub use lstm::{lstm_cell_forward, lstm_forward, lstm_on_tape, LstmLayerParams, LstmStack};
pub use matrix::{DenseMatrix, Parameters};
pub use mlp::{mlp_forward, mlp_on_tape, DenseLayer, MlpParams};
pub use tape::{Gradients, Tape, Var};

use crate::error::{Error, Result};

/// Mean of squared differences.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "mse over lengths {} and {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}
