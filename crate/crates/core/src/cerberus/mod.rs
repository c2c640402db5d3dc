//! The three-headed capacity model.
//!
//! Head a reads charge-rest windows and head b discharge-rest windows, each
//! through a stacked bidirectional GRU and an MLP. Head c reads the expanding
//! capacity history through an LSTM and an MLP and predicts the next cycle.
//! The three outputs are blended with [`fusion_weights`] of the history length.

mod checkpoint;
mod fusion;

pub use checkpoint::{checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, Checkpoint};
pub use fusion::{fusion_weights, FusionSchedule, FusionWeights};

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::battery_data::RelaxationKind;
use crate::error::{Error, Result};
use crate::featurize::{window_size, HistoryWindow, Normalizer, WindowSample, MIN_HISTORY};
use crate::neural::{
    bigru_forward, bigru_on_tape, lstm_forward, lstm_on_tape, mlp_forward, mlp_on_tape, mse, BiGruStack, DenseMatrix,
    LstmStack, MlpParams, Parameters, Tape, Var,
};

pub const MODEL_VERSION: &str = "cerberus-model/1";

/// Architecture and fusion hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CerberusConfig {
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    /// MLP layer sizes of heads a and b.
    pub relaxation_mlp: Vec<usize>,
    /// MLP layer sizes of head c.
    pub history_mlp: Vec<usize>,
    pub schedule: FusionSchedule,
}

impl Default for CerberusConfig {
    fn default() -> Self {
        Self {
            gru_hidden: 64,
            gru_layers: 2,
            lstm_hidden: 32,
            lstm_layers: 2,
            relaxation_mlp: vec![100, 50, 1],
            history_mlp: vec![50, 20, 1],
            schedule: FusionSchedule::default(),
        }
    }
}

impl CerberusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gru_hidden == 0 || self.lstm_hidden == 0 || self.gru_layers == 0 || self.lstm_layers == 0 {
            return Err(Error::Input("hidden sizes and layer counts must be positive".into()));
        }
        for sizes in [&self.relaxation_mlp, &self.history_mlp] {
            if sizes.is_empty() || sizes.contains(&0) || sizes.last() != Some(&1) {
                return Err(Error::Input(format!(
                    "MLP sizes {sizes:?} must be positive and end in 1"
                )));
            }
        }
        self.schedule.validate()
    }
}

/// Recurrent encoder plus regression MLP over a relaxation window.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationHead {
    pub rnn: BiGruStack,
    pub mlp: MlpParams,
}

/// LSTM encoder plus regression MLP over a capacity history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryHead {
    pub rnn: LstmStack,
    pub mlp: MlpParams,
}

impl Parameters for RelaxationHead {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        let mut out = self.rnn.tensors();
        out.extend(self.mlp.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out = self.rnn.tensors_mut();
        out.extend(self.mlp.tensors_mut());
        out
    }

    fn names(&self) -> Vec<String> {
        let rnn = self.rnn.names().into_iter().map(|n| format!("rnn.{n}"));
        rnn.chain(self.mlp.names().into_iter().map(|n| format!("mlp.{n}")))
            .collect()
    }
}

impl Parameters for HistoryHead {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        let mut out = self.rnn.tensors();
        out.extend(self.mlp.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out = self.rnn.tensors_mut();
        out.extend(self.mlp.tensors_mut());
        out
    }

    fn names(&self) -> Vec<String> {
        let rnn = self.rnn.names().into_iter().map(|n| format!("rnn.{n}"));
        rnn.chain(self.mlp.names().into_iter().map(|n| format!("mlp.{n}")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CerberusParams {
    pub version: String,
    pub config: CerberusConfig,
    pub normalizer: Normalizer,
    pub head_a: RelaxationHead,
    pub head_b: RelaxationHead,
    pub head_c: HistoryHead,
}

impl CerberusParams {
    pub fn zeros(config: CerberusConfig, normalizer: Normalizer) -> Result<Self> {
        config.validate()?;
        let relax = || RelaxationHead {
            rnn: BiGruStack::zeros(1, config.gru_hidden, config.gru_layers),
            mlp: MlpParams::zeros(2 * config.gru_hidden, &config.relaxation_mlp),
        };
        let p = Self {
            version: MODEL_VERSION.into(),
            head_a: relax(),
            head_b: relax(),
            head_c: HistoryHead {
                rnn: LstmStack::zeros(1, config.lstm_hidden, config.lstm_layers),
                mlp: MlpParams::zeros(config.lstm_hidden, &config.history_mlp),
            },
            config,
            normalizer,
        };
        p.validate()?;
        Ok(p)
    }

    /// Fan-in uniform weights and zero biases, heads drawn in order a, b, c.
    pub fn init(config: CerberusConfig, normalizer: Normalizer, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut relax = || RelaxationHead {
            rnn: BiGruStack::init(1, config.gru_hidden, config.gru_layers, &mut rng),
            mlp: MlpParams::init(2 * config.gru_hidden, &config.relaxation_mlp, &mut rng),
        };
        let (head_a, head_b) = (relax(), relax());
        let head_c = HistoryHead {
            rnn: LstmStack::init(1, config.lstm_hidden, config.lstm_layers, &mut rng),
            mlp: MlpParams::init(config.lstm_hidden, &config.history_mlp, &mut rng),
        };
        let p = Self {
            version: MODEL_VERSION.into(),
            config,
            normalizer,
            head_a,
            head_b,
            head_c,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn schedule(&self) -> &FusionSchedule {
        &self.config.schedule
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.normalizer.validate()?;
        for (name, head) in [("head_a", &self.head_a), ("head_b", &self.head_b)] {
            head.rnn.validate()?;
            head.mlp.validate()?;
            if head.rnn.input_size() != 1
                || head.rnn.hidden_size() != self.config.gru_hidden
                || head.rnn.layers.len() != self.config.gru_layers
                || head.mlp.input_size() != head.rnn.output_size()
                || head.mlp.sizes() != self.config.relaxation_mlp
            {
                return Err(Error::Shape(format!("{name} does not match the configuration")));
            }
        }
        let c = &self.head_c;
        c.rnn.validate()?;
        c.mlp.validate()?;
        if c.rnn.input_size() != 1
            || c.rnn.hidden_size() != self.config.lstm_hidden
            || c.rnn.layers.len() != self.config.lstm_layers
            || c.mlp.input_size() != c.rnn.hidden_size()
            || c.mlp.sizes() != self.config.history_mlp
        {
            return Err(Error::Shape("head_c does not match the configuration".into()));
        }
        Ok(())
    }

    fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> Bound {
        let mut flat = Vec::new();
        let a_rnn = self.head_a.rnn.bind(tape);
        let a_mlp = self.head_a.mlp.bind(tape);
        let b_rnn = self.head_b.rnn.bind(tape);
        let b_mlp = self.head_b.mlp.bind(tape);
        let c_rnn = self.head_c.rnn.bind(tape);
        let c_mlp = self.head_c.mlp.bind(tape);
        let push_gru = |flat: &mut Vec<Var>, vars: &[[[Var; 9]; 2]]| {
            vars.iter()
                .for_each(|l| l.iter().for_each(|d| flat.extend_from_slice(d)))
        };
        let push_mlp = |flat: &mut Vec<Var>, vars: &[(Var, Var)]| vars.iter().for_each(|&(w, b)| flat.extend([w, b]));
        push_gru(&mut flat, &a_rnn);
        push_mlp(&mut flat, &a_mlp);
        push_gru(&mut flat, &b_rnn);
        push_mlp(&mut flat, &b_mlp);
        c_rnn.iter().for_each(|l| flat.extend_from_slice(l));
        push_mlp(&mut flat, &c_mlp);
        Bound {
            a_rnn,
            a_mlp,
            b_rnn,
            b_mlp,
            c_rnn,
            c_mlp,
            flat,
        }
    }
}

impl Parameters for CerberusParams {
    fn tensors(&self) -> Vec<&DenseMatrix> {
        let mut out = Vec::new();
        for head in [&self.head_a, &self.head_b] {
            out.extend(head.rnn.tensors());
            out.extend(head.mlp.tensors());
        }
        out.extend(self.head_c.rnn.tensors());
        out.extend(self.head_c.mlp.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out = Vec::new();
        for head in [&mut self.head_a, &mut self.head_b] {
            out.extend(head.rnn.tensors_mut());
            out.extend(head.mlp.tensors_mut());
        }
        out.extend(self.head_c.rnn.tensors_mut());
        out.extend(self.head_c.mlp.tensors_mut());
        out
    }

    fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut add = |prefix: &str, names: Vec<String>| out.extend(names.into_iter().map(|n| format!("{prefix}.{n}")));
        add("head_a.rnn", self.head_a.rnn.names());
        add("head_a.mlp", self.head_a.mlp.names());
        add("head_b.rnn", self.head_b.rnn.names());
        add("head_b.mlp", self.head_b.mlp.names());
        add("head_c.rnn", self.head_c.rnn.names());
        add("head_c.mlp", self.head_c.mlp.names());
        out
    }
}

struct Bound {
    a_rnn: Vec<[[Var; 9]; 2]>,
    a_mlp: Vec<(Var, Var)>,
    b_rnn: Vec<[[Var; 9]; 2]>,
    b_mlp: Vec<(Var, Var)>,
    c_rnn: Vec<[Var; 12]>,
    c_mlp: Vec<(Var, Var)>,
    /// Leaves in [`Parameters::tensors`] order.
    flat: Vec<Var>,
}

/// Everything the model sees for one cycle of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleBundle {
    pub cell_id: String,
    /// Charge-rate condition label, e.g. `0.5C`.
    pub condition: String,
    pub cycle_index: u32,
    pub charge_windows: Vec<WindowSample>,
    pub discharge_windows: Vec<WindowSample>,
    /// Capacities through the previous cycle; absent on a cell's first cycle.
    pub history: Option<HistoryWindow>,
    /// Normalized capacity of this cycle.
    pub label: Option<f64>,
}

impl CycleBundle {
    /// Number of measured cycles in the history.
    pub fn history_len(&self) -> usize {
        self.history.as_ref().map_or(0, |h| h.real_len)
    }

    pub fn present(&self) -> [bool; 3] {
        [
            !self.charge_windows.is_empty(),
            !self.discharge_windows.is_empty(),
            self.history.is_some(),
        ]
    }

    pub fn window_count(&self) -> usize {
        self.charge_windows.len() + self.discharge_windows.len()
    }
}

fn as_sequence(values: &[f64]) -> Vec<Vec<f64>> {
    values.iter().map(|&v| vec![v]).collect()
}

fn check_window(w: &WindowSample, kind: RelaxationKind) -> Result<()> {
    if w.kind != kind || w.values.len() != window_size(kind) {
        return Err(Error::Shape(format!(
            "head expects a {kind} window of {}, got a {} window of {}",
            window_size(kind),
            w.kind,
            w.values.len()
        )));
    }
    Ok(())
}

fn relaxation_forward(head: &RelaxationHead, values: &[f64]) -> Result<f64> {
    let feature = bigru_forward(&head.rnn, &as_sequence(values))?;
    Ok(mlp_forward(&head.mlp, &feature)?[0])
}

fn history_forward(head: &HistoryHead, values: &[f64]) -> Result<f64> {
    if values.len() < MIN_HISTORY {
        return Err(Error::Shape(format!(
            "history of {} is shorter than {MIN_HISTORY}",
            values.len()
        )));
    }
    let feature = lstm_forward(&head.rnn, &as_sequence(values))?;
    Ok(mlp_forward(&head.mlp, &feature)?[0])
}

/// Normalized capacity estimate from one charge-rest window.
pub fn head_a_forward(p: &CerberusParams, window: &WindowSample) -> Result<f64> {
    check_window(window, RelaxationKind::Charge)?;
    relaxation_forward(&p.head_a, &window.values)
}

/// Normalized capacity estimate from one discharge-rest window.
pub fn head_b_forward(p: &CerberusParams, window: &WindowSample) -> Result<f64> {
    check_window(window, RelaxationKind::Discharge)?;
    relaxation_forward(&p.head_b, &window.values)
}

/// Normalized capacity prediction for cycle `end_cycle + 1`.
pub fn head_c_forward(p: &CerberusParams, history: &HistoryWindow) -> Result<f64> {
    history_forward(&p.head_c, &history.values)
}

/// Per-head outputs for one bundle, normalized.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeadEstimates {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
}

impl HeadEstimates {
    pub fn as_array(&self) -> [Option<f64>; 3] {
        [self.a, self.b, self.c]
    }
}

// Sorting first makes the mean independent of window order, bit for bit.
fn order_free_mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn head_estimates(p: &CerberusParams, bundle: &CycleBundle) -> Result<HeadEstimates> {
    let a = bundle
        .charge_windows
        .iter()
        .map(|w| head_a_forward(p, w))
        .collect::<Result<Vec<_>>>()?;
    let b = bundle
        .discharge_windows
        .iter()
        .map(|w| head_b_forward(p, w))
        .collect::<Result<Vec<_>>>()?;
    let c = bundle.history.as_ref().map(|h| head_c_forward(p, h)).transpose()?;
    Ok(HeadEstimates {
        a: order_free_mean(a),
        b: order_free_mean(b),
        c,
    })
}

/// Blends present head outputs with the renormalized weights.
pub fn fuse(estimates: &HeadEstimates, weights: &FusionWeights) -> Result<(f64, [f64; 3])> {
    let outs = estimates.as_array();
    let w = weights.renormalize(outs.map(|o| o.is_some()))?;
    let mut fused = 0.0;
    for (wi, oi) in w.iter().zip(outs) {
        if let Some(o) = oi {
            fused += wi * o;
        }
    }
    Ok((fused, w))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedEstimate {
    pub capacity_ah: f64,
    /// Effective weights after dropping absent heads.
    pub weights: [f64; 3],
    pub head_a_ah: Option<f64>,
    pub head_b_ah: Option<f64>,
    pub head_c_ah: Option<f64>,
}

/// Fused current-capacity estimate for one cycle, in Ah.
pub fn fuse_estimate(p: &CerberusParams, bundle: &CycleBundle) -> Result<FusedEstimate> {
    if !bundle.present().contains(&true) {
        return Err(Error::Input(format!(
            "cell {} cycle {}: no modality present",
            bundle.cell_id, bundle.cycle_index
        )));
    }
    let est = head_estimates(p, bundle)?;
    let (fused, weights) = fuse(&est, &fusion_weights(bundle.history_len(), p.schedule()))?;
    let ah = |v: Option<f64>| v.map(|u| p.normalizer.unit_to_capacity(u));
    Ok(FusedEstimate {
        capacity_ah: p.normalizer.unit_to_capacity(fused),
        weights,
        head_a_ah: ah(est.a),
        head_b_ah: ah(est.b),
        head_c_ah: ah(est.c),
    })
}

fn loss_weights(bundle: &CycleBundle, schedule: &FusionSchedule) -> Result<[f64; 3]> {
    let present = bundle.present();
    if present != [true; 3] {
        debug!(
            "cell {} cycle {}: modalities {present:?}, renormalizing loss weights",
            bundle.cell_id, bundle.cycle_index
        );
    }
    fusion_weights(bundle.history_len(), schedule).renormalize(present)
}

fn bundle_label(bundle: &CycleBundle) -> Result<f64> {
    bundle.label.ok_or_else(|| {
        Error::Input(format!(
            "cell {} cycle {}: bundle has no label",
            bundle.cell_id, bundle.cycle_index
        ))
    })
}

/// Weighted three-head loss of one labelled bundle.
pub fn bundle_loss(p: &CerberusParams, bundle: &CycleBundle) -> Result<f64> {
    let label = bundle_label(bundle)?;
    let w = loss_weights(bundle, p.schedule())?;
    let mut terms = Vec::with_capacity(3);
    for (head, windows, fwd) in [
        (
            0,
            &bundle.charge_windows,
            head_a_forward as fn(&CerberusParams, &WindowSample) -> Result<f64>,
        ),
        (1, &bundle.discharge_windows, head_b_forward),
    ] {
        if windows.is_empty() {
            continue;
        }
        let preds = windows.iter().map(|x| fwd(p, x)).collect::<Result<Vec<_>>>()?;
        let labels: Vec<f64> = windows.iter().map(|x| x.label).collect();
        terms.push((mse(&preds, &labels)?, w[head]));
    }
    if let Some(h) = &bundle.history {
        let pred = head_c_forward(p, h)?;
        terms.push((mse(&[pred], &[label])?, w[2]));
    }
    let mut s = 0.0;
    for (l, wi) in terms {
        s += wi * l;
    }
    Ok(s)
}

/// Batch mean of [`bundle_loss`].
pub fn total_loss(p: &CerberusParams, batch: &[CycleBundle]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let mut sum = 0.0;
    for b in batch {
        sum += bundle_loss(p, b)?;
    }
    Ok(sum / batch.len() as f64)
}

fn relaxation_on_tape(
    tape: &mut Tape<'_>,
    rnn: &[[[Var; 9]; 2]],
    mlp: &[(Var, Var)],
    hidden: usize,
    windows: &[WindowSample],
) -> Result<Var> {
    let mut preds = Vec::with_capacity(windows.len());
    for w in windows {
        let seq: Vec<Var> = w.values.iter().map(|&v| tape.constant(vec![v])).collect();
        let feature = bigru_on_tape(tape, rnn, hidden, &seq)?;
        preds.push(mlp_on_tape(tape, mlp, feature)?);
    }
    let joined = tape.concat(&preds);
    tape.mse(joined, windows.iter().map(|w| w.label).collect())
}

fn bundle_loss_on_tape(tape: &mut Tape<'_>, bound: &Bound, p: &CerberusParams, bundle: &CycleBundle) -> Result<Var> {
    let label = bundle_label(bundle)?;
    let w = loss_weights(bundle, p.schedule())?;
    let hidden = p.config.gru_hidden;
    let mut terms = Vec::with_capacity(3);
    if !bundle.charge_windows.is_empty() {
        check_all(&bundle.charge_windows, RelaxationKind::Charge)?;
        let l = relaxation_on_tape(tape, &bound.a_rnn, &bound.a_mlp, hidden, &bundle.charge_windows)?;
        terms.push((l, w[0]));
    }
    if !bundle.discharge_windows.is_empty() {
        check_all(&bundle.discharge_windows, RelaxationKind::Discharge)?;
        let l = relaxation_on_tape(tape, &bound.b_rnn, &bound.b_mlp, hidden, &bundle.discharge_windows)?;
        terms.push((l, w[1]));
    }
    if let Some(h) = &bundle.history {
        if h.values.len() < MIN_HISTORY {
            return Err(Error::Shape(format!(
                "history of {} is shorter than {MIN_HISTORY}",
                h.values.len()
            )));
        }
        let seq: Vec<Var> = h.values.iter().map(|&v| tape.constant(vec![v])).collect();
        let feature = lstm_on_tape(tape, &bound.c_rnn, p.config.lstm_hidden, &seq)?;
        let pred = mlp_on_tape(tape, &bound.c_mlp, feature)?;
        terms.push((tape.mse(pred, vec![label])?, w[2]));
    }
    tape.weighted_sum(&terms)
}

fn check_all(windows: &[WindowSample], kind: RelaxationKind) -> Result<()> {
    windows.iter().try_for_each(|w| check_window(w, kind))
}

/// [`total_loss`] and its gradient, aligned with [`Parameters::tensors`].
///
/// Bundles are processed one tape at a time in batch order, so the reduction
/// order is fixed.
pub fn total_loss_and_grads(p: &CerberusParams, batch: &[CycleBundle]) -> Result<(f64, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let mut grads = p.zero_grads();
    let mut sum = 0.0;
    for bundle in batch {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let root = bundle_loss_on_tape(&mut tape, &bound, p, bundle)?;
        sum += tape.scalar(root);
        tape.backward(root)?.accumulate_into(&bound.flat, &mut grads);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.iter_mut().flatten().for_each(|g| *g *= inv);
    Ok((sum * inv, grads))
}

/// Recursive one-step rollout of head c; returns `horizon` capacities in Ah.
pub fn predict_trajectory(p: &CerberusParams, history: &HistoryWindow, horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::Input("horizon must be at least 1".into()));
    }
    let mut values = history.values.clone();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let next = history_forward(&p.head_c, &values)?;
        values.push(next);
        out.push(p.normalizer.unit_to_capacity(next));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{grad_check, GradCheckOptions};
    use proptest::prelude::*;

    fn norm() -> Normalizer {
        Normalizer {
            mean_charge: 4.1,
            std_charge: 0.05,
            mean_discharge: 3.2,
            std_discharge: 0.1,
            capacity_scale: 3.5,
        }
    }

    fn small_config() -> CerberusConfig {
        CerberusConfig {
            gru_hidden: 3,
            lstm_hidden: 3,
            relaxation_mlp: vec![4, 3, 1],
            history_mlp: vec![4, 1],
            ..CerberusConfig::default()
        }
    }

    fn with_output_biases(mut p: CerberusParams, a: f64, b: f64, c: f64) -> CerberusParams {
        for (mlp, v) in [(&mut p.head_a.mlp, a), (&mut p.head_b.mlp, b), (&mut p.head_c.mlp, c)] {
            mlp.layers.last_mut().unwrap().bias.data[0] = v;
        }
        p
    }

    fn window(kind: RelaxationKind, offset: f64, label: f64) -> WindowSample {
        let n = window_size(kind);
        WindowSample {
            kind,
            values: (0..n).map(|i| offset + 0.1 * i as f64).collect(),
            cell_id: "c".into(),
            cycle_index: 20,
            label,
        }
    }

    fn bundle(history_len: usize, label: f64) -> CycleBundle {
        CycleBundle {
            cell_id: "c".into(),
            condition: "1C".into(),
            cycle_index: history_len as u32 + 1,
            charge_windows: vec![
                window(RelaxationKind::Charge, -0.3, label),
                window(RelaxationKind::Charge, 0.2, label),
            ],
            discharge_windows: vec![window(RelaxationKind::Discharge, 0.1, label)],
            history: Some(HistoryWindow {
                cell_id: "c".into(),
                end_cycle: history_len as u32,
                values: (0..history_len.max(MIN_HISTORY))
                    .map(|i| 1.0 - 0.001 * i as f64)
                    .collect(),
                real_len: history_len,
                target: Some(label),
            }),
            label: Some(label),
        }
    }

    #[test]
    fn zero_model_outputs_the_final_biases() {
        let p = with_output_biases(CerberusParams::zeros(small_config(), norm()).unwrap(), 0.9, 0.8, 0.7);
        let b = bundle(12, 1.0);
        assert_eq!(head_a_forward(&p, &b.charge_windows[0]).unwrap(), 0.9);
        assert_eq!(head_b_forward(&p, &b.discharge_windows[0]).unwrap(), 0.8);
        assert_eq!(head_c_forward(&p, b.history.as_ref().unwrap()).unwrap(), 0.7);
    }

    #[test]
    fn heads_reject_wrong_windows() {
        let p = CerberusParams::zeros(small_config(), norm()).unwrap();
        let d = window(RelaxationKind::Discharge, 0.0, 1.0);
        assert!(matches!(head_a_forward(&p, &d), Err(Error::Shape(_))));
        let mut c = window(RelaxationKind::Charge, 0.0, 1.0);
        c.values.pop();
        assert!(matches!(head_a_forward(&p, &c), Err(Error::Shape(_))));
        let mut h = bundle(12, 1.0).history.unwrap();
        h.values.truncate(9);
        assert!(matches!(head_c_forward(&p, &h), Err(Error::Shape(_))));
    }

    #[test]
    fn history_accepts_variable_lengths() {
        let p = CerberusParams::init(small_config(), norm(), 1).unwrap();
        for n in [10, 50] {
            let h = bundle(n, 1.0).history.unwrap();
            assert_eq!(h.values.len(), n);
            assert!(head_c_forward(&p, &h).unwrap().is_finite());
        }
    }

    #[test]
    fn fused_fixed_point_and_arithmetic() {
        let p = with_output_biases(CerberusParams::zeros(small_config(), norm()).unwrap(), 0.9, 0.9, 0.9);
        let est = fuse_estimate(&p, &bundle(40, 0.9)).unwrap();
        assert!((est.capacity_ah - 3.15).abs() < 1e-12);

        let e = HeadEstimates {
            a: Some(1.0),
            b: Some(0.9),
            c: Some(0.8),
        };
        let (f, _) = fuse(&e, &fusion_weights(10, &FusionSchedule::default())).unwrap();
        assert!((f - 0.92).abs() < 1e-12);
        assert!((norm().unit_to_capacity(f) - 3.22).abs() < 1e-12);
    }

    #[test]
    fn only_history_uses_head_c_alone() {
        let p = with_output_biases(CerberusParams::zeros(small_config(), norm()).unwrap(), 0.5, 0.6, 0.95);
        let mut b = bundle(30, 1.0);
        b.charge_windows.clear();
        b.discharge_windows.clear();
        let est = fuse_estimate(&p, &b).unwrap();
        assert_eq!(est.weights, [0.0, 0.0, 1.0]);
        assert_eq!(est.capacity_ah, 0.95 * 3.5);
        b.history = None;
        assert!(matches!(fuse_estimate(&p, &b), Err(Error::Input(_))));
    }

    #[test]
    fn equal_head_losses_give_that_loss() {
        // every head outputs 0.5 against label 0.6, so each MSE is 0.01
        let p = with_output_biases(CerberusParams::zeros(small_config(), norm()).unwrap(), 0.5, 0.5, 0.5);
        let m = (0.5f64 - 0.6) * (0.5 - 0.6);
        let sched = FusionSchedule {
            n0: 0.0,
            n_ramp: 1.0,
            w_min: 0.5,
            w_max: 0.5,
        };
        let p = CerberusParams {
            config: CerberusConfig {
                schedule: sched,
                ..p.config.clone()
            },
            ..p
        };
        let l = total_loss(&p, &[bundle(20, 0.6)]).unwrap();
        assert!((l - m).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_give_zero_loss_and_batches_average() {
        let p = with_output_biases(CerberusParams::zeros(small_config(), norm()).unwrap(), 0.8, 0.8, 0.8);
        assert_eq!(total_loss(&p, &[bundle(15, 0.8)]).unwrap(), 0.0);
        let l1 = total_loss(&p, &[bundle(15, 0.7)]).unwrap();
        let l2 = total_loss(&p, &[bundle(100, 0.9)]).unwrap();
        let both = total_loss(&p, &[bundle(15, 0.7), bundle(100, 0.9)]).unwrap();
        assert!((both - (l1 + l2) / 2.0).abs() < 1e-15);
        assert!(total_loss(&p, &[]).is_err());
    }

    #[test]
    fn missing_label_is_an_input_error() {
        let p = CerberusParams::zeros(small_config(), norm()).unwrap();
        let mut b = bundle(15, 0.8);
        b.label = None;
        assert!(matches!(total_loss(&p, &[b]), Err(Error::Input(_))));
    }

    #[test]
    fn tape_loss_matches_plain_loss() {
        let p = CerberusParams::init(small_config(), norm(), 5).unwrap();
        let batch = [bundle(3, 0.9), bundle(40, 0.85)];
        let (l, g) = total_loss_and_grads(&p, &batch).unwrap();
        assert_eq!(l, total_loss(&p, &batch).unwrap());
        assert_eq!(g.len(), p.tensors().len());
    }

    #[test]
    fn total_loss_gradient_checks() {
        let mut p = CerberusParams::init(small_config(), norm(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        p.randomize_normal(0.5, &mut rng);
        let mut partial = bundle(5, 0.9);
        partial.discharge_windows.clear();
        let batch = vec![bundle(25, 0.95), partial];
        let (_, grads) = total_loss_and_grads(&p, &batch).unwrap();
        let report = grad_check(&p, |q| total_loss(q, &batch), &grads, GradCheckOptions::default()).unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn names_align_with_tensors() {
        let p = CerberusParams::init(small_config(), norm(), 0).unwrap();
        let names = p.names();
        assert_eq!(names.len(), p.tensors().len());
        assert_eq!(names[0], "head_a.rnn.l0.fwd.w_z");
        assert!(names.last().unwrap().starts_with("head_c.mlp."));
        let mut tape = Tape::new();
        assert_eq!(p.bind(&mut tape).flat.len(), names.len());
    }

    #[test]
    fn rollout_chains_single_steps() {
        let p = CerberusParams::init(small_config(), norm(), 2).unwrap();
        let h = bundle(12, 1.0).history.unwrap();
        let three = predict_trajectory(&p, &h, 3).unwrap();
        let mut manual = h.clone();
        for expected in &three {
            let next = head_c_forward(&p, &manual).unwrap();
            assert_eq!(p.normalizer.unit_to_capacity(next), *expected);
            manual.values.push(next);
        }
        assert_eq!(
            predict_trajectory(&p, &h, 1).unwrap(),
            vec![p.normalizer.unit_to_capacity(head_c_forward(&p, &h).unwrap())]
        );
        assert!(matches!(predict_trajectory(&p, &h, 0), Err(Error::Input(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fused_estimate_is_order_free_and_inside_the_hull(seed in 0u64..1000, n in 0usize..300) {
            let p = CerberusParams::init(small_config(), norm(), seed).unwrap();
            let mut b = bundle(n.max(1), 0.9);
            b.charge_windows.push(window(RelaxationKind::Charge, 0.7, 0.9));
            let est = fuse_estimate(&p, &b).unwrap();
            let mut rev = b.clone();
            rev.charge_windows.reverse();
            prop_assert_eq!(fuse_estimate(&p, &rev).unwrap(), est);
            let heads = [est.head_a_ah.unwrap(), est.head_b_ah.unwrap(), est.head_c_ah.unwrap()];
            let lo = heads.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = heads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(est.capacity_ah >= lo - 1e-12 && est.capacity_ah <= hi + 1e-12);
        }

        #[test]
        fn total_loss_is_non_negative(seed in 0u64..1000, label in 0.5f64..1.1) {
            let p = CerberusParams::init(small_config(), norm(), seed).unwrap();
            prop_assert!(total_loss(&p, &[bundle(12, label)]).unwrap() >= 0.0);
        }
    }
}
