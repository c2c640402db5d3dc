#![allow(dead_code)]

use cerberus_core::cerberus::{
    total_loss, total_loss_and_grads, CerberusConfig, CerberusParams, HistoryHead, RelaxationHead,
};
use cerberus_core::harness::{bundles_for, cells_from_records, fit_normalizer_on, CycleKey};
use cerberus_core::neural::{
    bigru_forward, bigru_on_tape, grad_check, gru_cell_forward, lstm_forward, lstm_on_tape, mlp_forward, mlp_on_tape,
    mse, BiGruStack, GradCheckOptions, GradCheckReport, GruLayerParams, LstmStack, MlpParams, Parameters, Tape, Var,
};
use cerberus_core::synthcell::{default_fleet, generate_cell};
use cerberus_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn opts(seed: u64) -> GradCheckOptions {
    GradCheckOptions {
        seed,
        ..GradCheckOptions::default()
    }
}

fn values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn gru_vars(vars: &[[[Var; 9]; 2]]) -> Vec<Var> {
    vars.iter().flat_map(|l| l.iter().flatten().copied()).collect()
}

fn mlp_vars(vars: &[(Var, Var)]) -> Vec<Var> {
    vars.iter().flat_map(|&(w, b)| [w, b]).collect()
}

fn grads_of(tape: &Tape<'_>, root: Var, vars: &[Var]) -> Result<Vec<Vec<f64>>> {
    let g = tape.backward(root)?;
    Ok(vars.iter().map(|&v| g.wrt(tape, v)).collect())
}

/// One GRU step against a random target.
pub fn gru_cell(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = GruLayerParams::init(3, 4, &mut rng);
    p.randomize_normal(0.5, &mut rng);
    let (x, h, target) = (values(&mut rng, 3), values(&mut rng, 4), values(&mut rng, 4));

    let mut tape = Tape::new();
    let vars = p.bind(&mut tape);
    let (xv, hv) = (tape.constant(x.clone()), tape.constant(h.clone()));
    let out = tape.gru_step(vars, xv, hv)?;
    let root = tape.mse(out, target.clone())?;
    let analytic = grads_of(&tape, root, &vars)?;

    let loss = |q: &GruLayerParams| mse(&gru_cell_forward(q, &x, &h)?, &target);
    grad_check(&p, loss, &analytic, opts(seed))
}

/// Two-layer bi-GRU, 100-50-1 MLP and squared error on one window.
pub fn bigru_head(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head = RelaxationHead {
        rnn: BiGruStack::init(1, 6, 2, &mut rng),
        mlp: MlpParams::init(12, &[100, 50, 1], &mut rng),
    };
    head.randomize_normal(0.3, &mut rng);
    let window = values(&mut rng, 10);
    let target = rng.random_range(0.5..1.0);

    let mut tape = Tape::new();
    let rnn = head.rnn.bind(&mut tape);
    let mlp = head.mlp.bind(&mut tape);
    let seq: Vec<Var> = window.iter().map(|&v| tape.constant(vec![v])).collect();
    let feature = bigru_on_tape(&mut tape, &rnn, 6, &seq)?;
    let pred = mlp_on_tape(&mut tape, &mlp, feature)?;
    let root = tape.mse(pred, vec![target])?;
    let mut vars = gru_vars(&rnn);
    vars.extend(mlp_vars(&mlp));
    let analytic = grads_of(&tape, root, &vars)?;

    let seq: Vec<Vec<f64>> = window.iter().map(|&v| vec![v]).collect();
    let loss = |h: &RelaxationHead| mse(&mlp_forward(&h.mlp, &bigru_forward(&h.rnn, &seq)?)?, &[target]);
    grad_check(&head, loss, &analytic, opts(seed))
}

/// Two-layer LSTM, 50-20-1 MLP and squared error on one history.
pub fn lstm_head(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head = HistoryHead {
        rnn: LstmStack::init(1, 5, 2, &mut rng),
        mlp: MlpParams::init(5, &[50, 20, 1], &mut rng),
    };
    head.randomize_normal(0.3, &mut rng);
    let history: Vec<f64> = (0..14)
        .map(|i| 1.0 - 0.01 * i as f64 + rng.random_range(-0.01..0.01))
        .collect();
    let target = 0.85;

    let mut tape = Tape::new();
    let rnn = head.rnn.bind(&mut tape);
    let mlp = head.mlp.bind(&mut tape);
    let seq: Vec<Var> = history.iter().map(|&v| tape.constant(vec![v])).collect();
    let feature = lstm_on_tape(&mut tape, &rnn, 5, &seq)?;
    let pred = mlp_on_tape(&mut tape, &mlp, feature)?;
    let root = tape.mse(pred, vec![target])?;
    let mut vars: Vec<Var> = rnn.iter().flatten().copied().collect();
    vars.extend(mlp_vars(&mlp));
    let analytic = grads_of(&tape, root, &vars)?;

    let seq: Vec<Vec<f64>> = history.iter().map(|&v| vec![v]).collect();
    let loss = |h: &HistoryHead| mse(&mlp_forward(&h.mlp, &lstm_forward(&h.rnn, &seq)?)?, &[target]);
    grad_check(&head, loss, &analytic, opts(seed))
}

/// Fused loss over synthetic bundles, one of them without history.
pub fn total_loss_composite(seed: u64) -> Result<GradCheckReport> {
    let specs = default_fleet(1, 12, seed);
    let cells = cells_from_records(specs.iter().map(generate_cell).collect::<Result<Vec<_>>>()?.concat())?;
    let keys: Vec<CycleKey> = (0..12).map(|p| (0, p)).collect();
    let norm = fit_normalizer_on(&cells, &keys)?;
    let batch = bundles_for(&cells, &[(0, 0), (0, 6), (0, 11)], &norm)?;

    let config = CerberusConfig {
        gru_hidden: 4,
        lstm_hidden: 4,
        ..CerberusConfig::default()
    };
    let mut p = CerberusParams::init(config, norm, seed)?;
    p.randomize_normal(0.3, &mut ChaCha8Rng::seed_from_u64(seed));
    let (_, analytic) = total_loss_and_grads(&p, &batch)?;
    grad_check(&p, |q| total_loss(q, &batch), &analytic, opts(seed))
}
