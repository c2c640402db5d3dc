mod common;

use common::SEEDS;

fn assert_all(name: &str, check: fn(u64) -> cerberus_core::Result<cerberus_core::neural::GradCheckReport>) {
    for seed in SEEDS {
        let report = check(seed).unwrap();
        assert!(report.max_relative_error < 1e-4, "{name} seed {seed}: {report:?}");
    }
}

#[test]
fn gru_cell_gradients() {
    assert_all("gru cell", common::gru_cell);
}

#[test]
fn bigru_head_gradients() {
    assert_all("bi-GRU head", common::bigru_head);
}

#[test]
fn lstm_head_gradients() {
    assert_all("LSTM head", common::lstm_head);
}

#[test]
fn total_loss_gradients() {
    assert_all("total loss", common::total_loss_composite);
}
