//! Shared fixtures for the criterion benches.

use cerberus_core::harness::{cells_from_records, prepare, CellData, PreparedData};
use cerberus_core::synthcell::{default_fleet, generate_cell};
use cerberus_core::{CerberusConfig, CerberusParams, SplitMode, SplitSpec};

/// A small synthetic fleet, already ingested.
pub fn fleet(cells: usize, cycles: u32) -> Vec<CellData> {
    let records = default_fleet(cells, cycles, 1)
        .iter()
        .flat_map(|s| generate_cell(s).expect("valid default spec"))
        .collect();
    cells_from_records(records).expect("synthetic cells ingest")
}

/// Stratified split; needs at least two cells per charge rate.
pub fn prepared(cells: &[CellData]) -> PreparedData {
    prepare(cells, &SplitSpec::new(SplitMode::StratifiedCells, 1), 0.1).expect("fleet splits")
}

/// Randomly initialized model with the given recurrent widths.
pub fn model(data: &PreparedData, gru_hidden: usize, lstm_hidden: usize) -> CerberusParams {
    let config = CerberusConfig {
        gru_hidden,
        lstm_hidden,
        ..CerberusConfig::default()
    };
    CerberusParams::init(config, data.normalizer, 1).expect("valid config")
}
