//! Dataset assembly, splitting, training and evaluation.

mod dataset;
mod report;
mod split;
mod train;

pub use dataset::{
    bundles_for, carve_validation, cells_from_records, cycling_files, fit_normalizer_on, partition, prepare,
    read_cycling_dir, CellData, CycleKey, Partition, PreparedData,
};
pub use report::{cycle_rows_csv, evaluate, evaluate_bundle, mape, CycleRow, EvalReport, MapeSet};
pub use split::{split_random, split_stratified, split_stratified_ids, train_count, SplitMode, SplitSpec};
pub use train::{train, train_from, EpochLoss, TrainConfig, TrainOutcome, DIVERGENCE_LIMIT};
