//! Hybrid battery-aging model combining relaxation-voltage estimators with a
//! capacity-history forecaster.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`battery_data`] parses canonical cycling telemetry, measures per-cycle
//!    discharge capacity by coulomb counting and extracts the zero-current
//!    rest curves that follow charge and discharge.
//! 2. [`featurize`] downsamples and z-scores those curves into fixed windows
//!    and turns capacity trajectories into expanding history windows.
//! 3. [`cerberus`] holds the three-headed model: two stacked bidirectional
//!    GRU heads over the rest curves and one LSTM head over the history,
//!    fused with a cycle-dependent confidence schedule.
//! 4. [`harness`] splits datasets, trains with Adam and reports MAPE.
//!
//! [`synthcell`] generates deterministic synthetic fleets with known ground
//! truth, and [`neural`] contains the small reverse-mode differentiation
//! engine everything is trained with.

pub mod battery_data;
pub mod cerberus;
pub mod error;
pub mod featurize;
pub mod harness;
pub mod neural;
pub mod synthcell;

pub use battery_data::{
    build_cell_history, coulomb_count_discharge, extract_relaxation, parse_cycling_csv, write_cycling_csv, CellHistory,
    CycleRecord, RelaxationCurve, RelaxationKind, Step, StepKind, TelemetryPoint, NOMINAL_CAPACITY_AH,
};
pub use cerberus::{
    fuse_estimate, fusion_weights, predict_trajectory, total_loss, CerberusConfig, CerberusParams, CycleBundle,
    FusedEstimate, FusionSchedule, FusionWeights,
};
pub use error::{Error, Result};
pub use featurize::{HistoryWindow, Normalizer, WindowSample};
pub use harness::{EvalReport, SplitMode, SplitSpec, TrainConfig};
pub use neural::{AdamConfig, DenseMatrix};
pub use synthcell::{FadeMode, SynthCellSpec};
